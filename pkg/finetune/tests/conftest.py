import json
from pathlib import Path

import pytest

from geoerasure_finetune.io import (
    PromptRecord,
    ground_truth_probs,
    load_aliases,
    load_population,
    load_prompts,
)

FIXTURES = Path(__file__).parent / "fixtures"
HELDOUT = (
    Path(__file__).parents[1]
    / "src"
    / "geoerasure_finetune"
    / "data"
    / "heldout.txt"
)


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def loss_oracle():
    return json.loads((FIXTURES / "loss_oracle.json").read_text())


@pytest.fixture(scope="session")
def heldout_texts():
    return [l for l in HELDOUT.read_text().splitlines() if l.strip()]


def _smoke_prompts() -> list[PromptRecord]:
    pronouns = [
        ("I", "I"), ("You", "you"), ("He", "he"),
        ("She", "she"), ("We", "we"), ("They", "they"),
    ]
    groups = [
        ("live in", "{s} {v} in", "live", "lives"),
        ("reside in", "{s} {v} in", "reside", "resides"),
        ("come from", "{s} {v} from", "come", "comes"),
        ("grew up in", "{s} grew up in", None, None),
    ]
    prompts = []
    for gi, (group, pattern, base, third) in enumerate(groups):
        for pronoun, cls in pronouns:
            if base is None:
                text = pattern.format(s=pronoun)
            else:
                verb = third if cls in ("he", "she") else base
                text = pattern.format(s=pronoun, v=verb)
            prompts.append(PromptRecord(text, gi, cls, group, cls))
    return prompts


class SmokeWorld:
    """A 6-country, 24-prompt world small enough for CPU training."""

    names = ("Avaria", "Brundia", "Corvia", "Dalmora", "Elbonia", "Floria")

    def __init__(self, heldout_texts):
        self.alias_map = {n: [n] for n in self.names}
        self.alias_map["Corvia"] = ["Corvia", "Corvian Republic"]
        counts = dict(zip(self.names, [400, 250, 150, 100, 60, 40]))
        total = sum(counts.values())
        self.p_true = [counts[n] / total for n in self.names]
        self.prompts = _smoke_prompts()
        self.heldout_texts = list(heldout_texts)
        self.corpus = (
            [p.text for p in self.prompts]
            + [a for lst in self.alias_map.values() for a in lst]
            + self.heldout_texts
        )


@pytest.fixture(scope="session")
def smoke_world(heldout_texts):
    return SmokeWorld(heldout_texts)


@pytest.fixture(scope="session")
def small_inputs():
    prompts = load_prompts(FIXTURES / "prompts_small.json")
    population = load_population(FIXTURES / "population.csv")
    alias_map = load_aliases(FIXTURES / "aliases.json")
    names = [n for n in alias_map if n in population]
    return prompts, alias_map, names, ground_truth_probs(population, names)
