"""Prompt dataset construction: template expansion and train/test splits.

A prompt corpus is generated from a small list of base formulations by
substituting sentence subjects: the six personal pronouns plus
possessive-determiner x relative-noun combinations ("My uncle", "Their
cousin", ...). Verb forms are conjugated to agree with the subject using a
per-lemma conjugation table, so the expansion is entirely config-driven and
deterministic.

Splits support three strategies: a seeded 75/25 random partition, and
leave-out partitions by pronoun class or by verb group (no class/group ever
appears on both sides).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import PathLike
from .errors import SchemaError, SplitError, TemplateError, ValidationError

VERB_FORM = "verb_form"
POSSESSIVE_FORM = "possessive_form"

#: Grammatical-person key used to conjugate for third-person noun subjects
#: such as "My uncle".
THIRD_NOUN = "third_noun"

PRONOUN_CLASSES = ("I", "you", "he", "she", "we", "they")


def _slot_count(pattern: str, slot: str) -> int:
    return pattern.count("{" + slot + "}")


@dataclass(frozen=True)
class PromptTemplate:
    """One base formulation, e.g. ``"{subject} {verb} in"``."""

    template_id: int
    text_pattern: str
    style: str
    verb_group: str
    verb_lemma: str | None = None

    def __post_init__(self):
        if self.style not in (VERB_FORM, POSSESSIVE_FORM):
            raise TemplateError(
                f"template {self.template_id}: unknown style {self.style!r}"
            )
        if self.style == VERB_FORM:
            if _slot_count(self.text_pattern, "subject") != 1:
                raise TemplateError(
                    f"template {self.template_id}: verb_form patterns need "
                    "exactly one {subject} slot"
                )
            if _slot_count(self.text_pattern, "verb") != 1:
                raise TemplateError(
                    f"template {self.template_id}: verb_form patterns need "
                    "exactly one {verb} slot"
                )
            if not self.verb_lemma:
                raise TemplateError(
                    f"template {self.template_id}: verb_form requires a verb lemma"
                )
        else:
            if _slot_count(self.text_pattern, "possessive") != 1:
                raise TemplateError(
                    f"template {self.template_id}: possessive_form patterns "
                    "need exactly one {possessive} slot"
                )
            if _slot_count(self.text_pattern, "subject") or _slot_count(
                self.text_pattern, "verb"
            ):
                raise TemplateError(
                    f"template {self.template_id}: possessive_form patterns "
                    "must not contain subject/verb slots"
                )
        if not self.verb_group:
            raise TemplateError(
                f"template {self.template_id}: verb_group must be non-empty"
            )


@dataclass(frozen=True)
class SubjectConfig:
    """Subjects and conjugations used by :func:`expand`.

    ``conjugations`` maps a verb lemma to finite forms keyed by grammatical
    person: the lowercased pronouns plus :data:`THIRD_NOUN` for
    possessive-noun subjects. ``possessive_class`` maps each possessive
    determiner to the pronoun class it belongs to ("My" -> "I").
    """

    pronouns: tuple[str, ...]
    possessives: tuple[str, ...]
    relatives: tuple[str, ...]
    conjugations: Mapping[str, Mapping[str, str]]
    possessive_class: Mapping[str, str]

    def __post_init__(self):
        if not self.pronouns and not self.possessives:
            raise ValidationError("subject config provides no subjects at all")
        for poss in self.possessives:
            if poss not in self.possessive_class:
                raise ValidationError(
                    f"possessive {poss!r} has no pronoun class mapping"
                )
        for poss, cls in self.possessive_class.items():
            if cls not in PRONOUN_CLASSES:
                raise ValidationError(
                    f"possessive {poss!r} maps to unknown pronoun class {cls!r}"
                )

    def pronoun_class(self, pronoun: str) -> str:
        cls = pronoun if pronoun == "I" else pronoun.lower()
        if cls not in PRONOUN_CLASSES:
            raise ValidationError(f"unknown pronoun {pronoun!r}")
        return cls

    def conjugate(self, lemma: str, person: str) -> str:
        try:
            forms = self.conjugations[lemma]
        except KeyError:
            raise TemplateError(f"no conjugation table for lemma {lemma!r}") from None
        try:
            return forms[person]
        except KeyError:
            raise TemplateError(
                f"lemma {lemma!r} has no form for person {person!r}"
            ) from None


@dataclass(frozen=True)
class Prompt:
    """A single expanded prompt with the metadata splits rely on."""

    text: str
    template_id: int
    subject_tag: str
    verb_group: str
    pronoun_class: str

    def __post_init__(self):
        if not self.text:
            raise ValidationError("prompt text must be non-empty")
        if self.text != self.text.rstrip():
            raise ValidationError(f"prompt text ends in whitespace: {self.text!r}")
        if "{" in self.text or "}" in self.text:
            raise ValidationError(f"prompt text contains a placeholder: {self.text!r}")
        if self.pronoun_class not in PRONOUN_CLASSES:
            raise ValidationError(f"unknown pronoun class {self.pronoun_class!r}")


@dataclass(frozen=True)
class PromptSet:
    """An ordered, duplicate-free prompt corpus with optional prior weights."""

    prompts: tuple[Prompt, ...]
    priors: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "prompts", tuple(self.prompts))
        texts = [p.text for p in self.prompts]
        if len(set(texts)) != len(texts):
            dupes = sorted({t for t in texts if texts.count(t) > 1})
            raise ValidationError(f"duplicate prompt texts: {dupes}")
        keys = [(p.template_id, p.subject_tag) for p in self.prompts]
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate (template_id, subject_tag) pairs")
        if self.priors is not None:
            priors = tuple(float(w) for w in self.priors)
            object.__setattr__(self, "priors", priors)
            if len(priors) != len(self.prompts):
                raise ValidationError("priors length does not match prompts")
            if any(not math.isfinite(w) or w <= 0 for w in priors):
                raise ValidationError("priors must be positive and finite")
            if abs(math.fsum(priors) - 1.0) > 1e-9:
                raise ValidationError("priors must sum to 1 within 1e-9")

    def texts(self) -> tuple[str, ...]:
        return tuple(p.text for p in self.prompts)

    def __len__(self) -> int:
        return len(self.prompts)

    def __iter__(self):
        return iter(self.prompts)


def expand(
    templates: Sequence[PromptTemplate], subject_config: SubjectConfig
) -> PromptSet:
    """Expand base formulations into the full prompt corpus.

    Output order is deterministic: template-major, then pronouns in config
    order, then possessive x relative combinations in config order.
    Duplicate texts (possible with overlapping templates) keep their first
    occurrence.
    """
    if not templates:
        raise ValidationError("no templates to expand")
    prompts: list[Prompt] = []
    seen: set[str] = set()

    def emit(text: str, template: PromptTemplate, tag: str, cls: str) -> None:
        if text in seen:
            return
        seen.add(text)
        prompts.append(
            Prompt(
                text=text,
                template_id=template.template_id,
                subject_tag=tag,
                verb_group=template.verb_group,
                pronoun_class=cls,
            )
        )

    for template in templates:
        if template.style == VERB_FORM:
            lemma = template.verb_lemma
            for pronoun in subject_config.pronouns:
                cls = subject_config.pronoun_class(pronoun)
                verb = subject_config.conjugate(lemma, cls)
                text = template.text_pattern.format(subject=pronoun, verb=verb)
                emit(text, template, cls, cls)
            for poss in subject_config.possessives:
                cls = subject_config.possessive_class[poss]
                verb = subject_config.conjugate(lemma, THIRD_NOUN)
                for rel in subject_config.relatives:
                    subject = f"{poss} {rel}"
                    text = template.text_pattern.format(subject=subject, verb=verb)
                    emit(text, template, f"{poss.lower()} {rel}", cls)
        else:
            for poss in subject_config.possessives:
                cls = subject_config.possessive_class[poss]
                text = template.text_pattern.format(possessive=poss)
                emit(text, template, cls, cls)
    return PromptSet(tuple(prompts))


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

SPLIT_STRATEGIES = ("random", "pronoun", "verb")
TEST_FRACTION = 0.25


def _subset(prompt_set: PromptSet, keep: Sequence[bool]) -> PromptSet:
    prompts = tuple(p for p, k in zip(prompt_set.prompts, keep) if k)
    priors = None
    if prompt_set.priors is not None:
        raw = [w for w, k in zip(prompt_set.priors, keep) if k]
        total = math.fsum(raw)
        priors = tuple(w / total for w in raw)
    return PromptSet(prompts, priors)


def _grouped_split(
    prompt_set: PromptSet,
    group_of: Mapping[str, str],
    fold_seed: int,
    holdout: Iterable[str] | None,
    kind: str,
) -> tuple[PromptSet, PromptSet]:
    groups: list[str] = []
    for prompt in prompt_set:
        g = group_of[prompt.text]
        if g not in groups:
            groups.append(g)
    if len(groups) < 2:
        raise SplitError(
            f"{kind} split needs at least 2 distinct groups, found {groups}"
        )
    if holdout is not None:
        test_groups = set(holdout)
        unknown = test_groups - set(groups)
        if unknown:
            raise SplitError(f"holdout names unknown {kind} groups: {sorted(unknown)}")
        if not test_groups or test_groups == set(groups):
            raise SplitError(f"{kind} holdout must be a proper, non-empty subset")
    else:
        rng = random.Random(fold_seed)
        shuffled = groups[:]
        rng.shuffle(shuffled)
        sizes = {g: sum(1 for p in prompt_set if group_of[p.text] == g) for g in groups}
        target = TEST_FRACTION * len(prompt_set)
        test_groups = set()
        covered = 0
        for g in shuffled:
            if covered >= target or len(test_groups) == len(groups) - 1:
                break
            test_groups.add(g)
            covered += sizes[g]
    keep_test = [group_of[p.text] in test_groups for p in prompt_set]
    train = _subset(prompt_set, [not k for k in keep_test])
    test = _subset(prompt_set, keep_test)
    return train, test


def split(
    prompt_set: PromptSet,
    strategy: str,
    fold_seed: int,
    holdout: Iterable[str] | None = None,
) -> tuple[PromptSet, PromptSet]:
    """Partition a prompt set into (train, test).

    ``random`` draws a seeded 75/25 partition. ``pronoun`` and ``verb``
    hold out whole pronoun classes / verb groups so no class or group
    appears on both sides; the held-out groups are either given explicitly
    via ``holdout`` or chosen by seeded shuffle until the test side covers
    roughly 25% of prompts.
    """
    if strategy not in SPLIT_STRATEGIES:
        raise SplitError(f"unknown split strategy {strategy!r}")
    if len(prompt_set) < 2:
        raise SplitError("cannot split fewer than 2 prompts")
    if strategy == "random":
        if holdout is not None:
            raise SplitError("holdout only applies to pronoun/verb strategies")
        n = len(prompt_set)
        test_size = max(1, round(n * TEST_FRACTION))
        if test_size >= n:
            test_size = n - 1
        rng = random.Random(fold_seed)
        indices = list(range(n))
        rng.shuffle(indices)
        test_idx = set(indices[:test_size])
        keep_test = [i in test_idx for i in range(n)]
        return _subset(prompt_set, [not k for k in keep_test]), _subset(
            prompt_set, keep_test
        )
    if strategy == "pronoun":
        group_of = {p.text: p.pronoun_class for p in prompt_set}
        return _grouped_split(prompt_set, group_of, fold_seed, holdout, "pronoun")
    group_of = {p.text: p.verb_group for p in prompt_set}
    return _grouped_split(prompt_set, group_of, fold_seed, holdout, "verb")


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def load_templates(path: PathLike) -> tuple[PromptTemplate, ...]:
    """Load templates from JSON: a list of template objects."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected a JSON list of templates")
    templates = []
    for item in raw:
        try:
            templates.append(
                PromptTemplate(
                    template_id=int(item["template_id"]),
                    text_pattern=item["text_pattern"],
                    style=item["style"],
                    verb_group=item["verb_group"],
                    verb_lemma=item.get("verb_lemma"),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: template missing field {exc}") from None
    return tuple(templates)


def load_subject_config(path: PathLike) -> SubjectConfig:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    try:
        return SubjectConfig(
            pronouns=tuple(raw["pronouns"]),
            possessives=tuple(raw["possessives"]),
            relatives=tuple(raw["relatives"]),
            conjugations={k: dict(v) for k, v in raw["conjugations"].items()},
            possessive_class=dict(raw["possessive_class"]),
        )
    except KeyError as exc:
        raise SchemaError(f"{path}: subject config missing field {exc}") from None


def _prompt_to_dict(prompt: Prompt) -> dict:
    return {
        "text": prompt.text,
        "template_id": prompt.template_id,
        "subject_tag": prompt.subject_tag,
        "verb_group": prompt.verb_group,
        "pronoun_class": prompt.pronoun_class,
    }


def _prompt_from_dict(item: Mapping) -> Prompt:
    try:
        return Prompt(
            text=item["text"],
            template_id=int(item["template_id"]),
            subject_tag=item["subject_tag"],
            verb_group=item["verb_group"],
            pronoun_class=item["pronoun_class"],
        )
    except KeyError as exc:
        raise SchemaError(f"prompt record missing field {exc}") from None


def prompt_set_to_dict(prompt_set: PromptSet) -> dict:
    return {
        "schema": "geoerasure/prompt-set/v1",
        "prompts": [_prompt_to_dict(p) for p in prompt_set],
        "priors": list(prompt_set.priors) if prompt_set.priors else None,
    }


def prompt_set_from_dict(data: Mapping) -> PromptSet:
    if not isinstance(data, Mapping) or "prompts" not in data:
        raise SchemaError("prompt-set document missing 'prompts'")
    prompts = tuple(_prompt_from_dict(item) for item in data["prompts"])
    priors = data.get("priors")
    return PromptSet(prompts, tuple(priors) if priors else None)


def save_prompt_set(prompt_set: PromptSet, path: PathLike) -> None:
    Path(path).write_text(
        json.dumps(prompt_set_to_dict(prompt_set), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_prompt_set(path: PathLike) -> PromptSet:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        return prompt_set_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def save_split_manifest(
    train: PromptSet,
    test: PromptSet,
    path: PathLike,
    *,
    strategy: str,
    fold_seed: int,
    holdout: Iterable[str] | None = None,
) -> None:
    """Persist a split so downstream tools can reuse it unchanged."""
    doc = {
        "schema": "geoerasure/split-manifest/v1",
        "strategy": strategy,
        "fold_seed": fold_seed,
        "holdout": sorted(holdout) if holdout is not None else None,
        "train": [_prompt_to_dict(p) for p in train],
        "test": [_prompt_to_dict(p) for p in test],
    }
    Path(path).write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_split_manifest(path: PathLike) -> tuple[PromptSet, PromptSet, dict]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    for key in ("strategy", "train", "test"):
        if key not in doc:
            raise SchemaError(f"{path}: split manifest missing {key!r}")
    train = PromptSet(tuple(_prompt_from_dict(p) for p in doc["train"]))
    test = PromptSet(tuple(_prompt_from_dict(p) for p in doc["test"]))
    meta = {
        "strategy": doc["strategy"],
        "fold_seed": doc.get("fold_seed"),
        "holdout": doc.get("holdout"),
    }
    return train, test, meta
