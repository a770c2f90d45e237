"""Train/test splits over the shared prompt-set format.

Mirrors the audit toolkit's split semantics (the cross-component contract
is the file format, not an API): a seeded 75/25 random partition, and
leave-out partitions by pronoun class or verb group where no class or
group ever appears on both sides.
"""

from __future__ import annotations

import random
from typing import Iterable, Sequence

from .errors import SplitError
from .io import PromptRecord

STRATEGIES = ("random", "pronoun", "verb")
TEST_FRACTION = 0.25


def split_prompts(
    prompts: Sequence[PromptRecord],
    strategy: str,
    fold_seed: int,
    holdout: Iterable[str] | None = None,
) -> tuple[list[PromptRecord], list[PromptRecord]]:
    if strategy not in STRATEGIES:
        raise SplitError(f"unknown split strategy {strategy!r}")
    if len(prompts) < 2:
        raise SplitError("cannot split fewer than 2 prompts")
    if strategy == "random":
        if holdout is not None:
            raise SplitError("holdout only applies to pronoun/verb strategies")
        n = len(prompts)
        test_size = max(1, round(n * TEST_FRACTION))
        if test_size >= n:
            test_size = n - 1
        rng = random.Random(fold_seed)
        indices = list(range(n))
        rng.shuffle(indices)
        test_idx = set(indices[:test_size])
        train = [p for i, p in enumerate(prompts) if i not in test_idx]
        test = [p for i, p in enumerate(prompts) if i in test_idx]
        return train, test

    key = (
        (lambda p: p.pronoun_class) if strategy == "pronoun" else (lambda p: p.verb_group)
    )
    groups: list[str] = []
    for p in prompts:
        if key(p) not in groups:
            groups.append(key(p))
    if len(groups) < 2:
        raise SplitError(f"{strategy} split needs >= 2 groups, found {groups}")
    if holdout is not None:
        test_groups = set(holdout)
        unknown = test_groups - set(groups)
        if unknown:
            raise SplitError(f"holdout names unknown groups: {sorted(unknown)}")
        if not test_groups or test_groups == set(groups):
            raise SplitError("holdout must be a proper, non-empty subset")
    else:
        rng = random.Random(fold_seed)
        shuffled = groups[:]
        rng.shuffle(shuffled)
        sizes = {g: sum(1 for p in prompts if key(p) == g) for g in groups}
        target = TEST_FRACTION * len(prompts)
        test_groups: set[str] = set()
        covered = 0
        for g in shuffled:
            if covered >= target or len(test_groups) == len(groups) - 1:
                break
            test_groups.add(g)
            covered += sizes[g]
    train = [p for p in prompts if key(p) not in test_groups]
    test = [p for p in prompts if key(p) in test_groups]
    return train, test
