"""Finetuning against the erasure loss with bias-only updates.

The optimizer is AdamW with a linear schedule: warmup from 0 to the peak
learning rate over the first epoch, then linear decay to 0 over the
remaining epochs. Dropout is 0 everywhere (deterministic forward passes);
training batches keep the prompt order fixed so identical seeds reproduce
identical runs. Metrics (train/test mean erasure at the loss threshold,
plus perplexity on a pinned held-out text) are recorded before training
and after every epoch; a checkpoint is written per epoch and preserved if
the loss diverges.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch

from .bitfit import bias_only_filter
from .errors import ConfigError, TrainingDiverged
from .io import PromptRecord
from .loss import erasure_loss, per_prompt_erasure
from .scoring import batch_country_probs, sequence_perplexity


@dataclass(frozen=True)
class FinetuneConfig:
    model: str = "tiny"
    r: float = 3.0
    learning_rate: float = 3e-5
    epochs: int = 5
    warmup_epochs: int = 1
    batch_size: int = 16
    bias_only: bool = True
    split_strategy: str = "random"
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.folds < 1:
            raise ConfigError(f"fold count must be >= 1, got {self.folds}")
        if self.r < 0:
            raise ConfigError(f"r must be >= 0, got {self.r}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class FinetuneRunResult:
    fold_id: int
    r: float
    split_strategy: str
    train_er: tuple[float, ...]  # epochs + 1 entries, index 0 = baseline
    test_er: tuple[float, ...]
    perplexity: tuple[float, ...]
    final_train_er: float
    final_test_er: float
    final_perplexity: float
    wall_clock_seconds: float
    trainable_parameters: int
    total_parameters: int

    def __post_init__(self):
        expected = len(self.train_er)
        if len(self.test_er) != expected or len(self.perplexity) != expected:
            raise ConfigError("metric series lengths disagree")

    def to_dict(self) -> dict:
        return {
            "fold_id": self.fold_id,
            "r": self.r,
            "split_strategy": self.split_strategy,
            "train_er": list(self.train_er),
            "test_er": list(self.test_er),
            "perplexity": list(self.perplexity),
            "final_train_er": self.final_train_er,
            "final_test_er": self.final_test_er,
            "final_perplexity": self.final_perplexity,
            "wall_clock_seconds": self.wall_clock_seconds,
            "trainable_parameters": self.trainable_parameters,
            "total_parameters": self.total_parameters,
        }


def _linear_schedule(step: int, total_steps: int, warmup_steps: int) -> float:
    """Multiplier for the peak learning rate at a given optimizer step."""
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    if total_steps <= warmup_steps:
        return 1.0
    remaining = total_steps - warmup_steps
    done = step - warmup_steps
    return max(0.0, (remaining - done) / remaining)


def _mean_er(model, prompts, alias_map, names, p_true, r) -> float:
    if not prompts:
        return 0.0
    probs = batch_country_probs(model, [p.text for p in prompts], alias_map, names)
    return float(per_prompt_erasure(probs, p_true, r).mean())


def train(
    config: FinetuneConfig,
    model: torch.nn.Module,
    train_prompts: Sequence[PromptRecord],
    test_prompts: Sequence[PromptRecord],
    alias_map: Mapping[str, Sequence[str]],
    candidate_names: Sequence[str],
    p_true_probs: Sequence[float],
    heldout_texts: Sequence[str],
    *,
    fold_id: int = 0,
    checkpoint_dir: Path | None = None,
) -> FinetuneRunResult:
    """Run one finetuning fold and return its metric series."""
    if not train_prompts:
        raise ConfigError("no training prompts")
    torch.manual_seed(config.seed)
    p_true = torch.tensor(list(p_true_probs), dtype=torch.get_default_dtype())
    names = list(candidate_names)

    if config.bias_only:
        params = bias_only_filter(model)
    else:
        for p in model.parameters():
            p.requires_grad_(True)
        params = list(model.parameters())
    n_trainable = sum(p.numel() for p in params)
    n_total = sum(p.numel() for p in model.parameters())

    batches = [
        [p.text for p in train_prompts[i : i + config.batch_size]]
        for i in range(0, len(train_prompts), config.batch_size)
    ]
    steps_per_epoch = len(batches)
    total_steps = steps_per_epoch * config.epochs
    warmup_steps = steps_per_epoch * config.warmup_epochs

    # no weight decay: decaying additive biases would steadily undo the
    # very tilt the loss is trying to learn once the erasure set empties
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate, weight_decay=0.0)

    def evaluate():
        model.eval()
        with torch.no_grad():
            train_er = _mean_er(model, train_prompts, alias_map, names, p_true, config.r)
            test_er = _mean_er(model, test_prompts, alias_map, names, p_true, config.r)
            ppl = sequence_perplexity(model, heldout_texts)
        return train_er, test_er, ppl

    def checkpoint(tag: str):
        if checkpoint_dir is not None:
            checkpoint_dir.mkdir(parents=True, exist_ok=True)
            torch.save(
                model.state_dict(), checkpoint_dir / f"fold{fold_id}_{tag}.pt"
            )

    started = time.perf_counter()
    train_series = []
    test_series = []
    ppl_series = []
    tr, te, ppl = evaluate()
    train_series.append(tr)
    test_series.append(te)
    ppl_series.append(ppl)
    checkpoint("epoch0")

    step = 0
    for epoch in range(1, config.epochs + 1):
        model.train()
        for batch in batches:
            lr = config.learning_rate * _linear_schedule(
                step, total_steps, warmup_steps
            )
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.zero_grad()
            probs = batch_country_probs(model, batch, alias_map, names)
            try:
                loss = erasure_loss(probs, p_true, config.r)
            except TrainingDiverged:
                checkpoint(f"diverged_epoch{epoch}")
                raise
            loss.backward()
            optimizer.step()
            step += 1
        tr, te, ppl = evaluate()
        train_series.append(tr)
        test_series.append(te)
        ppl_series.append(ppl)
        checkpoint(f"epoch{epoch}")

    elapsed = time.perf_counter() - started
    return FinetuneRunResult(
        fold_id=fold_id,
        r=config.r,
        split_strategy=config.split_strategy,
        train_er=tuple(train_series),
        test_er=tuple(test_series),
        perplexity=tuple(ppl_series),
        final_train_er=train_series[-1],
        final_test_er=test_series[-1],
        final_perplexity=ppl_series[-1],
        wall_clock_seconds=elapsed,
        trainable_parameters=n_trainable,
        total_parameters=n_total,
    )
