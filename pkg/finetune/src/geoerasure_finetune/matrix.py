"""The mitigation comparison matrix: splits x thresholds x folds.

Each cell finetunes a fresh model on one (split strategy, r) combination
over several folds and reports final train/test loss and perplexity as
mean with min/max over folds. A temperature column can be imported from
an audit-toolkit tau-curve document for side-by-side comparison with the
single-parameter mitigation.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import FinetuneError
from .io import PromptRecord, load_tau_curve
from .splits import split_prompts
from .training import FinetuneConfig, FinetuneRunResult, train

logger = logging.getLogger(__name__)

DEFAULT_SPLITS = ("random", "pronoun", "verb")
DEFAULT_R_VALUES = (3.0, 0.0)


def matrix_cells(
    splits: Sequence[str] = DEFAULT_SPLITS,
    r_values: Sequence[float] = DEFAULT_R_VALUES,
    folds: int = 5,
) -> list[tuple[str, float, int]]:
    """Enumerate (split, r, fold) runs; 3 x 2 x 5 = 30 by default."""
    return [
        (strategy, r, fold)
        for strategy in splits
        for r in r_values
        for fold in range(folds)
    ]


def _summary(values: Sequence[float]) -> dict:
    return {
        "mean": math.fsum(values) / len(values),
        "min": min(values),
        "max": max(values),
    }


def run_matrix(
    config: FinetuneConfig,
    prompts: Sequence[PromptRecord],
    model_factory: Callable[[], object],
    alias_map: Mapping[str, Sequence[str]],
    candidate_names: Sequence[str],
    p_true_probs: Sequence[float],
    heldout_texts: Sequence[str],
    *,
    splits: Sequence[str] = DEFAULT_SPLITS,
    r_values: Sequence[float] = DEFAULT_R_VALUES,
    tau_curve_path: str | Path | None = None,
    checkpoint_dir: Path | None = None,
) -> dict:
    """Run the full grid; failed folds mark their cell instead of aborting."""
    cells = {}
    any_failed = False
    for strategy in splits:
        for r in r_values:
            runs: list[FinetuneRunResult] = []
            failures: list[str] = []
            for fold in range(config.folds):
                fold_seed = config.seed + fold
                cell_config = dataclasses.replace(
                    config, r=r, split_strategy=strategy, seed=fold_seed
                )
                try:
                    train_side, test_side = split_prompts(
                        prompts, strategy, fold_seed
                    )
                    model = model_factory()
                    runs.append(
                        train(
                            cell_config,
                            model,
                            train_side,
                            test_side,
                            alias_map,
                            candidate_names,
                            p_true_probs,
                            heldout_texts,
                            fold_id=fold,
                            checkpoint_dir=checkpoint_dir,
                        )
                    )
                except FinetuneError as exc:
                    logger.error(
                        "fold %d of (%s, r=%g) failed: %s", fold, strategy, r, exc
                    )
                    failures.append(f"fold {fold}: {exc}")
            key = f"{strategy}:r={r:g}"
            if runs:
                cells[key] = {
                    "split": strategy,
                    "r": r,
                    "folds_completed": len(runs),
                    "train_loss": _summary([x.final_train_er for x in runs]),
                    "test_loss": _summary([x.final_test_er for x in runs]),
                    "perplexity": _summary([x.final_perplexity for x in runs]),
                    "baseline_train_loss": _summary([x.train_er[0] for x in runs]),
                    "baseline_test_loss": _summary([x.test_er[0] for x in runs]),
                    "baseline_perplexity": _summary([x.perplexity[0] for x in runs]),
                    "failures": failures,
                    "runs": [x.to_dict() for x in runs],
                }
            else:
                cells[key] = {
                    "split": strategy,
                    "r": r,
                    "folds_completed": 0,
                    "failed": True,
                    "failures": failures,
                }
            if failures:
                any_failed = True
    doc = {
        "schema": "geoerasure/finetune-matrix/v1",
        "cells": cells,
        "grid": {
            "splits": list(splits),
            "r_values": list(r_values),
            "folds": config.folds,
            "runs": len(splits) * len(r_values) * config.folds,
        },
        "any_failed": any_failed,
    }
    if tau_curve_path is not None:
        curve = load_tau_curve(tau_curve_path)
        doc["temperature_column"] = {
            "tau_star": curve["tau_star"],
            "train_loss": curve["er_at_star"],
            "test_loss": None,
            "perplexity": curve.get("perplexity_at_star"),
            "source": str(Path(tau_curve_path).name),
        }
    return doc
