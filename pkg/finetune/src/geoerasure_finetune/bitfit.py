"""Bias-only parameter selection (BitFit-style).

Exactly the additive bias parameters stay trainable; everything else is
frozen in place. Works for any module whose biases are registered under a
parameter name ending in ``bias`` (Linear, LayerNorm, attention
projections, transformers' Conv1D, ...).
"""

from __future__ import annotations

import logging

import torch
from torch import nn

from .errors import ConfigError

logger = logging.getLogger(__name__)


def is_bias_parameter(name: str) -> bool:
    return name.split(".")[-1] == "bias"


def bias_only_filter(model: nn.Module) -> list[torch.nn.Parameter]:
    """Freeze everything but additive biases; return the trainable subset."""
    trainable = []
    n_total = 0
    n_trainable = 0
    for name, param in model.named_parameters():
        n_total += param.numel()
        if is_bias_parameter(name):
            param.requires_grad_(True)
            trainable.append(param)
            n_trainable += param.numel()
        else:
            param.requires_grad_(False)
    if not trainable:
        raise ConfigError("model has no bias parameters to train")
    logger.info(
        "bias-only filter: %d of %d parameters trainable (%.4f%%)",
        n_trainable,
        n_total,
        100.0 * n_trainable / n_total,
    )
    return trainable


def parameter_census(model: nn.Module) -> dict[str, int]:
    """Total vs bias parameter counts."""
    total = 0
    bias = 0
    for name, param in model.named_parameters():
        total += param.numel()
        if is_bias_parameter(name):
            bias += param.numel()
    return {"total": total, "bias": bias}
