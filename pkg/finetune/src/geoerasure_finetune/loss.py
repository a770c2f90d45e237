"""The erasure loss: the audit metric used as a training objective.

Per prompt, countries whose ground-truth probability exceeds the
predicted probability by more than a factor r contribute
``p_true * (log p_true - log p)``; the loss is the batch mean. Set
membership is recomputed on every forward pass from detached
probabilities and treated as constant within the pass: the metric is
differentiable almost everywhere, with singularities exactly where a
country enters or leaves the set, so no gradient flows through the
indicator.

At r = 0 every positive-ground-truth country is included and the loss is
the mean KL-divergence.
"""

from __future__ import annotations

import torch

from .errors import TrainingDiverged


def erasure_loss(
    country_probs: torch.Tensor, p_true: torch.Tensor, r: float
) -> torch.Tensor:
    """Mean erasure over a batch of per-prompt country distributions.

    ``country_probs``: (batch, countries), each row normalized;
    ``p_true``: (countries,). ``r >= 0``.
    """
    if country_probs.dim() != 2:
        raise ValueError("country_probs must be (batch, countries)")
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    p_true = p_true.to(country_probs.dtype)
    with torch.no_grad():
        ratios = torch.where(
            p_true > 0, p_true / country_probs.detach(), torch.zeros_like(country_probs)
        )
        mask = (ratios > r) & (p_true > 0)
    log_p_true = torch.where(p_true > 0, torch.log(p_true.clamp(min=1e-300)), torch.zeros_like(p_true))
    terms = p_true * (log_p_true - torch.log(country_probs))
    per_prompt = torch.where(mask, terms, torch.zeros_like(terms)).sum(dim=1)
    loss = per_prompt.mean()
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"erasure loss is not finite: {loss}")
    return loss


def per_prompt_erasure(
    country_probs: torch.Tensor, p_true: torch.Tensor, r: float
) -> torch.Tensor:
    """Detached per-prompt erasure values (evaluation helper)."""
    with torch.no_grad():
        probs = country_probs.detach()
        ratios = torch.where(
            p_true > 0, p_true / probs, torch.zeros_like(probs)
        )
        mask = (ratios > r) & (p_true > 0)
        log_p_true = torch.where(
            p_true > 0, torch.log(p_true.clamp(min=1e-300)), torch.zeros_like(p_true)
        )
        terms = p_true * (log_p_true - torch.log(probs))
        return torch.where(mask, terms, torch.zeros_like(terms)).sum(dim=1)
