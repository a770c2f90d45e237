"""Differentiable country distributions from a causal LM.

Replicates the audit toolkit's construction exactly: for each country,
the probability of ``" " + alias`` after the prompt is chain-rule scored
over the alias's tokens and summed over all aliases of the country;
masses are then normalized over the candidate set. Everything stays
differentiable with respect to the model parameters.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import torch

from .errors import ConfigError


def alias_logprob(model, prompt_ids: Sequence[int], alias_ids: Sequence[int]) -> torch.Tensor:
    """log p(alias tokens | prompt tokens), teacher-forced."""
    if not alias_ids:
        raise ConfigError("alias tokenized to zero tokens")
    ids = torch.tensor(list(prompt_ids) + list(alias_ids), dtype=torch.long)
    logits = model.next_token_logits(ids[:-1])
    logprobs = torch.log_softmax(logits, dim=-1)
    start = len(prompt_ids) - 1
    total = logprobs[start, alias_ids[0]]
    for offset, token_id in enumerate(alias_ids[1:], start=1):
        total = total + logprobs[start + offset, token_id]
    return total


def country_log_masses(
    model,
    prompt: str,
    alias_map: Mapping[str, Sequence[str]],
    candidate_names: Sequence[str],
) -> torch.Tensor:
    """Per-country log mass: logsumexp over the country's alias scores."""
    prompt_ids = model.encode(prompt)
    masses = []
    for name in candidate_names:
        scores = [
            alias_logprob(model, prompt_ids, model.encode(" " + alias)[1:])
            for alias in alias_map[name]
        ]
        masses.append(torch.logsumexp(torch.stack(scores), dim=0))
    return torch.stack(masses)


def country_probs(
    model,
    prompt: str,
    alias_map: Mapping[str, Sequence[str]],
    candidate_names: Sequence[str],
) -> torch.Tensor:
    """Normalized candidate-country distribution for one prompt."""
    return torch.softmax(
        country_log_masses(model, prompt, alias_map, candidate_names), dim=0
    )


def batch_country_probs(
    model,
    prompts: Sequence[str],
    alias_map: Mapping[str, Sequence[str]],
    candidate_names: Sequence[str],
) -> torch.Tensor:
    """(batch, countries) probabilities, per-prompt normalization."""
    return torch.stack(
        [country_probs(model, p, alias_map, candidate_names) for p in prompts]
    )


def sequence_perplexity(model, texts: Sequence[str]) -> float:
    """exp(mean negative token log-likelihood) over the given texts."""
    if not texts:
        raise ConfigError("perplexity needs at least one text")
    total = 0.0
    count = 0
    with torch.no_grad():
        for text in texts:
            ids = model.encode(text)
            if len(ids) < 2:
                continue
            tensor = torch.tensor(ids, dtype=torch.long)
            logits = model.next_token_logits(tensor[:-1])
            logprobs = torch.log_softmax(logits, dim=-1)
            picked = logprobs[torch.arange(len(ids) - 1), tensor[1:]]
            total += float(picked.sum())
            count += len(ids) - 1
    if count == 0:
        raise ConfigError("no scoreable tokens in the perplexity texts")
    return math.exp(-total / count)
