"""The measurement core: erasure sets, the ER metric, KL and aggregation.

A country is *erased* under a prediction when its ground-truth probability
exceeds the predicted probability by more than a factor r. The erasure
value ER at threshold r is the ground-truth-weighted sum of log ratios over
the erased countries; it is an additive component of KL(p_true || p), so
ER plus the complementary sum over non-erased countries reconstructs the
KL-divergence exactly.

All sums use ``math.fsum`` so the decomposition identity holds to within a
few ulps regardless of country count, and set/metric monotonicity in r is
exact rather than approximate.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import CandidateSet, Country, ProbDist, require_same_candidate_set
from .errors import (
    ContractError,
    DomainError,
    ValidationError,
    ZeroPredictionError,
)

DEFAULT_R = 3.0
DEFAULT_R_CANDIDATES = range(2, 21)


@dataclass(frozen=True)
class ErasureSet:
    """Countries underpredicted by more than a factor ``threshold_r``."""

    threshold_r: float
    members: tuple[Country, ...]
    ratios: tuple[float, ...]

    def __post_init__(self):
        if not self.threshold_r > 1.0:
            raise ValidationError(
                f"erasure-set threshold must be > 1, got {self.threshold_r}"
            )
        if len(self.members) != len(self.ratios):
            raise ValidationError("one ratio per member required")
        for country, r in zip(self.members, self.ratios):
            if not r > self.threshold_r:
                raise ValidationError(
                    f"{country.canonical_name!r} has ratio {r}, not above "
                    f"threshold {self.threshold_r}"
                )

    @property
    def size(self) -> int:
        return len(self.members)

    def names(self) -> tuple[str, ...]:
        return tuple(c.canonical_name for c in self.members)

    def as_mapping(self) -> dict[str, float]:
        return {c.canonical_name: r for c, r in zip(self.members, self.ratios)}

    def __contains__(self, name: object) -> bool:
        return any(c.canonical_name == name for c in self.members)


def _log_terms(p_true: ProbDist, p: ProbDist) -> list[tuple[float, float, float]]:
    """Per-country (ratio, term, p_true_i); raises on support violations.

    Countries with zero ground-truth probability contribute nothing and get
    ratio 0 so they never enter an erasure set.
    """
    require_same_candidate_set(p_true, p)
    rows = []
    for country, pt, pp in zip(p_true.candidate_set, p_true.probs, p.probs):
        if pt == 0.0:
            rows.append((0.0, 0.0, pt))
            continue
        if pp <= 0.0:
            raise ZeroPredictionError(country.canonical_name)
        ratio = pt / pp
        rows.append((ratio, pt * math.log(ratio), pt))
    return rows


def erasure_set(p_true: ProbDist, p: ProbDist, r: float) -> ErasureSet:
    """Countries whose ground-truth/predicted ratio strictly exceeds r."""
    if not r > 1.0:
        raise ValidationError(f"erasure sets are defined for r > 1, got {r}")
    rows = _log_terms(p_true, p)
    members = []
    ratios = []
    for country, (ratio, _, _) in zip(p_true.candidate_set, rows):
        if ratio > r:
            members.append(country)
            ratios.append(ratio)
    return ErasureSet(threshold_r=float(r), members=tuple(members), ratios=tuple(ratios))


def erasure(p_true: ProbDist, p: ProbDist, r: float) -> float:
    """ER at threshold r: sum of p_true_i * ln(p_true_i / p_i) over the
    erased countries.

    r >= 0 is accepted so the KL limit is testable; the audit surfaces
    restrict themselves to r > 1. Returns 0 for an empty erasure set.
    """
    if r < 0:
        raise ValidationError(f"r must be >= 0, got {r}")
    rows = _log_terms(p_true, p)
    return math.fsum(term for ratio, term, _ in rows if ratio > r)


def erasure_complement(p_true: ProbDist, p: ProbDist, r: float) -> float:
    """The non-erased remainder of the KL decomposition."""
    if r < 0:
        raise ValidationError(f"r must be >= 0, got {r}")
    rows = _log_terms(p_true, p)
    return math.fsum(term for ratio, term, _ in rows if not ratio > r)


def kl(p_true: ProbDist, p: ProbDist) -> float:
    """KL(p_true || p) in nats; terms with p_true_i = 0 contribute 0."""
    for country, pt, pp in zip(p_true.candidate_set, p_true.probs, p.probs):
        if pt > 0.0 and pp <= 0.0:
            raise DomainError(
                f"KL support violation: p({country.canonical_name!r}) = 0 "
                "where ground truth is positive"
            )
    rows = _log_terms(p_true, p)
    return math.fsum(term for _, term, _ in rows)


# ---------------------------------------------------------------------------
# Choice of r
# ---------------------------------------------------------------------------


def choose_r(
    per_prompt_preds: Mapping[str, ProbDist],
    p_true: ProbDist,
    r_candidates: Sequence[int] = DEFAULT_R_CANDIDATES,
    objective: str = "median",
) -> int:
    """Pick the integer r for which ER best matches the KL-divergence.

    ``median`` (default) minimizes |median over prompts of ER^r - median
    over prompts of KL|; ``aggregate`` compares ER and KL of the uniform
    prompt aggregate instead. Ties go to the smaller r.
    """
    candidates = [int(r) for r in r_candidates]
    if not candidates:
        raise ContractError("choose_r needs a non-empty candidate range")
    if not per_prompt_preds:
        raise ContractError("choose_r needs at least one prompt prediction")
    if objective not in ("median", "aggregate"):
        raise ValidationError(f"unknown choose_r objective {objective!r}")
    if objective == "median":
        kls = [kl(p_true, pred) for pred in per_prompt_preds.values()]
        kl_ref = statistics.median(kls)

        def gap(r: int) -> float:
            ers = [erasure(p_true, pred, r) for pred in per_prompt_preds.values()]
            return abs(statistics.median(ers) - kl_ref)

    else:
        agg = aggregate_uniform(per_prompt_preds)
        kl_ref = kl(p_true, agg)

        def gap(r: int) -> float:
            return abs(erasure(p_true, agg, r) - kl_ref)

    best_r = None
    best_gap = math.inf
    for r in sorted(candidates):
        g = gap(r)
        if g < best_gap:
            best_r, best_gap = r, g
    return best_r


# ---------------------------------------------------------------------------
# Prompt aggregation
# ---------------------------------------------------------------------------


def aggregate_uniform(per_prompt_preds: Mapping[str, ProbDist]) -> ProbDist:
    """Uniform prompt marginal: the arithmetic mean of the predictions."""
    if not per_prompt_preds:
        raise ContractError("aggregation needs at least one prompt prediction")
    dists = list(per_prompt_preds.values())
    candidate_set = require_same_candidate_set(*dists)
    n = len(dists)
    probs = tuple(
        math.fsum(d.probs[i] for d in dists) / n for i in range(len(candidate_set))
    )
    return ProbDist(candidate_set, probs)


def aggregate_model(
    per_prompt_preds: Mapping[str, ProbDist],
    prompt_logprobs: Mapping[str, float],
) -> ProbDist:
    """Model-induced prompt marginal.

    Prompts are weighted by their own probability under the model,
    normalized over the prompt set. Weights are computed from log
    probabilities with max-subtraction for numerical stability.
    """
    if not per_prompt_preds:
        raise ContractError("aggregation needs at least one prompt prediction")
    if set(per_prompt_preds) != set(prompt_logprobs):
        raise ContractError("prompt keys of predictions and logprobs differ")
    for prompt, lp in prompt_logprobs.items():
        if not math.isfinite(lp):
            raise ValidationError(f"non-finite prompt logprob for {prompt!r}")
    dists = list(per_prompt_preds.values())
    candidate_set = require_same_candidate_set(*dists)
    weights = prompt_weights(prompt_logprobs)
    ordered = [weights[prompt] for prompt in per_prompt_preds]
    probs = tuple(
        math.fsum(w * d.probs[i] for w, d in zip(ordered, dists))
        for i in range(len(candidate_set))
    )
    return ProbDist.from_weights(candidate_set, probs)


def prompt_weights(prompt_logprobs: Mapping[str, float]) -> dict[str, float]:
    """Normalized prompt prior p(c | M) from per-prompt log-probabilities."""
    if not prompt_logprobs:
        raise ContractError("no prompt logprobs to normalize")
    m = max(prompt_logprobs.values())
    raw = {prompt: math.exp(lp - m) for prompt, lp in prompt_logprobs.items()}
    total = math.fsum(raw.values())
    return {prompt: w / total for prompt, w in raw.items()}


def per_country_ratios(p_true: ProbDist, p: ProbDist) -> dict[str, float]:
    """Underprediction ratio for every candidate country."""
    rows = _log_terms(p_true, p)
    return {
        country.canonical_name: ratio
        for country, (ratio, _, _) in zip(p_true.candidate_set, rows)
    }
