"""Temperature calibration: minimize erasure over the softmax temperature.

Candidate log-masses are rescaled as ``p_i proportional to exp(l_i / tau)``;
the optimizer traces the erasure objective over a dense tau grid and then
refines the best cell with golden-section search. The objective is
piecewise-smooth with kinks where countries enter or leave the erasure set,
so derivative-free search is used throughout.

Two objectives are supported: the mean per-prompt erasure (default,
matching the finetuning loss) and the erasure of the uniform prompt
aggregate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import CandidateSet, ProbDist
from .errors import CapabilityError, ContractError, DomainError, ValidationError
from .scoring import ScoringBackend, perplexity

DEFAULT_INTERVAL = (0.25, 4.0)
GRID_STEP = 0.005
REFINE_TOL = 1e-4

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

OBJECTIVES = ("average", "aggregate")


@dataclass(frozen=True)
class TauCurve:
    """Erasure (and optionally perplexity) as a function of temperature."""

    tau_values: tuple[float, ...]
    er_values: tuple[float, ...]
    tau_star: float
    er_at_star: float
    perplexity_values: tuple[float, ...] | None = None
    objective: str = "average"

    def __post_init__(self):
        if len(self.tau_values) != len(self.er_values):
            raise ValidationError("one erasure value per tau required")
        if any(b <= a for a, b in zip(self.tau_values, self.tau_values[1:])):
            raise ValidationError("tau grid must be strictly increasing")
        if not (self.tau_values[0] <= self.tau_star <= self.tau_values[-1]):
            raise ValidationError(
                f"tau_star {self.tau_star} outside the searched interval"
            )
        if any(self.er_at_star > er + 1e-9 for er in self.er_values):
            raise ValidationError(
                "er_at_star exceeds a grid value; optimization is inconsistent"
            )
        if self.perplexity_values is not None and len(
            self.perplexity_values
        ) != len(self.tau_values):
            raise ValidationError("one perplexity value per tau required")


def rescale(
    candidate_set: CandidateSet, logmasses: Sequence[float], tau: float
) -> ProbDist:
    """Temperature-rescaled candidate distribution.

    ``tau = 1`` reproduces plain normalization of ``exp(logmasses)``
    exactly; ``tau -> 0`` converges to one-hot at the argmax country. The
    identity of the highest-mass country is preserved for every tau.
    """
    if not tau > 0:
        raise DomainError(f"temperature must be > 0, got {tau}")
    if len(logmasses) != len(candidate_set):
        raise ValidationError("one log-mass per candidate country required")
    for lm in logmasses:
        if not math.isfinite(lm):
            raise ValidationError("log-masses must be finite")
    scaled = [lm / tau for lm in logmasses]
    m = max(scaled)
    weights = [math.exp(s - m) for s in scaled]
    total = math.fsum(weights)
    return ProbDist(candidate_set, tuple(w / total for w in weights))


def _objective_matrix(
    logmass_rows: np.ndarray, p_true: np.ndarray, r: float, taus: np.ndarray, mode: str
) -> np.ndarray:
    """Vectorized objective over a tau grid.

    ``logmass_rows`` has shape (P, C); the result has one objective value
    per tau. Countries with zero ground truth never contribute.
    """
    values = np.zeros(len(taus), dtype=float)
    positive = p_true > 0.0
    log_p_true = np.where(positive, np.log(np.where(positive, p_true, 1.0)), 0.0)
    if mode == "average":
        for row in logmass_rows:
            scaled = row[None, :] / taus[:, None]
            scaled -= scaled.max(axis=1, keepdims=True)
            w = np.exp(scaled)
            probs = w / w.sum(axis=1, keepdims=True)
            ratios = np.where(positive[None, :], p_true[None, :] / probs, 0.0)
            mask = ratios > r
            terms = np.where(
                mask, p_true[None, :] * (log_p_true[None, :] - np.log(probs)), 0.0
            )
            values += terms.sum(axis=1)
        values /= len(logmass_rows)
        return values
    # aggregate: erasure of the mean of the rescaled per-prompt distributions
    agg = np.zeros((len(taus), logmass_rows.shape[1]), dtype=float)
    for row in logmass_rows:
        scaled = row[None, :] / taus[:, None]
        scaled -= scaled.max(axis=1, keepdims=True)
        w = np.exp(scaled)
        agg += w / w.sum(axis=1, keepdims=True)
    agg /= len(logmass_rows)
    ratios = np.where(positive[None, :], p_true[None, :] / agg, 0.0)
    mask = ratios > r
    terms = np.where(mask, p_true[None, :] * (log_p_true[None, :] - np.log(agg)), 0.0)
    return terms.sum(axis=1)


def _golden_section(f, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Minimize a unimodal-on-[lo, hi] function to interval width <= tol."""
    a, b = lo, hi
    h = b - a
    if h <= tol:
        mid = 0.5 * (a + b)
        return mid, f(mid)
    c = b - _INV_PHI * h
    d = a + _INV_PHI * h
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)


def optimize_tau(
    per_prompt_logmasses: Mapping[str, Sequence[float]],
    p_true: ProbDist,
    r: float,
    search_interval: tuple[float, float] = DEFAULT_INTERVAL,
    *,
    grid_step: float = GRID_STEP,
    refine_tol: float = REFINE_TOL,
    objective: str = "average",
) -> TauCurve:
    """Find the temperature minimizing the erasure objective.

    A dense grid over the interval locates the best cell; golden-section
    search refines within the cell's neighbours; if the interval contains
    tau = 1 it is evaluated explicitly so calibration can never report a
    worse optimum than leaving the model untouched. Deterministic for fixed
    inputs.
    """
    if objective not in OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    lo, hi = float(search_interval[0]), float(search_interval[1])
    if not (0 < lo < hi):
        raise ContractError(f"invalid search interval [{lo}, {hi}]")
    if not per_prompt_logmasses:
        raise ContractError("optimize_tau needs at least one prompt")
    m = len(p_true.candidate_set)
    rows = []
    for prompt, logmasses in per_prompt_logmasses.items():
        if len(logmasses) != m:
            raise ValidationError(
                f"prompt {prompt!r}: expected {m} log-masses, got {len(logmasses)}"
            )
        if any(not math.isfinite(x) for x in logmasses):
            raise ValidationError(f"prompt {prompt!r}: non-finite log-mass")
        rows.append([float(x) for x in logmasses])
    logmass_rows = np.asarray(rows, dtype=float)
    p_true_arr = np.asarray(p_true.probs, dtype=float)

    n_steps = int(math.floor((hi - lo) / grid_step + 1e-12))
    taus = [lo + k * grid_step for k in range(n_steps + 1)]
    if taus[-1] < hi - 1e-12:
        taus.append(hi)
    tau_grid = np.asarray(taus, dtype=float)
    er_grid = _objective_matrix(logmass_rows, p_true_arr, r, tau_grid, objective)

    def scalar_objective(tau: float) -> float:
        return float(
            _objective_matrix(
                logmass_rows, p_true_arr, r, np.asarray([tau]), objective
            )[0]
        )

    best_idx = int(np.argmin(er_grid))
    bracket_lo = tau_grid[max(0, best_idx - 1)]
    bracket_hi = tau_grid[min(len(tau_grid) - 1, best_idx + 1)]
    refined_tau, refined_er = _golden_section(
        scalar_objective, float(bracket_lo), float(bracket_hi), refine_tol
    )
    candidates = [
        (float(er_grid[best_idx]), float(tau_grid[best_idx])),
        (refined_er, refined_tau),
    ]
    if lo <= 1.0 <= hi:
        candidates.append((scalar_objective(1.0), 1.0))
    # exact value ties (e.g. a plateau of zeros) resolve toward tau = 1:
    # among equally good calibrations, prefer not to touch the model
    er_at_star, _, tau_star = min(
        (er, abs(tau - 1.0), tau) for er, tau in candidates
    )
    return TauCurve(
        tau_values=tuple(float(t) for t in tau_grid),
        er_values=tuple(float(v) for v in er_grid),
        tau_star=tau_star,
        er_at_star=er_at_star,
        objective=objective,
    )


def tau_perplexity_trace(
    backend: ScoringBackend, texts: Sequence[str], tau_values: Sequence[float]
) -> tuple[float, ...]:
    """Perplexity at each temperature, using the backend's per-token softmax."""
    if not backend.descriptor.supports_temperature:
        raise CapabilityError(
            f"backend {backend.descriptor.model_label!r} cannot rescale "
            "per-token probabilities"
        )
    if not tau_values:
        raise ValidationError("no tau values to trace")
    return tuple(perplexity(backend, texts, temperature=float(t)) for t in tau_values)


def with_perplexity(curve: TauCurve, values: Sequence[float]) -> TauCurve:
    """Attach a perplexity trace (aligned with the curve's tau grid)."""
    return TauCurve(
        tau_values=curve.tau_values,
        er_values=curve.er_values,
        tau_star=curve.tau_star,
        er_at_star=curve.er_at_star,
        perplexity_values=tuple(float(v) for v in values),
        objective=curve.objective,
    )
