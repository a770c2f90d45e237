"""Erasure report assembly, bootstrap confidence intervals, persistence.

A report captures everything one audit run produced: per-prompt erasure,
both prompt aggregates with their erasure sets, dispersion statistics over
prompts (boxplot bands), per-country underprediction ratios, and a seeded
nonparametric bootstrap interval for the average erasure. Reports are
serialized as canonical JSON (sorted keys, no volatile fields) so repeated
runs of the same configuration produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import CandidateSet, Country, GroundTruth, PathLike, ProbDist
from .errors import (
    BackendError,
    ContractError,
    ReportError,
    SchemaError,
    ValidationError,
)
from .metrics import (
    ErasureSet,
    aggregate_model,
    aggregate_uniform,
    erasure,
    erasure_set,
    kl,
    per_country_ratios,
    prompt_weights,
)
from .prompts import PromptSet
from .scoring import ScoringBackend, country_distribution, sequence_logprob

REPORT_SCHEMA = "geoerasure/report/v1"
BOOTSTRAP_RESAMPLES = 10_000
BOOTSTRAP_CHUNK = 1_000


@dataclass(frozen=True)
class AggregateResult:
    """One prompt aggregate: its distribution, erasure value and set."""

    probs: tuple[float, ...]
    er: float
    erasure_set: ErasureSet


@dataclass(frozen=True)
class ErasureReport:
    r: float
    candidate_names: tuple[str, ...]
    ground_truth_probs: tuple[float, ...]
    source_label: str
    per_prompt_er: dict[str, float]
    per_prompt_probs: dict[str, tuple[float, ...]]
    per_prompt_sets: dict[str, dict[str, float]]
    prompt_logprobs: dict[str, float]
    aggregate_uniform: AggregateResult
    aggregate_model: AggregateResult
    prompt_weights: dict[str, float]
    average_er: float
    dispersion: dict[str, float]
    bootstrap: dict[str, object]
    per_country_ratios: dict[str, float]
    metadata: dict = field(default_factory=dict)

    @property
    def aggregate_uniform_er(self) -> float:
        return self.aggregate_uniform.er

    @property
    def aggregate_model_er(self) -> float:
        return self.aggregate_model.er


def boxplot_stats(values: Sequence[float]) -> dict[str, float]:
    """min / 25th / median / 75th / max over per-prompt erasure values."""
    if not values:
        raise ValidationError("no values to summarize")
    arr = np.asarray(values, dtype=float)
    q25, median, q75 = np.percentile(arr, [25.0, 50.0, 75.0])
    return {
        "min": float(arr.min()),
        "p25": float(q25),
        "median": float(median),
        "p75": float(q75),
        "max": float(arr.max()),
    }


def bootstrap_mean_ci(
    values: Sequence[float],
    resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    confidence: float = 0.95,
) -> tuple[float, float]:
    """Seeded percentile bootstrap CI for the mean of ``values``."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError("cannot bootstrap an empty sample")
    rng = np.random.default_rng(seed)
    means = np.empty(resamples, dtype=float)
    done = 0
    while done < resamples:
        chunk = min(BOOTSTRAP_CHUNK, resamples - done)
        idx = rng.integers(0, arr.size, size=(chunk, arr.size))
        means[done : done + chunk] = arr[idx].mean(axis=1)
        done += chunk
    alpha = 100.0 * (1.0 - confidence) / 2.0
    low, high = np.percentile(means, [alpha, 100.0 - alpha])
    return float(low), float(high)


def _score_prompts(
    backend: ScoringBackend,
    prompt_texts: Sequence[str],
    candidate_set: CandidateSet,
    temperature: float,
    workers: int,
) -> tuple[dict[str, ProbDist], dict[str, float], list[tuple[str, str]]]:
    """Score all prompts, collecting failures instead of failing fast."""

    def one(text: str):
        dist = country_distribution(backend, text, candidate_set, temperature)
        logprob = sequence_logprob(backend, text)
        return dist, logprob

    dists: dict[str, ProbDist] = {}
    logprobs: dict[str, float] = {}
    failures: list[tuple[str, str]] = []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, text) for text in prompt_texts]
            for text, future in zip(prompt_texts, futures):
                try:
                    dists[text], logprobs[text] = future.result()
                except BackendError as exc:
                    failures.append((text, str(exc)))
    else:
        for text in prompt_texts:
            try:
                dists[text], logprobs[text] = one(text)
            except BackendError as exc:
                failures.append((text, str(exc)))
    return dists, logprobs, failures


def build_report(
    backend: ScoringBackend,
    prompt_set: PromptSet,
    candidate_set: CandidateSet,
    ground_truth: GroundTruth,
    r: float,
    *,
    temperature: float = 1.0,
    seed: int = 0,
    workers: int = 1,
    bootstrap_resamples: int = BOOTSTRAP_RESAMPLES,
    metadata: Mapping | None = None,
) -> ErasureReport:
    """Run a full audit over a prompt set and assemble the report.

    Per-country ratios and the headline erasure set are computed against the
    model-weighted prompt aggregate. Any unscoreable prompt aborts the
    report with the full failure list.
    """
    if not r > 1.0:
        raise ValidationError(f"auditing requires r > 1, got {r}")
    if len(prompt_set) == 0:
        raise ValidationError("prompt set is empty")
    if ground_truth.candidate_set != candidate_set:
        raise ContractError("ground truth and candidate set do not match")
    texts = prompt_set.texts()
    dists, logprobs, failures = _score_prompts(
        backend, texts, candidate_set, temperature, workers
    )
    if failures:
        raise ReportError(
            f"{len(failures)} of {len(texts)} prompts could not be scored",
            failed_prompts=[text for text, _ in failures],
        )
    p_true = ground_truth.dist

    per_prompt_er = {text: erasure(p_true, dists[text], r) for text in texts}
    per_prompt_sets = {
        text: erasure_set(p_true, dists[text], r).as_mapping() for text in texts
    }

    agg_uni = aggregate_uniform(dists)
    agg_mod = aggregate_model(dists, logprobs)
    uniform_result = AggregateResult(
        probs=agg_uni.probs,
        er=erasure(p_true, agg_uni, r),
        erasure_set=erasure_set(p_true, agg_uni, r),
    )
    model_result = AggregateResult(
        probs=agg_mod.probs,
        er=erasure(p_true, agg_mod, r),
        erasure_set=erasure_set(p_true, agg_mod, r),
    )

    er_values = [per_prompt_er[text] for text in texts]
    average_er = math.fsum(er_values) / len(er_values)
    ci_low, ci_high = bootstrap_mean_ci(
        er_values, resamples=bootstrap_resamples, seed=seed
    )
    descriptor = backend.descriptor
    meta = {
        "backend": {
            "backend_kind": descriptor.backend_kind,
            "model_label": descriptor.model_label,
            "supports_temperature": descriptor.supports_temperature,
            "supports_full_logits": descriptor.supports_full_logits,
        },
        "temperature": temperature,
        "seed": seed,
        "n_prompts": len(texts),
    }
    if metadata:
        meta.update(metadata)
    return ErasureReport(
        r=float(r),
        candidate_names=candidate_set.names,
        ground_truth_probs=p_true.probs,
        source_label=ground_truth.source_label,
        per_prompt_er=per_prompt_er,
        per_prompt_probs={text: dists[text].probs for text in texts},
        per_prompt_sets=per_prompt_sets,
        prompt_logprobs=logprobs,
        aggregate_uniform=uniform_result,
        aggregate_model=model_result,
        prompt_weights=prompt_weights(logprobs),
        average_er=average_er,
        dispersion=boxplot_stats(er_values),
        bootstrap={
            "resamples": bootstrap_resamples,
            "seed": seed,
            "ci_low": ci_low,
            "ci_high": ci_high,
            "significant": ci_low > 0.0,
        },
        per_country_ratios=per_country_ratios(p_true, agg_mod),
        metadata=meta,
    )


def cross_model_erasure(reports: Sequence[ErasureReport]) -> dict[str, int]:
    """Per-country count of reports whose model-aggregate erasure set
    contains the country. Reports must agree on r and candidate set."""
    if not reports:
        raise ContractError("no reports to compare")
    first = reports[0]
    for other in reports[1:]:
        if other.r != first.r:
            raise ContractError(
                f"reports disagree on r: {first.r} vs {other.r}"
            )
        if other.candidate_names != first.candidate_names:
            raise ContractError("reports cover different candidate sets")
    counts = {name: 0 for name in first.candidate_names}
    for report in reports:
        for name in report.aggregate_model.erasure_set.names():
            counts[name] += 1
    return counts


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _aggregate_to_dict(agg: AggregateResult) -> dict:
    return {
        "probs": list(agg.probs),
        "er": agg.er,
        "erasure_set": agg.erasure_set.as_mapping(),
    }


def report_to_dict(report: ErasureReport) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "r": report.r,
        "candidate_names": list(report.candidate_names),
        "ground_truth": {
            "probs": list(report.ground_truth_probs),
            "source_label": report.source_label,
        },
        "per_prompt": {
            text: {
                "er": report.per_prompt_er[text],
                "probs": list(report.per_prompt_probs[text]),
                "erasure_set": report.per_prompt_sets[text],
                "logprob": report.prompt_logprobs[text],
            }
            for text in report.per_prompt_er
        },
        "aggregate": {
            "uniform": _aggregate_to_dict(report.aggregate_uniform),
            "model": _aggregate_to_dict(report.aggregate_model),
        },
        "prompt_weights": report.prompt_weights,
        "average_er": report.average_er,
        "dispersion": report.dispersion,
        "bootstrap": report.bootstrap,
        "per_country_ratios": report.per_country_ratios,
        "metadata": report.metadata,
    }


def _erasure_set_from_mapping(
    candidate_set: CandidateSet, r: float, mapping: Mapping[str, float]
) -> ErasureSet:
    members = tuple(c for c in candidate_set if c.canonical_name in mapping)
    ratios = tuple(mapping[c.canonical_name] for c in members)
    return ErasureSet(threshold_r=r, members=members, ratios=ratios)


def report_from_dict(data: Mapping) -> ErasureReport:
    if data.get("schema") != REPORT_SCHEMA:
        raise SchemaError(
            f"unsupported report schema {data.get('schema')!r}, "
            f"expected {REPORT_SCHEMA!r}"
        )
    try:
        names = tuple(data["candidate_names"])
        # Reconstructed reports keep alias detail out; canonical names are
        # sufficient for comparison and export workflows.
        candidate_set = CandidateSet(
            tuple(Country(name, (name,)) for name in names)
        )
        r = float(data["r"])
        per_prompt = data["per_prompt"]
        aggregate = data["aggregate"]
        uniform = AggregateResult(
            probs=tuple(aggregate["uniform"]["probs"]),
            er=float(aggregate["uniform"]["er"]),
            erasure_set=_erasure_set_from_mapping(
                candidate_set, r, aggregate["uniform"]["erasure_set"]
            ),
        )
        model = AggregateResult(
            probs=tuple(aggregate["model"]["probs"]),
            er=float(aggregate["model"]["er"]),
            erasure_set=_erasure_set_from_mapping(
                candidate_set, r, aggregate["model"]["erasure_set"]
            ),
        )
        return ErasureReport(
            r=r,
            candidate_names=names,
            ground_truth_probs=tuple(data["ground_truth"]["probs"]),
            source_label=data["ground_truth"]["source_label"],
            per_prompt_er={t: rec["er"] for t, rec in per_prompt.items()},
            per_prompt_probs={
                t: tuple(rec["probs"]) for t, rec in per_prompt.items()
            },
            per_prompt_sets={
                t: dict(rec["erasure_set"]) for t, rec in per_prompt.items()
            },
            prompt_logprobs={t: rec["logprob"] for t, rec in per_prompt.items()},
            aggregate_uniform=uniform,
            aggregate_model=model,
            prompt_weights=dict(data["prompt_weights"]),
            average_er=float(data["average_er"]),
            dispersion=dict(data["dispersion"]),
            bootstrap=dict(data["bootstrap"]),
            per_country_ratios=dict(data["per_country_ratios"]),
            metadata=dict(data.get("metadata", {})),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed report document: {exc}") from None


def save_report(report: ErasureReport, path: PathLike) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_report(path: PathLike) -> ErasureReport:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    return report_from_dict(data)
