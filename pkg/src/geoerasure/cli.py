"""Command-line orchestration for erasure audits.

Subcommands: ``expand-prompts``, ``audit``, ``choose-r``, ``corpus-profile``,
``mitigate-temp``, ``compare``, ``export-map``. All outputs are structured
text (JSON documents plus delimited tables ready for plotting); re-running
a command with the same configuration and seed reproduces the output files
byte for byte.

Exit codes: 0 success, 2 configuration problems, 3 backend failures
(unreachable endpoint, unscoreable prompts), 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import statistics
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import __version__
from .core import (
    CandidateSet,
    Country,
    GroundTruth,
    ProbDist,
    candidate_set_from_files,
    load_gdp_file,
    load_ground_truth,
)
from .errors import (
    BackendError,
    ConfigError,
    ContractError,
    GeoErasureError,
    ReportError,
    SchemaError,
    TransportError,
    ValidationError,
)
from .metrics import (
    DEFAULT_R_CANDIDATES,
    aggregate_uniform,
    choose_r,
    erasure,
    erasure_set,
    kl,
)
from .prompts import (
    PromptSet,
    expand,
    load_prompt_set,
    load_subject_config,
    load_templates,
    save_prompt_set,
    save_split_manifest,
    split,
)
from .report import (
    ErasureReport,
    build_report,
    cross_model_erasure,
    load_report,
    save_report,
)
from .scoring import MockBackend, ScoringBackend, WireBackend
from .corpus import datasets_from_manifest, load_manifest, profile
from .temperature import (
    DEFAULT_INTERVAL,
    TauCurve,
    optimize_tau,
    tau_perplexity_trace,
    with_perplexity,
)

BACKEND_URL_ENV = "GEOERASURE_BACKEND_URL"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _packaged(name: str) -> Path:
    return Path(str(resources.files("geoerasure").joinpath("data", name)))


DATA_DEFAULTS = {
    "templates": "prompt_templates.json",
    "subjects": "subject_config.json",
    "population": "english_speakers.csv",
    "aliases": "country_aliases.json",
    "gdp": "gdp_per_capita.csv",
}


@dataclass
class AuditConfig:
    """Resolved audit configuration (defaults < config file < CLI flags)."""

    backend_kind: str = "mock"
    backend_url: str | None = None
    mock_table: str | None = None
    model_label: str | None = None
    templates: str | None = None
    subjects: str | None = None
    population: str | None = None
    aliases: str | None = None
    gdp: str | None = None
    prompts: str | None = None
    r: float = 3.0
    temperature: float = 1.0
    seed: int = 0
    workers: int | None = None
    out_dir: str = "out"
    choose_r_objective: str = "median"
    tau_objective: str = "average"
    bootstrap_resamples: int = 10_000

    def resolved_workers(self) -> int:
        if self.workers is not None:
            if self.workers < 1:
                raise ConfigError("workers must be >= 1")
            return self.workers
        return max(1, os.cpu_count() or 1)


_CONFIG_FIELDS = set(AuditConfig.__dataclass_fields__)


def load_config(path: str | None, overrides: dict) -> AuditConfig:
    data: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})")
        unknown = set(data) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"{p}: unknown config fields {sorted(unknown)}")
    merged = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    try:
        config = AuditConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}")
    if config.backend_url is None:
        config.backend_url = os.environ.get(BACKEND_URL_ENV)
    return config


def _data_path(config_value: str | None, key: str) -> Path:
    if config_value:
        path = Path(config_value)
        if not path.exists():
            raise ConfigError(f"{key} file not found: {path}")
        return path
    return _packaged(DATA_DEFAULTS[key])


def make_backend(config: AuditConfig) -> ScoringBackend:
    if config.backend_kind == "mock":
        if not config.mock_table:
            raise ConfigError("mock backend requires a mock_table path")
        table = Path(config.mock_table)
        if not table.exists():
            raise ConfigError(f"mock table not found: {table}")
        return MockBackend.from_file(table, model_label=config.model_label)
    if config.backend_kind == "wire":
        if not config.backend_url:
            raise ConfigError(
                "wire backend requires --backend-url or the "
                f"{BACKEND_URL_ENV} environment variable"
            )
        return WireBackend(
            config.backend_url, model_label=config.model_label or "wire"
        )
    raise ConfigError(f"unknown backend kind {config.backend_kind!r}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_audit_inputs(
    config: AuditConfig,
) -> tuple[CandidateSet, GroundTruth, PromptSet, dict]:
    aliases_path = _data_path(config.aliases, "aliases")
    population_path = _data_path(config.population, "population")
    try:
        candidate_set = candidate_set_from_files(aliases_path, population_path)
        ground_truth = load_ground_truth(population_path, candidate_set)
    except (SchemaError, ValidationError) as exc:
        raise ConfigError(str(exc))
    hashes = {
        "aliases": _sha256(aliases_path),
        "population": _sha256(population_path),
    }
    if config.prompts:
        prompts_path = Path(config.prompts)
        if not prompts_path.exists():
            raise ConfigError(f"prompt-set file not found: {prompts_path}")
        prompt_set = load_prompt_set(prompts_path)
        hashes["prompts"] = _sha256(prompts_path)
    else:
        templates_path = _data_path(config.templates, "templates")
        subjects_path = _data_path(config.subjects, "subjects")
        prompt_set = expand(
            load_templates(templates_path), load_subject_config(subjects_path)
        )
        hashes["templates"] = _sha256(templates_path)
        hashes["subjects"] = _sha256(subjects_path)
    if config.backend_kind == "mock" and config.mock_table:
        hashes["mock_table"] = _sha256(Path(config.mock_table))
    if len(prompt_set) == 0:
        raise ConfigError("prompt set is empty")
    meta = {
        "config": _config_as_dict(config),
        "input_hashes": hashes,
        "package_version": __version__,
    }
    return candidate_set, ground_truth, prompt_set, meta


# execution details that do not influence report content stay out of the
# embedded provenance so identical audits stay byte-identical; input files
# are embedded as basenames (their content hashes pin them exactly)
_VOLATILE_CONFIG_FIELDS = {"out_dir", "workers"}
_PATH_CONFIG_FIELDS = {
    "mock_table",
    "templates",
    "subjects",
    "population",
    "aliases",
    "gdp",
    "prompts",
}


def _config_as_dict(config: AuditConfig) -> dict:
    out = {}
    for key in sorted(_CONFIG_FIELDS - _VOLATILE_CONFIG_FIELDS):
        value = getattr(config, key)
        if key in _PATH_CONFIG_FIELDS and value is not None:
            value = Path(value).name
        out[key] = value
    return out


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_expand_prompts(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    templates = load_templates(_data_path(config.templates, "templates"))
    subjects = load_subject_config(_data_path(config.subjects, "subjects"))
    prompt_set = expand(templates, subjects)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_prompt_set(prompt_set, out)
    print(f"expanded {len(prompt_set)} prompts -> {out}")
    if args.split:
        holdout = args.holdout.split(",") if args.holdout else None
        train, test = split(prompt_set, args.split, config.seed, holdout=holdout)
        split_out = Path(args.split_out or out.with_suffix(".split.json"))
        save_split_manifest(
            train,
            test,
            split_out,
            strategy=args.split,
            fold_seed=config.seed,
            holdout=holdout,
        )
        print(
            f"split ({args.split}, seed {config.seed}): "
            f"{len(train)} train / {len(test)} test -> {split_out}"
        )
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    if not config.r > 1.0:
        raise ConfigError(f"auditing requires r > 1, got {config.r}")
    candidate_set, ground_truth, prompt_set, meta = _load_audit_inputs(config)
    backend = make_backend(config)
    report = build_report(
        backend,
        prompt_set,
        candidate_set,
        ground_truth,
        config.r,
        temperature=config.temperature,
        seed=config.seed,
        workers=config.resolved_workers(),
        bootstrap_resamples=config.bootstrap_resamples,
        metadata=meta,
    )
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.json"
    save_report(report, report_path)
    _write_ratio_table(report, out_dir / "per_country_ratios.csv")
    _write_csv(
        out_dir / "boxplot_stats.csv",
        ["statistic", "value"],
        [[k, repr(v)] for k, v in report.dispersion.items()],
    )
    print(f"report -> {report_path}")
    print(
        f"average ER^{config.r:g} = {report.average_er:.6f}  "
        f"(95% CI [{report.bootstrap['ci_low']:.6f}, "
        f"{report.bootstrap['ci_high']:.6f}])"
    )
    print(
        f"aggregate ER^{config.r:g}: uniform = "
        f"{report.aggregate_uniform.er:.6f}, model = "
        f"{report.aggregate_model.er:.6f}"
    )
    erased = report.aggregate_model.erasure_set.names()
    print(f"erased countries (model aggregate): {list(erased)}")
    return EXIT_OK


def _write_ratio_table(report: ErasureReport, path: Path) -> None:
    erased = set(report.aggregate_model.erasure_set.names())
    rows = [
        [name, repr(report.per_country_ratios[name]), 1 if name in erased else 0]
        for name in report.candidate_names
    ]
    _write_csv(path, ["country", "ratio", "erased_at_r"], rows)


def cmd_choose_r(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    candidate_set, ground_truth, prompt_set, _ = _load_audit_inputs(config)
    backend = make_backend(config)
    from .report import _score_prompts

    dists, _, failures = _score_prompts(
        backend,
        prompt_set.texts(),
        candidate_set,
        config.temperature,
        config.resolved_workers(),
    )
    if failures:
        raise ReportError(
            f"{len(failures)} prompts could not be scored",
            failed_prompts=[t for t, _ in failures],
        )
    r_low, r_high = args.r_min, args.r_max
    if r_low >= r_high:
        raise ConfigError("--r-min must be below --r-max")
    candidates = range(r_low, r_high + 1)
    p_true = ground_truth.dist
    best = choose_r(
        dists, p_true, candidates, objective=config.choose_r_objective
    )
    import numpy as np

    kls = [kl(p_true, d) for d in dists.values()]
    rows = []
    for r in candidates:
        ers = [erasure(p_true, d, r) for d in dists.values()]
        sizes = [float(erasure_set(p_true, d, r).size) for d in dists.values()]
        er_q25, er_med, er_q75 = np.percentile(ers, [25.0, 50.0, 75.0])
        sz_q25, sz_med, sz_q75 = np.percentile(sizes, [25.0, 50.0, 75.0])
        rows.append(
            [
                r,
                repr(float(er_med)),
                repr(float(er_q25)),
                repr(float(er_q75)),
                repr(float(sz_med)),
                repr(float(sz_q25)),
                repr(float(sz_q75)),
                repr(statistics.median(kls)),
            ]
        )
    out_dir = Path(config.out_dir)
    table_path = out_dir / "r_selection.csv"
    _write_csv(
        table_path,
        [
            "r",
            "median_er",
            "q25_er",
            "q75_er",
            "median_set_size",
            "q25_set_size",
            "q75_set_size",
            "median_kl",
        ],
        rows,
    )
    print(f"r table -> {table_path}")
    print(f"chosen r = {best}")
    return EXIT_OK


def cmd_corpus_profile(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise ConfigError(f"manifest not found: {manifest_path}")
    aliases_path = _data_path(config.aliases, "aliases")
    try:
        entries = load_manifest(manifest_path)
        if config.population:
            candidate_set = candidate_set_from_files(
                aliases_path, _data_path(config.population, "population")
            )
        else:
            from .core import load_alias_file

            candidate_set = CandidateSet(load_alias_file(aliases_path))
    except (SchemaError, ValidationError) as exc:
        raise ConfigError(str(exc))
    datasets = datasets_from_manifest(entries)
    result = profile(
        datasets,
        candidate_set,
        floor_eps=args.floor,
        case_sensitive=not args.ignore_case,
        workers=config.resolved_workers(),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema": "geoerasure/train-profile/v1",
        "candidate_names": list(candidate_set.names),
        "probs": list(result.dist.probs),
        "weighted_counts": list(result.counts.counts),
        "floored_countries": list(result.floored_countries),
        "floor": args.floor,
        "total_documents": result.counts.total_documents,
        "total_bytes": result.counts.total_bytes,
        "datasets": [
            {"name": e.name, "weight": e.weight, "files": len(e.paths)}
            for e in entries
        ],
        "case_sensitive": not args.ignore_case,
    }
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    counts_path = out.with_name(out.stem + "_counts.csv")
    floored = set(result.floored_countries)
    _write_csv(
        counts_path,
        ["country", "weighted_count", "probability", "floored"],
        [
            [name, repr(c), repr(p), 1 if name in floored else 0]
            for name, c, p in zip(
                candidate_set.names, result.counts.counts, result.dist.probs
            )
        ],
    )
    print(f"profile -> {out}")
    print(f"counts table -> {counts_path}")
    print(
        f"documents: {result.counts.total_documents}, "
        f"bytes: {result.counts.total_bytes}, "
        f"floored countries: {len(result.floored_countries)}"
    )
    return EXIT_OK


def cmd_mitigate_temp(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    report_path = Path(args.report_in)
    if not report_path.exists():
        raise ConfigError(f"report not found: {report_path}")
    report = load_report(report_path)
    if args.r < 0:
        raise ConfigError(f"r must be >= 0, got {args.r}")
    try:
        lo, hi = (float(x) for x in args.interval.split(":"))
    except ValueError:
        raise ConfigError(
            f"--interval must look like 0.25:4.0, got {args.interval!r}"
        )
    logmasses = {
        text: [math.log(p) for p in probs]
        for text, probs in report.per_prompt_probs.items()
    }
    candidate_set = CandidateSet(
        tuple(Country(n, (n,)) for n in report.candidate_names)
    )
    p_true = ProbDist(candidate_set, report.ground_truth_probs)
    curve = optimize_tau(
        logmasses,
        p_true,
        args.r,
        search_interval=(lo, hi),
        objective=config.tau_objective,
    )
    perplexity_note = "not traced (no backend given)"
    if args.perplexity_texts:
        texts_path = Path(args.perplexity_texts)
        if not texts_path.exists():
            raise ConfigError(f"texts file not found: {texts_path}")
        texts = [
            line for line in texts_path.read_text(encoding="utf-8").splitlines() if line
        ]
        backend = make_backend(config)
        stride = max(1, len(curve.tau_values) // max(1, args.perplexity_points))
        sampled = list(curve.tau_values)[::stride]
        trace = tau_perplexity_trace(backend, texts, sampled)
        trace_map = dict(zip(sampled, trace))
        values = [trace_map.get(t, float("nan")) for t in curve.tau_values]
        curve = with_perplexity(curve, values)
        perplexity_note = f"traced at {len(sampled)} grid points"
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema": "geoerasure/tau-curve/v1",
        "r": args.r,
        "objective": curve.objective,
        "interval": [lo, hi],
        "tau_star": curve.tau_star,
        "er_at_star": curve.er_at_star,
        "er_at_unit_tau": curve.er_values[
            min(
                range(len(curve.tau_values)),
                key=lambda i: abs(curve.tau_values[i] - 1.0),
            )
        ],
        "perplexity": perplexity_note,
        "source_report": report_path.name,
    }
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    table_path = out.with_name(out.stem + "_curve.csv")
    if curve.perplexity_values is None:
        rows = [
            [repr(t), repr(e)] for t, e in zip(curve.tau_values, curve.er_values)
        ]
        _write_csv(table_path, ["tau", "er"], rows)
    else:
        rows = [
            [repr(t), repr(e), "" if math.isnan(p) else repr(p)]
            for t, e, p in zip(
                curve.tau_values, curve.er_values, curve.perplexity_values
            )
        ]
        _write_csv(table_path, ["tau", "er", "perplexity"], rows)
    print(f"tau curve -> {out}")
    print(f"curve table -> {table_path}")
    print(f"tau* = {curve.tau_star:.6f}, ER at tau* = {curve.er_at_star:.6f}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides(args))
    if not args.reports:
        raise ConfigError("compare needs at least one report file")
    reports = []
    for path in args.reports:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"report not found: {p}")
        reports.append(load_report(p))
    try:
        counts = cross_model_erasure(reports)
    except ContractError as exc:
        raise ConfigError(str(exc))
    gdp = load_gdp_file(_data_path(config.gdp, "gdp"))
    counted = {name: c for name, c in counts.items() if c > 0}
    missing = [name for name in counted if name not in gdp]
    if missing:
        raise ConfigError(f"GDP file lacks entries for {missing}")
    ordered = sorted(counted, key=lambda n: (-gdp[n], n))
    rows = [[name, repr(gdp[name]), counted[name]] for name in ordered]
    out = Path(args.out or Path(config.out_dir) / "compare.csv")
    _write_csv(out, ["country", "gdp_per_capita", "model_count"], rows)
    print(f"comparison table -> {out}")
    for name in ordered:
        print(f"{name}: erased by {counted[name]} of {len(reports)} models")
    if not ordered:
        print("no country is erased in any report")
    return EXIT_OK


def cmd_export_map(args: argparse.Namespace) -> int:
    report_path = Path(args.report)
    if not report_path.exists():
        raise ConfigError(f"report not found: {report_path}")
    report = load_report(report_path)
    erased = set(report.aggregate_model.erasure_set.names())
    rows = [
        [name, repr(report.per_country_ratios[name]), 1 if name in erased else 0]
        for name in report.candidate_names
    ]
    out = Path(args.out)
    _write_csv(out, ["country", "ratio", "erased"], rows)
    print(f"map data -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _overrides(args: argparse.Namespace) -> dict:
    mapping = {
        "backend_kind": getattr(args, "backend", None),
        "backend_url": getattr(args, "backend_url", None),
        "mock_table": getattr(args, "mock_table", None),
        "model_label": getattr(args, "model_label", None),
        "templates": getattr(args, "templates", None),
        "subjects": getattr(args, "subjects", None),
        "population": getattr(args, "population", None),
        "aliases": getattr(args, "aliases", None),
        "gdp": getattr(args, "gdp", None),
        "prompts": getattr(args, "prompts", None),
        "r": getattr(args, "r", None),
        "temperature": getattr(args, "temperature", None),
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
        "out_dir": getattr(args, "out_dir", None),
    }
    return {k: v for k, v in mapping.items() if v is not None}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="top-level random seed")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.add_argument("--workers", type=int, help="scoring worker pool size")


def _add_backend(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["mock", "wire"], help="backend kind")
    parser.add_argument(
        "--backend-url",
        dest="backend_url",
        help=f"wire endpoint (or set {BACKEND_URL_ENV})",
    )
    parser.add_argument("--mock-table", dest="mock_table", help="mock table TSV")
    parser.add_argument("--model-label", dest="model_label", help="backend label")
    parser.add_argument("--temperature", type=float, help="scoring temperature")


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--templates", help="templates JSON")
    parser.add_argument("--subjects", help="subject config JSON")
    parser.add_argument("--population", help="population CSV")
    parser.add_argument("--aliases", help="aliases JSON")
    parser.add_argument("--prompts", help="pre-expanded prompt-set JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoerasure",
        description="Audit and mitigate geographical erasure in language models",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("expand-prompts", help="expand templates into a prompt set")
    _add_common(p)
    p.add_argument("--templates", help="templates JSON")
    p.add_argument("--subjects", help="subject config JSON")
    p.add_argument("--out", required=True, help="prompt-set output JSON")
    p.add_argument(
        "--split", choices=["random", "pronoun", "verb"], help="also emit a split"
    )
    p.add_argument("--holdout", help="comma-separated test classes/groups")
    p.add_argument("--split-out", dest="split_out", help="split manifest path")
    p.set_defaults(func=cmd_expand_prompts)

    p = sub.add_parser("audit", help="run a full erasure audit")
    _add_common(p)
    _add_backend(p)
    _add_data(p)
    p.add_argument("--r", type=float, help="erasure threshold (default 3)")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("choose-r", help="pick r matching ER to the KL-divergence")
    _add_common(p)
    _add_backend(p)
    _add_data(p)
    p.add_argument("--r-min", type=int, default=2, help="smallest candidate r")
    p.add_argument("--r-max", type=int, default=20, help="largest candidate r")
    p.set_defaults(func=cmd_choose_r)

    p = sub.add_parser("corpus-profile", help="profile country mentions in a corpus")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="dataset manifest CSV")
    p.add_argument("--aliases", help="aliases JSON")
    p.add_argument("--population", help="restrict to countries with ground truth")
    p.add_argument("--out", required=True, help="profile output JSON")
    p.add_argument(
        "--floor", type=float, default=1e-12, help="floor for zero-count countries"
    )
    p.add_argument(
        "--ignore-case", action="store_true", help="case-insensitive matching"
    )
    p.set_defaults(func=cmd_corpus_profile)

    p = sub.add_parser("mitigate-temp", help="calibrate the softmax temperature")
    _add_common(p)
    _add_backend(p)
    p.add_argument("--report-in", dest="report_in", required=True, help="audit report")
    p.add_argument("--r", type=float, default=3.0, help="erasure threshold")
    p.add_argument("--interval", default="0.25:4.0", help="tau search interval lo:hi")
    p.add_argument("--out", required=True, help="tau-curve output JSON")
    p.add_argument(
        "--perplexity-texts",
        dest="perplexity_texts",
        help="optional held-out texts (one per line) for a perplexity trace",
    )
    p.add_argument(
        "--perplexity-points",
        dest="perplexity_points",
        type=int,
        default=20,
        help="number of tau grid points to trace perplexity at",
    )
    p.set_defaults(func=cmd_mitigate_temp)

    p = sub.add_parser("compare", help="count erased countries across reports")
    _add_common(p)
    p.add_argument("reports", nargs="+", help="report JSON files")
    p.add_argument("--gdp", help="GDP-per-capita CSV for ordering")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-map", help="emit choropleth-ready per-country data")
    p.add_argument("--report", required=True, help="audit report JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_export_map)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReportError as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        for prompt in exc.failed_prompts:
            print(f"  failed prompt: {prompt!r}", file=sys.stderr)
        return EXIT_BACKEND
    except (TransportError, BackendError) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except GeoErasureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
