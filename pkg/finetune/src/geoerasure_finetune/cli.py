"""The ``finetune`` command.

Single-cell mode runs one (split strategy, r) combination over the
requested folds; ``--matrix`` runs the full splits x thresholds grid and
emits the comparison table, optionally importing the audit toolkit's
temperature-calibration result as an extra column.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import ConfigError, FinetuneError, SchemaError
from .io import (
    ground_truth_probs,
    load_aliases,
    load_population,
    load_prompts,
    load_split_manifest,
    verify_pinned_hash,
    write_json,
)
from .matrix import DEFAULT_R_VALUES, DEFAULT_SPLITS, run_matrix
from .modeling import load_model
from .splits import split_prompts
from .training import FinetuneConfig, train

#: SHA-256 of the shipped held-out snapshot used for perplexity tracking.
HELDOUT_SHA256 = "3422b1ce4250b5bdac740a796c7a2114ad2609a8b9eb17ee37b9f99969a6dcc0"

CONFIG_FIELDS = {
    "model",
    "r",
    "learning_rate",
    "epochs",
    "warmup_epochs",
    "batch_size",
    "bias_only",
    "split_strategy",
    "folds",
    "seed",
    "prompts",
    "population",
    "aliases",
    "heldout",
    "heldout_sha256",
    "out_dir",
}


def _packaged_heldout() -> Path:
    return Path(str(resources.files("geoerasure_finetune").joinpath("data", "heldout.txt")))


def load_cli_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})")
    unknown = set(data) - CONFIG_FIELDS
    if unknown:
        raise ConfigError(f"{p}: unknown config fields {sorted(unknown)}")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finetune",
        description="Mitigate geographical erasure by bias-only finetuning",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--prompts", help="prompt-set JSON from the audit toolkit")
    parser.add_argument("--split-manifest", dest="split_manifest",
                        help="use a pre-computed split manifest instead of splitting")
    parser.add_argument("--population", help="population CSV")
    parser.add_argument("--aliases", help="aliases JSON")
    parser.add_argument("--heldout", help="held-out text file for perplexity")
    parser.add_argument("--model", help='"tiny" or a transformers model id/path')
    parser.add_argument("--split", choices=list(DEFAULT_SPLITS), help="split strategy")
    parser.add_argument("--r", type=float, help="erasure-loss threshold")
    parser.add_argument("--folds", type=int, help="number of folds")
    parser.add_argument("--epochs", type=int, help="training epochs")
    parser.add_argument("--lr", type=float, help="peak learning rate")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--seed", type=int, help="base random seed")
    parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.add_argument("--matrix", action="store_true",
                        help="run the full splits x r grid")
    parser.add_argument("--tau-curve", dest="tau_curve",
                        help="tau-curve JSON for the temperature column")
    parser.add_argument("--full-model", dest="full_model", action="store_true",
                        help="train all parameters instead of biases only")
    parser.add_argument("--checkpoints", action="store_true",
                        help="write per-epoch checkpoints")
    return parser


def _resolve(args: argparse.Namespace) -> tuple[FinetuneConfig, dict]:
    file_config = load_cli_config(args.config)
    merged = dict(file_config)
    overrides = {
        "model": args.model,
        "r": args.r,
        "split_strategy": args.split,
        "folds": args.folds,
        "epochs": args.epochs,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "prompts": args.prompts,
        "population": args.population,
        "aliases": args.aliases,
        "heldout": args.heldout,
        "out_dir": args.out_dir,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if args.full_model:
        merged["bias_only"] = False
    paths = {
        "prompts": merged.pop("prompts", None),
        "population": merged.pop("population", None),
        "aliases": merged.pop("aliases", None),
        "heldout": merged.pop("heldout", None),
        "heldout_sha256": merged.pop("heldout_sha256", None),
        "out_dir": merged.pop("out_dir", "finetune_out"),
    }
    for key in ("prompts", "population", "aliases"):
        if not paths[key]:
            raise ConfigError(f"--{key} (or the config field) is required")
    try:
        config = FinetuneConfig(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}")
    return config, paths


def _load_inputs(paths: dict):
    prompts = load_prompts(paths["prompts"])
    population = load_population(paths["population"])
    alias_map = load_aliases(paths["aliases"])
    candidate_names = [n for n in alias_map if n in population]
    if not candidate_names:
        raise ConfigError("no country appears in both the alias and population files")
    p_true = ground_truth_probs(population, candidate_names)
    if paths["heldout"]:
        heldout_path = Path(paths["heldout"])
        if not heldout_path.exists():
            raise ConfigError(f"held-out text not found: {heldout_path}")
        verify_pinned_hash(heldout_path, paths.get("heldout_sha256"))
    else:
        heldout_path = _packaged_heldout()
        verify_pinned_hash(heldout_path, HELDOUT_SHA256)
    heldout_texts = [
        line
        for line in heldout_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    return prompts, alias_map, candidate_names, p_true, heldout_texts


def _corpus_for_model(prompts, alias_map, heldout_texts) -> list[str]:
    aliases = [a for lst in alias_map.values() for a in lst]
    return [p.text for p in prompts] + aliases + list(heldout_texts)


def _write_matrix_csv(doc: dict, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["cell", "train_loss_mean", "train_loss_min", "train_loss_max",
             "test_loss_mean", "test_loss_min", "test_loss_max",
             "perplexity_mean", "perplexity_min", "perplexity_max", "failures"]
        )
        for key, cell in doc["cells"].items():
            if cell.get("failed"):
                writer.writerow([key] + ["failed"] * 9 + [len(cell["failures"])])
                continue
            writer.writerow([
                key,
                *(repr(cell["train_loss"][k]) for k in ("mean", "min", "max")),
                *(repr(cell["test_loss"][k]) for k in ("mean", "min", "max")),
                *(repr(cell["perplexity"][k]) for k in ("mean", "min", "max")),
                len(cell["failures"]),
            ])
        if "temperature_column" in doc:
            t = doc["temperature_column"]
            writer.writerow([
                f"temperature:tau={t['tau_star']:g}",
                repr(t["train_loss"]), "", "",
                "", "", "",
                repr(t["perplexity"]) if t["perplexity"] is not None else "", "", "",
                0,
            ])


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, paths = _resolve(args)
        prompts, alias_map, candidate_names, p_true, heldout_texts = _load_inputs(paths)
        out_dir = Path(paths["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        corpus = _corpus_for_model(prompts, alias_map, heldout_texts)
        checkpoint_dir = out_dir / "checkpoints" if args.checkpoints else None

        if args.matrix:
            doc = run_matrix(
                config,
                prompts,
                model_factory=lambda: load_model(config.model, corpus, config.seed),
                alias_map=alias_map,
                candidate_names=candidate_names,
                p_true_probs=p_true,
                heldout_texts=heldout_texts,
                tau_curve_path=args.tau_curve,
                checkpoint_dir=checkpoint_dir,
            )
            write_json(doc, out_dir / "matrix.json")
            _write_matrix_csv(doc, out_dir / "matrix.csv")
            print(f"matrix -> {out_dir / 'matrix.json'}")
            for key, cell in doc["cells"].items():
                if cell.get("failed"):
                    print(f"{key}: FAILED ({len(cell['failures'])} folds)")
                else:
                    print(
                        f"{key}: train {cell['train_loss']['mean']:.4f} "
                        f"test {cell['test_loss']['mean']:.4f} "
                        f"ppl {cell['perplexity']['mean']:.4f}"
                    )
            return 1 if doc["any_failed"] else 0

        results = []
        for fold in range(config.folds):
            fold_seed = config.seed + fold
            if args.split_manifest:
                train_side, test_side, meta = load_split_manifest(args.split_manifest)
                strategy = meta.get("strategy") or config.split_strategy
            else:
                strategy = config.split_strategy
                train_side, test_side = split_prompts(prompts, strategy, fold_seed)
            fold_config = dataclasses.replace(
                config, split_strategy=strategy, seed=fold_seed
            )
            model = load_model(config.model, corpus, fold_seed)
            result = train(
                fold_config,
                model,
                train_side,
                test_side,
                alias_map,
                candidate_names,
                p_true,
                heldout_texts,
                fold_id=fold,
                checkpoint_dir=checkpoint_dir,
            )
            results.append(result)
            print(
                f"fold {fold}: train ER {result.train_er[0]:.4f} -> "
                f"{result.final_train_er:.4f}, test ER {result.test_er[0]:.4f} -> "
                f"{result.final_test_er:.4f}, ppl {result.perplexity[0]:.4f} -> "
                f"{result.final_perplexity:.4f}"
            )
        doc = {
            "schema": "geoerasure/finetune-run/v1",
            "config": {
                "model": config.model,
                "r": config.r,
                "learning_rate": config.learning_rate,
                "epochs": config.epochs,
                "warmup_epochs": config.warmup_epochs,
                "batch_size": config.batch_size,
                "bias_only": config.bias_only,
                "split_strategy": config.split_strategy,
                "folds": config.folds,
                "seed": config.seed,
            },
            "folds": [r.to_dict() for r in results],
        }
        write_json(doc, out_dir / "runs.json")
        print(f"results -> {out_dir / 'runs.json'}")
        return 0
    except (ConfigError, SchemaError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FinetuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
