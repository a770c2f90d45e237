"""Readers for the audit toolkit's file formats.

This package talks to the primary toolkit only through its documented
files: prompt sets, split manifests, population/alias snapshots and
tau-curve documents. The parsers here are deliberately small and
self-contained.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

from .errors import ConfigError, SchemaError

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PromptRecord:
    text: str
    template_id: int
    subject_tag: str
    verb_group: str
    pronoun_class: str


def _read_json(path: PathLike) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def load_prompts(path: PathLike) -> list[PromptRecord]:
    doc = _read_json(path)
    if "prompts" not in doc:
        raise SchemaError(f"{path}: not a prompt-set document")
    records = []
    for item in doc["prompts"]:
        try:
            records.append(
                PromptRecord(
                    text=item["text"],
                    template_id=int(item["template_id"]),
                    subject_tag=item["subject_tag"],
                    verb_group=item["verb_group"],
                    pronoun_class=item["pronoun_class"],
                )
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: prompt record missing {exc}") from None
    if not records:
        raise SchemaError(f"{path}: empty prompt set")
    return records


def load_split_manifest(
    path: PathLike,
) -> tuple[list[PromptRecord], list[PromptRecord], dict]:
    doc = _read_json(path)
    for key in ("train", "test"):
        if key not in doc:
            raise SchemaError(f"{path}: split manifest missing {key!r}")

    def side(key):
        return [
            PromptRecord(
                text=i["text"],
                template_id=int(i["template_id"]),
                subject_tag=i["subject_tag"],
                verb_group=i["verb_group"],
                pronoun_class=i["pronoun_class"],
            )
            for i in doc[key]
        ]

    meta = {k: doc.get(k) for k in ("strategy", "fold_seed", "holdout")}
    return side("train"), side("test"), meta


def load_aliases(path: PathLike) -> dict[str, list[str]]:
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected canonical -> alias-list mapping")
    for canonical, aliases in doc.items():
        if canonical not in aliases:
            raise SchemaError(
                f"{path}: alias list for {canonical!r} lacks the canonical name"
            )
    return {k: list(v) for k, v in doc.items()}


def load_population(path: PathLike) -> dict[str, int]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "country",
            "english_speakers",
        ]:
            raise SchemaError(f"{path}: expected header country,english_speakers")
        counts: dict[str, int] = {}
        for row in reader:
            if not row or not row[0].strip():
                continue
            name, raw = row[0].strip(), row[1].strip()
            count = int(raw)
            if count <= 0 or name in counts:
                raise SchemaError(f"{path}: bad row for {name!r}")
            counts[name] = count
    return counts


def ground_truth_probs(
    population: Mapping[str, int], candidate_names: Sequence[str]
) -> list[float]:
    missing = [n for n in candidate_names if n not in population]
    if missing:
        raise SchemaError(f"no population counts for {missing}")
    total = float(sum(population[n] for n in candidate_names))
    return [population[n] / total for n in candidate_names]


def load_tau_curve(path: PathLike) -> dict:
    doc = _read_json(path)
    if doc.get("schema") != "geoerasure/tau-curve/v1":
        raise SchemaError(f"{path}: not a tau-curve document")
    return doc


def sha256_of(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def verify_pinned_hash(path: PathLike, expected: str | None) -> None:
    if expected is None:
        return
    actual = sha256_of(path)
    if actual != expected:
        raise ConfigError(
            f"{path}: content hash {actual[:12]}... does not match the "
            f"pinned {expected[:12]}..."
        )


def write_json(doc: dict, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
