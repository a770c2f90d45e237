"""Countries, candidate sets, probability distributions, ground truth.

Every type here is immutable after construction and safe to share across
threads. Distributions are always defined over an explicit
:class:`CandidateSet`; two distributions are only comparable when they
reference the same candidate set.

Conventions used throughout the package:

- all logarithms are natural logarithms; divergences are reported in nats,
- probabilities are validated to sum to 1 within ``PROB_SUM_TOL`` (1e-9),
- a country without ground-truth data is *excluded* from the candidate set,
  never carried along with probability zero.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

from .errors import (
    ContractError,
    SchemaError,
    ValidationError,
    ZeroPredictionError,
)

PROB_SUM_TOL = 1e-9
COUNT_RATIO_TOL = 1e-12

#: Floor applied to count-derived distributions (e.g. corpus profiles) when
#: they appear as the second argument of a divergence. Softmax outputs are
#: never exactly zero, corpus counts can be.
DEFAULT_FLOOR = 1e-12

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Country:
    """A country with its canonical name and the full list of accepted names.

    ``aliases`` always contains ``canonical_name`` exactly once; alias lists
    of different countries in one candidate set never overlap.
    """

    canonical_name: str
    aliases: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "aliases", tuple(self.aliases))
        if not self.canonical_name or not self.canonical_name.strip():
            raise ValidationError("country canonical name must be non-empty")
        for alias in self.aliases:
            if not alias or not alias.strip():
                raise ValidationError(
                    f"{self.canonical_name!r}: aliases must be non-empty"
                )
        if len(set(self.aliases)) != len(self.aliases):
            raise ValidationError(
                f"{self.canonical_name!r}: duplicate alias in {self.aliases}"
            )
        if self.aliases.count(self.canonical_name) != 1:
            raise ValidationError(
                f"{self.canonical_name!r}: canonical name must appear exactly "
                "once in the alias list"
            )

    def __str__(self) -> str:
        return self.canonical_name


@dataclass(frozen=True)
class CandidateSet:
    """The ordered set of countries an analysis is run over.

    The order is significant: every probability vector in the package is
    aligned with ``countries``.
    """

    countries: tuple[Country, ...]

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(self.countries))
        if not self.countries:
            raise ValidationError("candidate set must contain at least one country")
        names = [c.canonical_name for c in self.countries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate canonical names: {dupes}")
        seen: dict[str, str] = {}
        for country in self.countries:
            for alias in country.aliases:
                if alias in seen:
                    raise ValidationError(
                        f"alias {alias!r} maps to both {seen[alias]!r} "
                        f"and {country.canonical_name!r}"
                    )
                seen[alias] = country.canonical_name

    @property
    def size(self) -> int:
        """M, the number of candidate countries."""
        return len(self.countries)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(c.canonical_name for c in self.countries)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {c.canonical_name: i for i, c in enumerate(self.countries)}

    @cached_property
    def alias_owner(self) -> dict[str, str]:
        """Maps every alias to the canonical name that owns it."""
        return {
            alias: c.canonical_name for c in self.countries for alias in c.aliases
        }

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise ValidationError(f"unknown country {name!r}") from None

    def country(self, name: str) -> Country:
        return self.countries[self.index_of(name)]

    def __len__(self) -> int:
        return len(self.countries)

    def __iter__(self) -> Iterator[Country]:
        return iter(self.countries)

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name in self._index


def _as_country_name(country: Union[Country, str]) -> str:
    return country.canonical_name if isinstance(country, Country) else country


@dataclass(frozen=True)
class ProbDist:
    """A normalized probability vector over a candidate set."""

    candidate_set: CandidateSet
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) != len(self.candidate_set):
            raise ValidationError(
                f"expected {len(self.candidate_set)} probabilities, "
                f"got {len(self.probs)}"
            )
        for name, p in zip(self.candidate_set.names, self.probs):
            if not math.isfinite(p) or p < 0.0:
                raise ValidationError(
                    f"probability for {name!r} must be finite and >= 0, got {p}"
                )
        total = math.fsum(self.probs)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValidationError(
                f"probabilities sum to {total!r}, not 1 within {PROB_SUM_TOL}"
            )

    @classmethod
    def from_weights(
        cls, candidate_set: CandidateSet, weights: Sequence[float]
    ) -> "ProbDist":
        """Normalize non-negative weights into a distribution."""
        from .errors import NormalizationError

        weights = [float(w) for w in weights]
        if len(weights) != len(candidate_set):
            raise ValidationError(
                f"expected {len(candidate_set)} weights, got {len(weights)}"
            )
        for name, w in zip(candidate_set.names, weights):
            if not math.isfinite(w) or w < 0.0:
                raise ValidationError(
                    f"weight for {name!r} must be finite and >= 0, got {w}"
                )
        total = math.fsum(weights)
        if total <= 0.0:
            raise NormalizationError("total weight is zero, cannot normalize")
        return cls(candidate_set, tuple(w / total for w in weights))

    def __getitem__(self, country: Union[Country, str]) -> float:
        return self.probs[self.candidate_set.index_of(_as_country_name(country))]

    def items(self) -> Iterator[tuple[Country, float]]:
        return zip(iter(self.candidate_set), self.probs)


def require_same_candidate_set(*dists: ProbDist) -> CandidateSet:
    """Raise :class:`ContractError` unless all distributions share a set."""
    first = dists[0].candidate_set
    for other in dists[1:]:
        if other.candidate_set is first:
            continue
        if other.candidate_set != first:
            raise ContractError(
                "distributions are defined over different candidate sets"
            )
    return first


@dataclass(frozen=True)
class GroundTruth:
    """Population-based ground-truth distribution with its raw counts."""

    dist: ProbDist
    raw_counts: tuple[int, ...]
    source_label: str

    def __post_init__(self):
        object.__setattr__(self, "raw_counts", tuple(int(c) for c in self.raw_counts))
        if len(self.raw_counts) != len(self.dist.candidate_set):
            raise ValidationError("raw_counts length does not match candidate set")
        for name, count in zip(self.dist.candidate_set.names, self.raw_counts):
            if count <= 0:
                raise ValidationError(
                    f"ground-truth count for {name!r} must be > 0, got {count}"
                )
        total = math.fsum(self.raw_counts)
        for name, count, p in zip(
            self.dist.candidate_set.names, self.raw_counts, self.dist.probs
        ):
            if abs(p - count / total) > COUNT_RATIO_TOL:
                raise ValidationError(
                    f"ground-truth probability for {name!r} inconsistent with "
                    "its raw count"
                )

    @property
    def candidate_set(self) -> CandidateSet:
        return self.dist.candidate_set


# ---------------------------------------------------------------------------
# File loading
# ---------------------------------------------------------------------------

POPULATION_HEADER = ("country", "english_speakers")
GDP_HEADER = ("country", "gdp_per_capita_usd")


def _read_two_column_csv(
    path: PathLike, expected_header: tuple[str, str]
) -> list[tuple[str, str]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: file is empty") from None
        if tuple(h.strip() for h in header) != expected_header:
            raise SchemaError(
                f"{path}: expected header {','.join(expected_header)!r}, "
                f"got {','.join(header)!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            rows.append((row[0].strip(), row[1].strip()))
    return rows


def load_population_rows(path: PathLike) -> dict[str, int]:
    """Parse a ``country,english_speakers`` file into an ordered mapping."""
    rows = _read_two_column_csv(path, POPULATION_HEADER)
    counts: dict[str, int] = {}
    for name, raw in rows:
        if name in counts:
            raise ValidationError(f"duplicate country {name!r} in {path}")
        try:
            count = int(raw)
        except ValueError:
            raise ValidationError(
                f"{path}: count for {name!r} must be an integer, got {raw!r}"
            ) from None
        if count <= 0:
            raise ValidationError(
                f"{path}: count for {name!r} must be positive, got {count}"
            )
        counts[name] = count
    if not counts:
        raise SchemaError(f"{path}: no data rows")
    return counts


def load_gdp_file(path: PathLike) -> dict[str, float]:
    """Parse a ``country,gdp_per_capita_usd`` file."""
    rows = _read_two_column_csv(path, GDP_HEADER)
    gdp: dict[str, float] = {}
    for name, raw in rows:
        if name in gdp:
            raise ValidationError(f"duplicate country {name!r} in {path}")
        try:
            value = float(raw)
        except ValueError:
            raise ValidationError(
                f"{path}: GDP for {name!r} must be a number, got {raw!r}"
            ) from None
        if not math.isfinite(value) or value < 0:
            raise ValidationError(f"{path}: GDP for {name!r} must be >= 0")
        gdp[name] = value
    return gdp


def load_alias_file(path: PathLike) -> tuple[Country, ...]:
    """Load the canonical-name -> alias-list mapping.

    The file is JSON: ``{"United Kingdom": ["United Kingdom", "UK"], ...}``.
    Each alias list must contain its canonical name.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: expected a JSON object of canonical -> aliases")
    countries = []
    for canonical, aliases in raw.items():
        if not isinstance(aliases, list) or not all(
            isinstance(a, str) for a in aliases
        ):
            raise SchemaError(
                f"{path}: aliases for {canonical!r} must be a list of strings"
            )
        if canonical not in aliases:
            raise SchemaError(
                f"{path}: alias list for {canonical!r} must include the "
                "canonical name"
            )
        countries.append(Country(canonical, tuple(aliases)))
    if not countries:
        raise SchemaError(f"{path}: no countries")
    return tuple(countries)


def candidate_set_from_files(
    aliases_path: PathLike, population_path: PathLike
) -> CandidateSet:
    """Build the candidate set: alias-file order, restricted to countries
    that have ground-truth data.

    Countries without a population row are dropped entirely (exclusion, not
    zero-filling). A population row naming a country absent from the alias
    file is a schema error.
    """
    countries = load_alias_file(aliases_path)
    counts = load_population_rows(population_path)
    known = {c.canonical_name for c in countries}
    for name in counts:
        if name not in known:
            raise SchemaError(
                f"{population_path}: row for {name!r} does not match any "
                "country in the alias file"
            )
    kept = tuple(c for c in countries if c.canonical_name in counts)
    if not kept:
        raise ValidationError(
            "no country appears in both the alias and population files"
        )
    return CandidateSet(kept)


def load_ground_truth(
    population_path: PathLike,
    candidate_set: CandidateSet,
    source_label: str | None = None,
) -> GroundTruth:
    """Load and normalize English-speaker counts over ``candidate_set``.

    Row order in the file does not affect the result; counts are aligned
    with the candidate set's own order.
    """
    counts = load_population_rows(population_path)
    for name in counts:
        if name not in candidate_set:
            raise SchemaError(
                f"{population_path}: row for {name!r} is not in the candidate set"
            )
    missing = [n for n in candidate_set.names if n not in counts]
    if missing:
        raise ValidationError(
            f"{population_path}: no population row for {missing}"
        )
    ordered = tuple(counts[name] for name in candidate_set.names)
    dist = ProbDist.from_weights(candidate_set, ordered)
    label = source_label if source_label is not None else Path(population_path).name
    return GroundTruth(dist=dist, raw_counts=ordered, source_label=label)


def ground_truth_from_counts(
    candidate_set: CandidateSet,
    counts: Mapping[str, int],
    source_label: str = "in-memory",
) -> GroundTruth:
    """Build a :class:`GroundTruth` from an in-memory count mapping."""
    missing = [n for n in candidate_set.names if n not in counts]
    if missing:
        raise ValidationError(f"missing counts for {missing}")
    unknown = [n for n in counts if n not in candidate_set]
    if unknown:
        raise SchemaError(f"unknown countries in counts: {unknown}")
    ordered = tuple(int(counts[name]) for name in candidate_set.names)
    dist = ProbDist.from_weights(candidate_set, ordered)
    return GroundTruth(dist=dist, raw_counts=ordered, source_label=source_label)


def ratio(p_true: ProbDist, p: ProbDist, country: Union[Country, str]) -> float:
    """Underprediction ratio ``p_true[country] / p[country]``.

    Values above the threshold r mark the country as erased. Callers decide
    whether to floor zero predictions; this function never does.
    """
    require_same_candidate_set(p_true, p)
    name = _as_country_name(country)
    denominator = p[name]
    if denominator <= 0.0:
        raise ZeroPredictionError(name)
    return p_true[name] / denominator
