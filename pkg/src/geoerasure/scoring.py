"""Scoring backends: uniform access to token-level log-probabilities.

Two backends implement the contract:

- :class:`MockBackend` — table-driven, fully deterministic, used by the
  test suite and for desk-scale fixtures. Tokens are whitespace-delimited
  words; every (context, token) probability either comes from the table or
  from a uniform fallback mass spread over a declared fallback vocabulary.
- :class:`WireBackend` — a thin HTTP client for a scoring service. The wire
  protocol is a JSON POST ``{prompt, continuation, temperature}`` answered
  by ``{"tokens": [{"text", "logprob"}], "total_logprob"}``. Transport
  failures are retried with exponential backoff; capability and validation
  errors never are.

On top of a backend, this module builds the candidate-country distribution:
per-country mass is the probability of ``" " + alias`` summed over all of
the country's aliases, then normalized over the candidate set.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests

from .core import CandidateSet, PathLike, ProbDist
from .errors import (
    BackendError,
    CapabilityError,
    DomainError,
    NormalizationError,
    SchemaError,
    TransportError,
    ValidationError,
)

MOCK_KIND = "mock"
WIRE_KIND = "wire_client"

CHAIN_RULE_TOL = 1e-9


@dataclass(frozen=True)
class TokenScore:
    """One scored token of a continuation."""

    token_text: str
    logprob: float

    def __post_init__(self):
        if not math.isfinite(self.logprob):
            raise ValidationError(
                f"logprob for token {self.token_text!r} must be finite"
            )
        if self.logprob > 0.0:
            raise ValidationError(
                f"logprob for token {self.token_text!r} must be <= 0, "
                f"got {self.logprob}"
            )


@dataclass(frozen=True)
class ContinuationScore:
    """Chain-rule factorized score of a continuation given a prompt."""

    prompt: str
    continuation: str
    token_scores: tuple[TokenScore, ...]
    total_logprob: float

    def __post_init__(self):
        object.__setattr__(self, "token_scores", tuple(self.token_scores))
        if not self.token_scores:
            raise ValidationError("a continuation score needs at least one token")
        checksum = math.fsum(t.logprob for t in self.token_scores)
        if abs(checksum - self.total_logprob) > CHAIN_RULE_TOL:
            raise ValidationError(
                f"total_logprob {self.total_logprob} differs from the token "
                f"sum {checksum} by more than {CHAIN_RULE_TOL}"
            )


@dataclass(frozen=True)
class BackendDescriptor:
    backend_kind: str
    model_label: str
    supports_temperature: bool
    supports_full_logits: bool


class ScoringBackend(Protocol):
    """Anything that maps (prompt, continuation, temperature) to token scores."""

    @property
    def descriptor(self) -> BackendDescriptor: ...

    def score_continuation(
        self, prompt: str, continuation: str, temperature: float = 1.0
    ) -> ContinuationScore: ...


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

FALLBACK_DIRECTIVE = "@fallback_vocab_size"
DEFAULT_FALLBACK_VOCAB = 50_000


class MockBackend:
    """Deterministic table-driven backend.

    The table maps a context string (whitespace-normalized text so far) to
    next-token probabilities. Listed probabilities per context must sum to
    at most 1; the remainder is spread uniformly over
    ``fallback_vocab_size`` unlisted tokens, so any unknown token still
    receives a positive probability as long as the remainder is positive.

    Temperature is applied exactly at each position: probabilities are
    raised to ``1/tau`` and renormalized over the full (listed + fallback)
    vocabulary, which is equivalent to dividing the position's logits by
    ``tau`` before the softmax.
    """

    def __init__(
        self,
        table: Mapping[str, Mapping[str, float]],
        fallback_vocab_size: int = DEFAULT_FALLBACK_VOCAB,
        model_label: str = "mock",
    ):
        if fallback_vocab_size <= 0:
            raise ValidationError("fallback_vocab_size must be positive")
        self._table: dict[str, dict[str, float]] = {}
        for context, row in table.items():
            ctx = _normalize_context(context)
            entry = self._table.setdefault(ctx, {})
            for token, prob in row.items():
                if token != token.strip() or " " in token or not token:
                    raise ValidationError(
                        f"mock token {token!r} must be a single word"
                    )
                if token in entry:
                    raise ValidationError(
                        f"duplicate mock entry for context {ctx!r}, token {token!r}"
                    )
                prob = float(prob)
                if not math.isfinite(prob) or prob < 0 or prob > 1:
                    raise ValidationError(
                        f"mock probability for ({ctx!r}, {token!r}) out of [0, 1]"
                    )
                entry[token] = prob
        for ctx, row in self._table.items():
            if math.fsum(row.values()) > 1.0 + 1e-9:
                raise ValidationError(
                    f"mock probabilities for context {ctx!r} sum above 1"
                )
        self._fallback_vocab = int(fallback_vocab_size)
        self._descriptor = BackendDescriptor(
            backend_kind=MOCK_KIND,
            model_label=model_label,
            supports_temperature=True,
            supports_full_logits=True,
        )

    @classmethod
    def from_file(cls, path: PathLike, model_label: str | None = None) -> "MockBackend":
        """Parse the TSV table format.

        Rows are ``context<TAB>next_token<TAB>probability``. Lines starting
        with ``#`` are comments. A directive line
        ``@fallback_vocab_size<TAB>N`` sets the fallback vocabulary size.
        """
        path = Path(path)
        if not path.exists():
            raise SchemaError(f"file not found: {path}")
        table: dict[str, dict[str, float]] = {}
        fallback = DEFAULT_FALLBACK_VOCAB
        for lineno, line in enumerate(
            path.read_text(encoding="utf-8").splitlines(), start=1
        ):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == FALLBACK_DIRECTIVE:
                if len(parts) != 2:
                    raise SchemaError(f"{path}:{lineno}: malformed directive")
                try:
                    fallback = int(parts[1])
                except ValueError:
                    raise SchemaError(
                        f"{path}:{lineno}: fallback vocab size must be an integer"
                    ) from None
                continue
            if len(parts) != 3:
                raise SchemaError(
                    f"{path}:{lineno}: expected context<TAB>token<TAB>prob"
                )
            context, token, raw = parts
            try:
                prob = float(raw)
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: probability {raw!r} is not a number"
                ) from None
            row = table.setdefault(_normalize_context(context), {})
            if token in row:
                raise SchemaError(f"{path}:{lineno}: duplicate token {token!r}")
            row[token] = prob
        label = model_label if model_label is not None else f"mock:{path.name}"
        return cls(table, fallback_vocab_size=fallback, model_label=label)

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def _prob(self, context: str, token: str, temperature: float) -> float:
        row = self._table.get(context, {})
        listed_sum = math.fsum(row.values())
        remainder = max(0.0, 1.0 - listed_sum)
        fallback_each = remainder / self._fallback_vocab
        base = row.get(token, fallback_each)
        if base <= 0.0:
            raise BackendError(
                f"mock table assigns zero probability to {token!r} after "
                f"context {context!r}"
            )
        if temperature == 1.0:
            return base
        inv = 1.0 / temperature
        z = math.fsum(p**inv for p in row.values() if p > 0)
        if fallback_each > 0.0:
            z += self._fallback_vocab * fallback_each**inv
        return base**inv / z

    def score_continuation(
        self, prompt: str, continuation: str, temperature: float = 1.0
    ) -> ContinuationScore:
        if prompt and not (continuation[:1].isspace() or prompt[-1:].isspace()):
            raise BackendError(
                "mock backend tokenizes on whitespace; continuations must "
                "start at a word boundary"
            )
        tokens = continuation.split()
        if not tokens:
            raise BackendError(
                f"continuation {continuation!r} contains no mock tokens"
            )
        context_tokens = prompt.split()
        scores = []
        for token in tokens:
            context = " ".join(context_tokens)
            prob = self._prob(context, token, temperature)
            scores.append(TokenScore(token_text=token, logprob=math.log(prob)))
            context_tokens.append(token)
        total = math.fsum(s.logprob for s in scores)
        return ContinuationScore(
            prompt=prompt,
            continuation=continuation,
            token_scores=tuple(scores),
            total_logprob=total,
        )


def _normalize_context(context: str) -> str:
    return " ".join(context.split())


# ---------------------------------------------------------------------------
# Wire backend
# ---------------------------------------------------------------------------


class WireBackend:
    """HTTP client for a log-probability scoring service.

    The endpoint must be reachable at construction time (any HTTP response
    counts; only transport failures reject). Retries apply exclusively to
    transport errors — connection failures, timeouts and 5xx responses —
    with exponential backoff. 4xx responses are surfaced as capability or
    backend errors and never retried.
    """

    def __init__(
        self,
        endpoint: str,
        model_label: str = "wire",
        *,
        supports_temperature: bool = True,
        supports_full_logits: bool = False,
        max_retries: int = 3,
        backoff_seconds: float = 0.25,
        timeout_seconds: float = 60.0,
        probe: bool = True,
    ):
        if not endpoint:
            raise ValidationError("wire backend needs an endpoint URL")
        self.endpoint = endpoint
        self.max_retries = int(max_retries)
        self.backoff_seconds = float(backoff_seconds)
        self.timeout_seconds = float(timeout_seconds)
        self._descriptor = BackendDescriptor(
            backend_kind=WIRE_KIND,
            model_label=model_label,
            supports_temperature=supports_temperature,
            supports_full_logits=supports_full_logits,
        )
        if probe:
            try:
                requests.get(self.endpoint, timeout=self.timeout_seconds)
            except requests.RequestException as exc:
                raise TransportError(
                    f"scoring endpoint {self.endpoint!r} is unreachable: {exc}"
                ) from None

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def _post(self, payload: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_seconds * 2 ** (attempt - 1))
            try:
                response = requests.post(
                    self.endpoint, json=payload, timeout=self.timeout_seconds
                )
            except requests.RequestException as exc:
                last_exc = exc
                continue
            if response.status_code >= 500:
                last_exc = TransportError(
                    f"server error {response.status_code} from {self.endpoint}"
                )
                continue
            if response.status_code >= 400:
                detail = response.text.strip()
                if response.status_code in (501, 400) and "temperature" in detail:
                    raise CapabilityError(detail or "temperature unsupported")
                raise BackendError(
                    f"scoring request rejected ({response.status_code}): {detail}"
                )
            try:
                return response.json()
            except ValueError:
                raise BackendError(
                    f"non-JSON response from {self.endpoint}"
                ) from None
        raise TransportError(
            f"scoring request to {self.endpoint} failed after "
            f"{self.max_retries + 1} attempts: {last_exc}"
        )

    def score_continuation(
        self, prompt: str, continuation: str, temperature: float = 1.0
    ) -> ContinuationScore:
        data = self._post(
            {"prompt": prompt, "continuation": continuation, "temperature": temperature}
        )
        try:
            tokens = tuple(
                TokenScore(token_text=t["text"], logprob=float(t["logprob"]))
                for t in data["tokens"]
            )
            total = float(data["total_logprob"])
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed scoring response: {exc}") from None
        return ContinuationScore(
            prompt=prompt,
            continuation=continuation,
            token_scores=tokens,
            total_logprob=total,
        )


# ---------------------------------------------------------------------------
# Operations over a backend
# ---------------------------------------------------------------------------


def _check_temperature(backend: ScoringBackend, temperature: float) -> None:
    if not (isinstance(temperature, (int, float)) and temperature > 0):
        raise DomainError(f"temperature must be > 0, got {temperature}")
    if temperature != 1.0 and not backend.descriptor.supports_temperature:
        raise CapabilityError(
            f"backend {backend.descriptor.model_label!r} does not support "
            "temperature rescaling"
        )


def score_continuation(
    backend: ScoringBackend,
    prompt: str,
    continuation: str,
    temperature: float = 1.0,
) -> ContinuationScore:
    """Score a continuation given a prompt under the chain rule."""
    if not continuation:
        raise ValidationError("continuation must be non-empty")
    _check_temperature(backend, temperature)
    return backend.score_continuation(prompt, continuation, float(temperature))


def sequence_logprob(backend: ScoringBackend, text: str) -> float:
    """Total log-probability of a text (empty prompt), used for prompt priors."""
    if not text:
        raise ValidationError("text must be non-empty")
    return score_continuation(backend, "", text).total_logprob


def _log_sum_exp(logs: Sequence[float]) -> float:
    # Sorting first makes the result independent of input order, bitwise.
    ordered = sorted(logs)
    m = ordered[-1]
    if math.isinf(m):
        return m
    return m + math.log(math.fsum(math.exp(lp - m) for lp in ordered))


def country_distribution(
    backend: ScoringBackend,
    prompt: str,
    candidate_set: CandidateSet,
    temperature: float = 1.0,
) -> ProbDist:
    """Predictive distribution over candidate countries given a prompt.

    Per-country mass sums ``" " + alias`` continuation probabilities over
    all aliases, then normalizes over the candidate set. Alias order never
    affects the result.
    """
    _check_temperature(backend, temperature)
    logmasses = []
    for country in candidate_set:
        alias_logprobs = [
            score_continuation(
                backend, prompt, " " + alias, temperature
            ).total_logprob
            for alias in country.aliases
        ]
        logmasses.append(_log_sum_exp(alias_logprobs))
    return distribution_from_logmasses(candidate_set, logmasses)


def distribution_from_logmasses(
    candidate_set: CandidateSet, logmasses: Sequence[float]
) -> ProbDist:
    """Normalize per-country log-masses into a ProbDist (max-stabilized)."""
    if len(logmasses) != len(candidate_set):
        raise ValidationError("one log-mass per candidate country required")
    m = max(logmasses)
    if not math.isfinite(m):
        raise NormalizationError("log-masses contain a non-finite maximum")
    weights = [math.exp(lp - m) for lp in logmasses]
    total = math.fsum(weights)
    probs = tuple(w / total for w in weights)
    zeros = [
        name for name, p in zip(candidate_set.names, probs) if p <= 0.0
    ]
    if zeros:
        raise NormalizationError(
            f"countries received zero probability mass: {zeros}"
        )
    return ProbDist(candidate_set, probs)


def perplexity(
    backend: ScoringBackend, texts: Sequence[str], temperature: float = 1.0
) -> float:
    """exp(mean negative token log-likelihood) over a corpus of texts."""
    if not texts:
        raise ValidationError("perplexity needs at least one text")
    _check_temperature(backend, temperature)
    scores = [score_continuation(backend, "", t, temperature) for t in texts]
    n_tokens = sum(len(s.token_scores) for s in scores)
    total = math.fsum(s.total_logprob for s in scores)
    return math.exp(-total / n_tokens)
