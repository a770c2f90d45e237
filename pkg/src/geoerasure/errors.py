"""Semantic exception hierarchy.

Public functions never raise bare ValueError/KeyError for contract
violations; they raise one of the classes below so callers (and the CLI
exit-code mapping) can discriminate between bad inputs, backend trouble,
and mathematical domain errors.
"""

from __future__ import annotations


class GeoErasureError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GeoErasureError, ValueError):
    """An input violates a documented invariant (shape, sign, sum, ...)."""


class SchemaError(ValidationError):
    """A data file does not conform to its documented schema."""


class TemplateError(ValidationError):
    """A prompt template is missing a required slot or is malformed."""


class ContractError(GeoErasureError):
    """Two objects that must agree do not (candidate sets, r values, ...)."""


class DomainError(GeoErasureError):
    """A mathematical precondition fails (support violation, tau <= 0, ...)."""


class ZeroPredictionError(DomainError):
    """A predicted probability of zero makes a ratio undefined."""

    def __init__(self, country_name: str, message: str | None = None):
        self.country_name = country_name
        super().__init__(
            message or f"predicted probability for {country_name!r} is zero"
        )


class NormalizationError(GeoErasureError):
    """A distribution cannot be normalized (zero or degenerate total mass)."""


class SplitError(GeoErasureError):
    """A train/test split strategy is infeasible for the given prompt set."""


class BackendError(GeoErasureError):
    """Base class for scoring-backend failures."""


class TransportError(BackendError):
    """The backend endpoint is unreachable or the request failed in transit.

    Transport errors are the only retryable backend failures.
    """


class CapabilityError(BackendError):
    """The backend does not support a requested feature (e.g. temperature)."""


class ReportError(GeoErasureError):
    """Report assembly failed; carries the prompts that could not be scored."""

    def __init__(self, message: str, failed_prompts: list[str] | None = None):
        self.failed_prompts = list(failed_prompts or [])
        super().__init__(message)


class ConfigError(GeoErasureError):
    """CLI/audit configuration is invalid (missing file, bad value, ...)."""
