"""Errors raised by the finetuning package."""

from __future__ import annotations


class FinetuneError(Exception):
    """Base class for this package's errors."""


class ConfigError(FinetuneError):
    """Invalid configuration, missing file, or unusable model."""


class SchemaError(FinetuneError, ValueError):
    """An input file does not match its documented format."""


class SplitError(FinetuneError):
    """A split strategy is infeasible for the given prompts."""


class TrainingDiverged(FinetuneError):
    """Loss became non-finite; the last checkpoint was preserved."""
