"""Exception taxonomy shared across the package.

The CLI maps exceptions to exit codes: ConfigError and subclasses exit 2,
DataError and subclasses (plus builtin OSError / ValueError / LookupError
raised on bad inputs) exit 3, anything else exits 4.
"""

from __future__ import annotations


class RankMatchError(Exception):
    """Base class for package-specific errors."""


class ConfigError(RankMatchError):
    """Invalid configuration, flags, or hyperparameters."""


class SafetyError(ConfigError):
    """Refusing a destructive action (e.g. non-empty output dir without force)."""


class DataError(RankMatchError):
    """Problem with input data files or their contents."""


class RecordError(DataError):
    """A malformed record. Carries source path and 1-based line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        if path is not None or line is not None:
            message = f"{path if path is not None else '<input>'}:{line}: {message}"
        super().__init__(message)
        self.path = path
        self.line = line


class DomainError(DataError):
    """A URL whose host cannot be extracted."""


class EmptyInputError(DataError):
    """An input that must be non-empty is empty."""


class DegenerateInputError(DataError):
    """Input that is structurally valid but meaningless to the operation."""


class SchemaError(DataError):
    """Cross-file inconsistency, e.g. roster model missing from a loss table."""


class CapacityError(DataError):
    """A selection target exceeds the available population."""


class OverlapError(DataError):
    """Two selections that must be disjoint would overlap."""


class LabelError(DataError):
    """A training set with missing or single-class labels."""


class FormatError(DataError):
    """A file whose framing or declared version is not understood."""


class CorruptionError(DataError):
    """A file that fails checksum or truncation checks."""


class StaleArtifactError(DataError):
    """A cached pipeline artifact no longer matches its recorded digests."""
