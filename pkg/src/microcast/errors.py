"""Exception hierarchy.

Every error carries a stable ``error_class`` string; the CLI prints it as the
first token of its one-line failure message and the HTTP layer maps it onto
status codes.
"""

from __future__ import annotations


class MicrocastError(Exception):
    error_class = "error"


class InvalidArgumentError(MicrocastError, ValueError):
    error_class = "invalid-argument"


class EmptyDatasetError(MicrocastError):
    """No aligned rows survived; ``skip_counts`` says why."""

    error_class = "empty-dataset"

    def __init__(self, message: str, skip_counts: dict[str, int] | None = None):
        super().__init__(message)
        self.skip_counts = dict(skip_counts or {})


class CorruptStackError(MicrocastError):
    error_class = "corrupt-stack"


class DivergenceError(MicrocastError, ArithmeticError):
    error_class = "divergence"

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class MissingForecastError(MicrocastError):
    error_class = "missing-forecast"

    def __init__(self, horizons: list[int]):
        super().__init__(f"no station forecast for horizons {horizons}")
        self.horizons = list(horizons)


class IncompatibleBundleError(MicrocastError):
    error_class = "incompatible-bundle"

    def __init__(self, field: str, expected: object, got: object):
        super().__init__(f"bundle field {field!r} differs: expected {expected!r}, got {got!r}")
        self.field = field


class SchemaVersionError(MicrocastError):
    error_class = "schema-version"


class UndefinedMetricError(MicrocastError):
    error_class = "undefined-metric"

    def __init__(self, message: str, excluded_count: int):
        super().__init__(message)
        self.excluded_count = excluded_count


class CapabilityError(MicrocastError):
    error_class = "capability"


class ProviderIOError(MicrocastError, OSError):
    error_class = "io"

    def __init__(self, path: str, reason: str = "not found"):
        super().__init__(f"{path}: {reason}")
        self.path = path


class MalformedCSVError(MicrocastError):
    error_class = "malformed-csv"

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class InsufficientHistoryError(InvalidArgumentError):
    error_class = "insufficient-history"

    def __init__(self, required: int, available: int, channel: str | None = None):
        where = f" for {channel}" if channel else ""
        super().__init__(f"need {required} valid trailing steps{where}, have {available}")
        self.required = required
        self.available = available
        self.channel = channel


class UnknownPresetError(MicrocastError):
    error_class = "unknown-preset"


class ConfigError(MicrocastError):
    error_class = "config"
