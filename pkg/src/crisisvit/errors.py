"""Exception hierarchy for crisisvit.

Every error carries the process exit code the CLI uses when it escapes a
command: 2 for configuration/validation problems, 3 for data problems and
4 for training failures.
"""

from dataclasses import dataclass


class CrisisViTError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(CrisisViTError, ValueError):
    """A config value violates its declared constraints."""

    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class Violation:
    """One failed check of an experiment file, addressed by field path."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ValidationError(ConfigurationError):
    """An experiment file failed validation."""

    def __init__(self, violations: list[Violation]):
        lines = "; ".join(str(v) for v in violations)
        super().__init__(f"{len(violations)} violation(s): {lines}")
        self.violations = violations


class DataError(CrisisViTError):
    """Input data is missing, empty or unreadable."""

    exit_code = 3


class IntegrityError(DataError):
    """Stored artifacts disagree with what they claim to contain."""

    def __init__(self, message: str, missing: list[str] | None = None, orphan: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []
        self.orphan = orphan or []


class VocabularyError(DataError):
    """A class name is not part of the vocabulary it was looked up in."""


class StatisticsError(CrisisViTError, ValueError):
    """Inputs to a statistical procedure are malformed."""

    exit_code = 3


class TrainingError(CrisisViTError):
    """A training stage failed."""

    exit_code = 4


class DimensionError(CrisisViTError, ValueError):
    """Tensor shapes do not line up."""

    exit_code = 4


class UsageError(CrisisViTError):
    """An operation was called on an object that cannot support it."""

    exit_code = 4
