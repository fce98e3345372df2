"""Abstract base class for pre-training stages."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, ClassVar, TypeVar

from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.errors import ConfigurationError
from crisisvit.models.config import ModelConfig, Normalization, TrainSchedule
from crisisvit.models.records import DatasetManifestEntry
from crisisvit.services.ledger import RunLedger
from crisisvit.services.training import TrainingOutcome
from crisisvit.settings import Settings

T = TypeVar("T")


@dataclass
class StageContext:
    """Everything a stage needs besides the incoming checkpoint."""

    model_config: ModelConfig
    image_dir: Path
    entries: list[DatasetManifestEntry] = field(default_factory=list)
    settings: Settings = field(default_factory=Settings)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    dataset: str = "Incidents1M"
    normalization: Normalization | None = None
    ledger: RunLedger | None = None
    run_dir: Path | None = None  # stage checkpoints go to <run_dir>/checkpoints when set
    base_dir: Path = Path(".")  # relative paths in stage specs resolve against this
    out: Console | None = None


class PretrainStage(ABC):
    """One step of a pre-training pipeline.

    A stage receives the checkpoint produced so far (None for the first
    stage) and returns a new one with its own provenance record appended.
    """

    kind: ClassVar[str]

    @property
    @abstractmethod
    def methodology_label(self) -> str:
        """Report label, e.g. "Multi-Class (Places)"."""
        pass

    @property
    def dataset_label(self) -> str:
        """Dataset the stage trains on; empty when it trains on nothing."""
        return "Incidents1M"

    @property
    def epochs(self) -> int:
        return 0

    @abstractmethod
    def to_spec(self) -> dict[str, Any]:
        """Canonical mapping, the inverse of ``from_spec``."""
        pass

    @classmethod
    @abstractmethod
    def from_spec(cls, spec: dict[str, Any]) -> "PretrainStage":
        """Build a stage from an experiment-file mapping (``kind`` key included).

        Raises:
            ConfigurationError: on unknown keys or invalid values
        """
        pass

    @abstractmethod
    def run(self, checkpoint: ParameterCheckpoint | None, context: StageContext) -> TrainingOutcome:
        pass

    @property
    def is_supervised(self) -> bool:
        return False


def dataclass_from_spec(cls: type[T], spec: dict[str, Any], defaults: T | None = None) -> T:
    """Fill a config dataclass from a mapping, rejecting unknown keys."""
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(spec) - known)
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} field(s): {', '.join(unknown)}", field=unknown[0])
    values: dict[str, Any] = {}
    if defaults is not None:
        values = {f.name: getattr(defaults, f.name) for f in fields(cls)}  # type: ignore[arg-type]
    values.update(spec)
    return cls(**values)
