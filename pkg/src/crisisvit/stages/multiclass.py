"""Multi-class supervised stages: incident, place or joint vocabulary."""

from dataclasses import asdict
from typing import Any

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.models.config import PretrainStrategy, TrainSchedule
from crisisvit.models.labels import get_vocabulary
from crisisvit.services.resolver import resolve_single_label
from crisisvit.services.supervised import pretrain_multiclass
from crisisvit.services.training import TrainingOutcome
from crisisvit.stages.base import PretrainStage, StageContext, dataclass_from_spec

LABELS = {
    "multiclass_incident": "Multi-Class (Incident)",
    "multiclass_places": "Multi-Class (Places)",
    "multiclass_joint": "Multi-Class (Incident+Places)",
}


class MulticlassStage(PretrainStage):
    kind = "multiclass"

    def __init__(self, strategy: PretrainStrategy, schedule: TrainSchedule | None = None):
        strategy.validate()
        if schedule is not None:
            schedule.validate()
        self.strategy = strategy
        self.schedule = schedule  # None = the context's schedule

    @property
    def methodology_label(self) -> str:
        return LABELS[self.strategy.kind]

    @property
    def epochs(self) -> int:
        return self.strategy.epochs

    @property
    def is_supervised(self) -> bool:
        return True

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = asdict(self.strategy)
        if self.schedule is not None:
            spec["schedule"] = asdict(self.schedule)
        return spec

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "MulticlassStage":
        spec = dict(spec)
        schedule = spec.pop("schedule", None)
        return cls(
            dataclass_from_spec(PretrainStrategy, spec),
            dataclass_from_spec(TrainSchedule, schedule) if schedule is not None else None,
        )

    def run(self, checkpoint: ParameterCheckpoint | None, context: StageContext) -> TrainingOutcome:
        vocabulary = get_vocabulary(self.strategy.vocabulary_name)
        return pretrain_multiclass(
            checkpoint,
            resolve_single_label(context.entries, vocabulary),
            self.strategy,
            self.schedule or context.schedule,
            entries=context.entries,
            image_dir=context.image_dir,
            model_config=context.model_config,
            dataset=context.dataset,
            normalization=context.normalization,
            ledger=context.ledger,
            settings=context.settings,
            out=context.out,
        )
