"""Sequential one-vs-rest supervised stage."""

from dataclasses import asdict
from typing import Any

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.models.config import PretrainStrategy, TrainSchedule
from crisisvit.models.labels import LabelVocabulary, joint_vocabulary
from crisisvit.services.resolver import make_binary_tasks
from crisisvit.services.supervised import pretrain_binary_sequential
from crisisvit.services.training import TrainingOutcome
from crisisvit.stages.base import PretrainStage, StageContext, dataclass_from_spec


class BinarySequentialStage(PretrainStage):
    kind = "binary_sequential"

    def __init__(
        self,
        strategy: PretrainStrategy,
        schedule: TrainSchedule | None = None,
        classes: list[str] | None = None,
    ):
        strategy.validate()
        if schedule is not None:
            schedule.validate()
        self.strategy = strategy
        self.schedule = schedule
        # Optional subset of joint classes (toy runs); order still follows the joint vocabulary
        self.classes = list(classes) if classes else None

    @property
    def methodology_label(self) -> str:
        return "Binary"

    @property
    def epochs(self) -> int:
        return self.strategy.epochs

    @property
    def is_supervised(self) -> bool:
        return True

    def vocabulary(self) -> LabelVocabulary:
        joint = joint_vocabulary()
        if self.classes is None:
            return joint
        for name in self.classes:
            joint.index(name)
        return LabelVocabulary("joint-subset", tuple(c for c in joint.classes if c in self.classes))

    def to_spec(self) -> dict[str, Any]:
        spec: dict[str, Any] = asdict(self.strategy)
        if self.schedule is not None:
            spec["schedule"] = asdict(self.schedule)
        if self.classes is not None:
            spec["classes"] = list(self.classes)
        return spec

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "BinarySequentialStage":
        spec = dict(spec)
        schedule = spec.pop("schedule", None)
        classes = spec.pop("classes", None)
        return cls(
            dataclass_from_spec(PretrainStrategy, spec),
            dataclass_from_spec(TrainSchedule, schedule) if schedule is not None else None,
            classes,
        )

    def run(self, checkpoint: ParameterCheckpoint | None, context: StageContext) -> TrainingOutcome:
        vocabulary = self.vocabulary()
        tasks = make_binary_tasks(
            context.entries, vocabulary, self.strategy.negative_ratio, self.strategy.seed, context.out
        )
        return pretrain_binary_sequential(
            checkpoint,
            tasks,
            self.strategy,
            self.schedule or context.schedule,
            image_dir=context.image_dir,
            vocabulary=vocabulary,
            model_config=context.model_config,
            dataset=context.dataset,
            normalization=context.normalization,
            ledger=context.ledger,
            settings=context.settings,
            out=context.out,
        )
