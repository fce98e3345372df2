"""Masked-image self-supervised stage."""

from dataclasses import asdict
from typing import Any

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.errors import ConfigurationError
from crisisvit.models.config import SslTrainConfig
from crisisvit.services.mae import SSL_SPLIT_SELECTORS, pretrain_ssl, select_ssl_split
from crisisvit.services.training import TrainingOutcome
from crisisvit.stages.base import PretrainStage, StageContext, dataclass_from_spec


class SslStage(PretrainStage):
    kind = "ssl"

    def __init__(self, config: SslTrainConfig, split: str = "all"):
        config.validate()
        if split not in SSL_SPLIT_SELECTORS:
            raise ConfigurationError(f"split must be one of {SSL_SPLIT_SELECTORS}", field="split")
        self.config = config
        self.split = split

    @property
    def methodology_label(self) -> str:
        return "Self-Supervised"

    @property
    def epochs(self) -> int:
        return self.config.epochs

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "split": self.split, **asdict(self.config)}

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "SslStage":
        spec = {k: v for k, v in spec.items() if k != "kind"}
        split = spec.pop("split", "all")
        return cls(dataclass_from_spec(SslTrainConfig, spec), split)

    def run(self, checkpoint: ParameterCheckpoint | None, context: StageContext) -> TrainingOutcome:
        return pretrain_ssl(
            select_ssl_split(context.entries, self.split),
            context.model_config,
            self.config,
            image_dir=context.image_dir,
            base=checkpoint,
            dataset=context.dataset,
            normalization=context.normalization,
            ledger=context.ledger,
            settings=context.settings,
            out=context.out,
        )
