"""Stage that starts a lineage from externally produced weights."""

import zipfile
from pathlib import Path
from typing import Any

from crisisvit.backbone.checkpoint import ParameterCheckpoint, ingest_state_dict
from crisisvit.errors import ConfigurationError, DataError
from crisisvit.services.training import TrainingOutcome
from crisisvit.stages.base import PretrainStage, StageContext


class ExternalStage(PretrainStage):
    """Load a checkpoint archive or a plain ViT/MAE state dict.

    Archives keep their own provenance; state dicts get a fresh
    ``external`` record naming the dataset and the file digest.
    """

    kind = "external"

    def __init__(self, path: str, dataset: str = "ImageNet-1k", label: str = "Multi-Class (1k)"):
        if not path:
            raise ConfigurationError("external stage needs a path", field="path")
        self.path = path
        self.dataset = dataset
        self.label = label

    @property
    def methodology_label(self) -> str:
        return self.label

    @property
    def dataset_label(self) -> str:
        return self.dataset

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "path": self.path, "dataset": self.dataset, "label": self.label}

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "ExternalStage":
        spec = {k: v for k, v in spec.items() if k != "kind"}
        unknown = sorted(set(spec) - {"path", "dataset", "label"})
        if unknown:
            raise ConfigurationError(f"unknown external stage field(s): {', '.join(unknown)}", field=unknown[0])
        return cls(**spec)

    def resolve_path(self, base_dir: Path) -> Path:
        path = Path(self.path).expanduser()
        return path if path.is_absolute() else Path(base_dir) / path

    def run(self, checkpoint: ParameterCheckpoint | None, context: StageContext) -> TrainingOutcome:
        if checkpoint is not None:
            raise ConfigurationError("an external stage can only start a pipeline", field="stages")
        path = self.resolve_path(context.base_dir)
        if not path.exists():
            raise DataError(f"external checkpoint not found: {path}")
        if zipfile.is_zipfile(path):
            loaded = ParameterCheckpoint.load(path)
        else:
            loaded = ingest_state_dict(path, context.model_config, self.dataset)
        return TrainingOutcome(checkpoint=loaded, details={"source": str(path)})
