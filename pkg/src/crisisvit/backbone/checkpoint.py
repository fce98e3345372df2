"""Parameter checkpoints: the unit of transfer between training stages.

A checkpoint is an immutable value holding a named parameter tree, the
``ModelConfig`` that determines its names and shapes, and an append-only
provenance list with one record per training stage. On disk it is a zip
archive with ``metadata.yaml`` and ``parameters.npz``.
"""

import hashlib
import io
import os
import zipfile
from dataclasses import dataclass, field
from functools import cache
from pathlib import Path
from typing import Any

import numpy as np
import torch
import torch.nn as nn
import yaml

from crisisvit.backbone.vit import VisionTransformer, build_model, init_head
from crisisvit.errors import ConfigurationError, IntegrityError
from crisisvit.models.config import ModelConfig, Normalization

FORMAT_VERSION = 1
SUPPORTED_FORMAT_VERSIONS = {1}

# Keys in external MAE/ViT weights that have no counterpart in the encoder
_EXTERNAL_SKIP_PREFIXES = ("decoder", "mask_token", "fc_norm", "head.")


@dataclass(frozen=True)
class ProvenanceStage:
    """One training stage that contributed to a parameter set."""

    dataset: str
    strategy: str
    epochs: int
    seed: int
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "epochs": self.epochs,
            "seed": self.seed,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProvenanceStage":
        return cls(
            dataset=str(data["dataset"]),
            strategy=str(data["strategy"]),
            epochs=int(data["epochs"]),
            seed=int(data["seed"]),
            details=dict(data.get("details") or {}),
        )


@cache
def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes a config determines."""
    with torch.device("meta"):
        model = VisionTransformer(config)
    return {name: tuple(t.shape) for name, t in model.state_dict().items()}


@dataclass(frozen=True)
class ParameterCheckpoint:
    """Immutable parameter tree plus config and provenance."""

    parameters: dict[str, torch.Tensor]
    model_config: ModelConfig
    provenance: tuple[ProvenanceStage, ...] = ()
    format_version: int = FORMAT_VERSION

    @classmethod
    def from_model(
        cls, model: VisionTransformer, provenance: tuple[ProvenanceStage, ...] = ()
    ) -> "ParameterCheckpoint":
        parameters = {name: t.detach().cpu().clone() for name, t in model.state_dict().items()}
        return cls(parameters=parameters, model_config=model.config, provenance=tuple(provenance))

    @property
    def num_classes(self) -> int:
        return self.model_config.num_classes

    @property
    def is_headless(self) -> bool:
        return self.model_config.num_classes == 0

    @property
    def encoder_parameters(self) -> dict[str, torch.Tensor]:
        return {name: t for name, t in self.parameters.items() if not name.startswith("head.")}

    @property
    def normalization(self) -> Normalization:
        """Input normalization recorded by the most recent stage that declared one."""
        for stage in reversed(self.provenance):
            if "normalization" in stage.details:
                return Normalization.from_dict(stage.details["normalization"])
        return Normalization()

    def verify(self) -> None:
        """Check names and shapes against the model config.

        Raises:
            IntegrityError: listing missing, orphan and mis-shaped parameters
        """
        expected = expected_shapes(self.model_config)
        missing = sorted(set(expected) - set(self.parameters))
        orphan = sorted(set(self.parameters) - set(expected))
        mismatched = sorted(
            name
            for name in set(expected) & set(self.parameters)
            if tuple(self.parameters[name].shape) != expected[name]
        )
        if missing or orphan or mismatched:
            parts = []
            if missing:
                parts.append(f"missing: {', '.join(missing)}")
            if orphan:
                parts.append(f"orphan: {', '.join(orphan)}")
            if mismatched:
                parts.append(f"wrong shape: {', '.join(mismatched)}")
            message = "checkpoint does not match its model config (" + "; ".join(parts) + ")"
            raise IntegrityError(message, missing, orphan)

    def to_model(self) -> VisionTransformer:
        """Instantiate a backbone carrying these parameters."""
        self.verify()
        model = build_model(self.model_config, seed=0)
        dtype = self.parameters["cls_token"].dtype
        model.to(dtype)
        model.load_state_dict(self.parameters, strict=True)
        return model

    def with_stage(self, stage: ProvenanceStage) -> "ParameterCheckpoint":
        """Return a copy with one more provenance record."""
        return ParameterCheckpoint(self.parameters, self.model_config, self.provenance + (stage,), self.format_version)

    def metadata(self) -> dict[str, Any]:
        return {
            "format_version": self.format_version,
            "model_config": self.model_config.to_dict(),
            "provenance": [stage.to_dict() for stage in self.provenance],
        }

    @property
    def provenance_digest(self) -> str:
        payload = yaml.safe_dump([stage.to_dict() for stage in self.provenance], sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    @property
    def digest(self) -> str:
        """Content digest over metadata and every parameter's bytes."""
        h = hashlib.sha256(yaml.safe_dump(self.metadata(), sort_keys=True).encode("utf-8"))
        for name in sorted(self.parameters):
            h.update(name.encode("utf-8"))
            h.update(self.parameters[name].contiguous().numpy().tobytes())
        return h.hexdigest()[:16]

    def save(self, path: Path) -> Path:
        """Write the archive atomically."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        buffer = io.BytesIO()
        np.savez(buffer, **{name: t.contiguous().numpy() for name, t in self.parameters.items()})
        tmp = path.with_name(path.name + ".tmp")
        with zipfile.ZipFile(tmp, "w") as archive:
            archive.writestr("metadata.yaml", yaml.safe_dump(self.metadata(), sort_keys=False))
            archive.writestr("parameters.npz", buffer.getvalue())
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, path: Path) -> "ParameterCheckpoint":
        """Read an archive written by ``save``.

        Raises:
            IntegrityError: on an unknown format version or mismatched parameters
        """
        with zipfile.ZipFile(path) as archive:
            metadata = yaml.safe_load(archive.read("metadata.yaml"))
            version = metadata.get("format_version")
            if version not in SUPPORTED_FORMAT_VERSIONS:
                raise IntegrityError(f"{path}: unsupported checkpoint format_version {version!r}")
            with np.load(io.BytesIO(archive.read("parameters.npz")), allow_pickle=False) as arrays:
                parameters = {name: torch.from_numpy(arrays[name].copy()) for name in arrays.files}
        checkpoint = cls(
            parameters=parameters,
            model_config=ModelConfig.from_dict(metadata["model_config"]),
            provenance=tuple(ProvenanceStage.from_dict(s) for s in metadata.get("provenance") or []),
            format_version=version,
        )
        checkpoint.verify()
        return checkpoint


def attach_head(checkpoint: ParameterCheckpoint, num_classes: int, seed: int) -> ParameterCheckpoint:
    """Swap the head without recording provenance (used inside training stages)."""
    if num_classes < 0:
        raise ConfigurationError(f"num_classes must be >= 0, got {num_classes}", field="num_classes")
    checkpoint.verify()
    parameters = {name: t.clone() for name, t in checkpoint.encoder_parameters.items()}
    config = checkpoint.model_config.with_classes(num_classes)
    if num_classes > 0:
        dtype = parameters["cls_token"].dtype
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            head = nn.Linear(config.hidden_dim, num_classes)
            init_head(head)
        parameters["head.weight"] = head.weight.detach().to(dtype).clone()
        parameters["head.bias"] = head.bias.detach().to(dtype).clone()
    return ParameterCheckpoint(parameters, config, checkpoint.provenance, checkpoint.format_version)


def replace_head(checkpoint: ParameterCheckpoint, new_num_classes: int, seed: int) -> ParameterCheckpoint:
    """Fresh head of a new width on a copy of the encoder.

    Encoder parameters are copied verbatim and a head-replacement record is
    appended to provenance. ``new_num_classes == 0`` strips the head.

    Raises:
        IntegrityError: if the checkpoint's parameters do not match its config
    """
    replaced = attach_head(checkpoint, new_num_classes, seed)
    record = ProvenanceStage(
        dataset="-",
        strategy="head-replacement",
        epochs=0,
        seed=seed,
        details={"num_classes": new_num_classes},
    )
    return replaced.with_stage(record)


def ingest_state_dict(path: Path, model_config: ModelConfig, dataset: str = "ImageNet-1k") -> ParameterCheckpoint:
    """Turn externally produced ViT/MAE weights into a headless encoder checkpoint.

    Args:
        path: A ``torch.save``-d state dict, optionally wrapped under "model"
        model_config: Architecture the weights are expected to match
        dataset: Dataset the external weights were trained on

    Raises:
        IntegrityError: if names or shapes do not match ``model_config``
    """
    path = Path(path)
    raw = torch.load(path, map_location="cpu", weights_only=True)
    for key in ("model", "state_dict"):
        if isinstance(raw, dict) and key in raw and isinstance(raw[key], dict):
            raw = raw[key]
    parameters = {
        name: tensor.detach().float().clone()
        for name, tensor in raw.items()
        if not name.startswith(_EXTERNAL_SKIP_PREFIXES)
    }
    config = model_config.with_classes(0)
    stage = ProvenanceStage(
        dataset=dataset,
        strategy="external",
        epochs=0,
        seed=0,
        details={"source": path.name, "sha256": hashlib.sha256(path.read_bytes()).hexdigest()[:16]},
    )
    checkpoint = ParameterCheckpoint(parameters, config, (stage,))
    checkpoint.verify()
    return checkpoint
