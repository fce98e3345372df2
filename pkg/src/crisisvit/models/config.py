"""Configuration dataclasses for models and training runs.

Every config is a frozen dataclass with a ``validate()`` method that raises
``ConfigurationError`` naming the offending field. Defaults follow the
toolkit's published choices (ReLU backbone, Adam, batch 128 supervised /
1024 self-supervised, 0.75 mask ratio).
"""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from crisisvit.errors import ConfigurationError

ACTIVATIONS = ("relu", "gelu")
DECAY_SHAPES = ("cosine", "linear", "constant")
STRATEGY_KINDS = ("binary_sequential", "multiclass_incident", "multiclass_places", "multiclass_joint")
JOINT_HEADS = ("single", "split")
BATCH_SIZE_SWEEP = (32, 64, 128, 256, 512)

# ImageNet statistics, the usual normalization for ViT checkpoints
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class Normalization:
    """Per-channel pixel normalization applied before the backbone."""

    mean: tuple[float, ...] = IMAGENET_MEAN
    std: tuple[float, ...] = IMAGENET_STD

    def validate(self, channels: int) -> None:
        if len(self.mean) != channels or len(self.std) != channels:
            raise ConfigurationError(f"normalization needs {channels} mean/std values", field="normalization")
        if any(s <= 0 for s in self.std):
            raise ConfigurationError("normalization std must be positive", field="normalization.std")

    def to_dict(self) -> dict[str, list[float]]:
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Normalization":
        return cls(mean=tuple(float(v) for v in data["mean"]), std=tuple(float(v) for v in data["std"]))


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of a ViT-style backbone plus its classification head."""

    image_size: int = 224
    patch_size: int = 16
    channels: int = 3
    depth: int = 12
    hidden_dim: int = 768
    num_heads: int = 12
    mlp_ratio: float = 4.0
    activation: str = "relu"
    num_classes: int = 0  # 0 = headless encoder
    dropout: float = 0.0

    @classmethod
    def vit_base(cls, num_classes: int = 0) -> "ModelConfig":
        """ViT-Base/16 at 224px."""
        return cls(num_classes=num_classes)

    @classmethod
    def tiny(cls, num_classes: int = 0) -> "ModelConfig":
        """Desk-scale model for tests and toy experiments."""
        return cls(
            image_size=32, patch_size=8, depth=2, hidden_dim=32, num_heads=4, mlp_ratio=2.0, num_classes=num_classes
        )

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2

    @property
    def num_tokens(self) -> int:
        """Sequence length including the class token."""
        return 1 + self.num_patches

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    def validate(self) -> None:
        """Check structural invariants.

        Raises:
            ConfigurationError: naming the first offending field
        """
        for name in ("image_size", "patch_size", "channels", "hidden_dim", "num_heads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}", field=name)
        if self.image_size % self.patch_size != 0:
            raise ConfigurationError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}", field="image_size"
            )
        if self.hidden_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}", field="hidden_dim"
            )
        if self.depth < 1:
            raise ConfigurationError(f"depth must be >= 1, got {self.depth}", field="depth")
        if self.num_classes < 0:
            raise ConfigurationError(f"num_classes must be >= 0, got {self.num_classes}", field="num_classes")
        if self.mlp_ratio <= 0:
            raise ConfigurationError("mlp_ratio must be positive", field="mlp_ratio")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}", field="activation")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must be in [0, 1)", field="dropout")

    def encoder_signature(self) -> dict[str, Any]:
        """Fields that determine encoder parameters (everything but the head)."""
        data = asdict(self)
        data.pop("num_classes")
        data.pop("dropout")
        return data

    def with_classes(self, num_classes: int) -> "ModelConfig":
        return replace(self, num_classes=num_classes)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model fields: {sorted(unknown)}", field=sorted(unknown)[0])
        return cls(**data)


@dataclass(frozen=True)
class TrainSchedule:
    """Optimizer schedule shared by supervised pre-training and fine-tuning."""

    learning_rate: float = 1e-4
    warmup_fraction: float = 0.05
    decay: str = "cosine"
    grad_clip: float | None = 1.0
    label_smoothing: float = 0.0
    weight_decay: float = 0.0

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive", field="learning_rate")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigurationError("warmup_fraction must be in [0, 1)", field="warmup_fraction")
        if self.decay not in DECAY_SHAPES:
            raise ConfigurationError(f"decay must be one of {DECAY_SHAPES}", field="decay")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive", field="grad_clip")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigurationError("label_smoothing must be in [0, 1)", field="label_smoothing")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be >= 0", field="weight_decay")


@dataclass(frozen=True)
class SslTrainConfig:
    """Masked-image self-supervised training settings."""

    mask_ratio: float = 0.75
    epochs: int = 400
    batch_size: int = 1024
    optimizer: str = "adam"
    learning_rate: float = 1.5e-4
    weight_decay: float = 0.0
    warmup_fraction: float = 0.05
    seed: int = 0
    decoder_depth: int = 4
    decoder_dim: int = 256
    decoder_heads: int = 8
    norm_pix_loss: bool = True
    max_steps: int | None = None
    max_bad_fraction: float = 0.01  # abort when more images than this fail to decode

    def validate(self) -> None:
        if not 0.0 < self.mask_ratio < 1.0:
            raise ConfigurationError(f"mask_ratio must be in (0, 1), got {self.mask_ratio}", field="mask_ratio")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}", field="epochs")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}", field="batch_size")
        if self.optimizer != "adam":
            raise ConfigurationError("optimizer must be 'adam'", field="optimizer")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive", field="learning_rate")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigurationError("warmup_fraction must be in [0, 1)", field="warmup_fraction")
        if self.decoder_depth < 1 or self.decoder_dim < 1:
            raise ConfigurationError("decoder depth and width must be positive", field="decoder_depth")
        if self.decoder_dim % self.decoder_heads != 0:
            raise ConfigurationError("decoder_dim must be divisible by decoder_heads", field="decoder_dim")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1", field="max_steps")
        if not 0.0 <= self.max_bad_fraction <= 1.0:
            raise ConfigurationError("max_bad_fraction must be in [0, 1]", field="max_bad_fraction")


@dataclass(frozen=True)
class PretrainStrategy:
    """One supervised pre-training methodology over Incidents1M labels."""

    kind: str
    epochs: int = 10
    batch_size: int = 128
    seed: int = 0
    negative_ratio: float = 1.0  # binary_sequential only
    joint_head: str = "single"  # multiclass_joint only
    holdout_fraction: float = 0.05

    @property
    def vocabulary_name(self) -> str:
        """Label vocabulary this strategy trains against."""
        return {
            "multiclass_incident": "incident",
            "multiclass_places": "place",
            "multiclass_joint": "joint",
            "binary_sequential": "joint",
        }[self.kind]

    @property
    def is_multiclass(self) -> bool:
        return self.kind.startswith("multiclass_")

    def validate(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"unknown strategy kind '{self.kind}'", field="kind")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}", field="epochs")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}", field="batch_size")
        if self.negative_ratio <= 0:
            raise ConfigurationError("negative_ratio must be positive", field="negative_ratio")
        if self.joint_head not in JOINT_HEADS:
            raise ConfigurationError(f"joint_head must be one of {JOINT_HEADS}", field="joint_head")
        if self.joint_head == "split" and self.kind != "multiclass_joint":
            raise ConfigurationError("joint_head 'split' only applies to multiclass_joint", field="joint_head")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigurationError("holdout_fraction must be in (0, 1)", field="holdout_fraction")


@dataclass(frozen=True)
class FinetuneConfig:
    """Downstream fine-tuning settings."""

    epochs: int = 10
    batch_size: int = 128
    schedule: TrainSchedule = field(default_factory=lambda: TrainSchedule(learning_rate=5e-5))
    augment: bool = False  # random resized crop + flip at train time
    keep_best: bool = True

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}", field="epochs")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}", field="batch_size")
        self.schedule.validate()
