"""ViT-Base-compatible encoder shared by every pre-training strategy and downstream task.

Parameter names follow the widely used timm layout (``patch_embed.proj``,
``blocks.{i}.attn.qkv``, ``head`` ...) so externally produced ViT/MAE
weights load without renaming.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import torch
import torch.nn as nn
import torch.nn.functional as F

from crisisvit.errors import DimensionError, UsageError
from crisisvit.models.config import ModelConfig

if TYPE_CHECKING:
    from crisisvit.backbone.checkpoint import ParameterCheckpoint

HEAD_INIT_STD = 0.01
LAYER_NORM_EPS = 1e-6


@dataclass(frozen=True)
class ImageTensorBatch:
    """Normalized pixels plus the identifiers of the images they came from."""

    pixels: torch.Tensor  # batch x channels x image_size x image_size
    source_ids: tuple[str, ...]
    split: str = "train"
    labels: torch.Tensor | None = None

    def validate(self, config: ModelConfig) -> None:
        expected = (config.channels, config.image_size, config.image_size)
        if self.pixels.ndim != 4 or tuple(self.pixels.shape[1:]) != expected:
            raise DimensionError(f"batch shape {tuple(self.pixels.shape)} does not match (B, {expected})")
        if self.pixels.shape[0] < 1:
            raise DimensionError("batch is empty")
        if len(self.source_ids) != self.pixels.shape[0]:
            raise DimensionError("one source id is needed per image")


class PatchEmbed(nn.Module):
    """Non-overlapping patches projected to the embedding width."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        p = config.patch_size
        self.proj = nn.Conv2d(config.channels, config.hidden_dim, kernel_size=p, stride=p)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(x).flatten(2).transpose(1, 2)


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int, dropout: float = 0.0):
        super().__init__()
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)
        self.proj_drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, tokens, dim = x.shape
        qkv = self.qkv(x).reshape(batch, tokens, 3, self.num_heads, dim // self.num_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = ((q @ k.transpose(-2, -1)) * self.scale).softmax(dim=-1)
        x = (attn @ v).transpose(1, 2).reshape(batch, tokens, dim)
        return self.proj_drop(self.proj(x))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int, activation: str, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.ReLU() if activation == "relu" else nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.drop(self.fc2(self.drop(self.act(self.fc1(x)))))


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: float, activation: str, dropout: float = 0.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.attn = Attention(dim, num_heads, dropout)
        self.norm2 = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), activation, dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class VisionTransformer(nn.Module):
    """Class-token ViT with learned positional embeddings."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        dim = config.hidden_dim
        self.patch_embed = PatchEmbed(config)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.num_tokens, dim))
        self.pos_drop = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            Block(dim, config.num_heads, config.mlp_ratio, config.activation, config.dropout)
            for _ in range(config.depth)
        )
        self.norm = nn.LayerNorm(dim, eps=LAYER_NORM_EPS)
        self.head: nn.Module = nn.Linear(dim, config.num_classes) if config.num_classes > 0 else nn.Identity()

    @property
    def is_headless(self) -> bool:
        return self.config.num_classes == 0

    def init_weights(self) -> None:
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        w = self.patch_embed.proj.weight
        nn.init.xavier_uniform_(w.view(w.shape[0], -1))
        nn.init.zeros_(self.patch_embed.proj.bias)
        for module in self.blocks.modules():
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
        nn.init.ones_(self.norm.weight)
        nn.init.zeros_(self.norm.bias)
        if isinstance(self.head, nn.Linear):
            init_head(self.head)

    def _check_input(self, x: torch.Tensor) -> None:
        c = self.config
        if x.ndim != 4 or tuple(x.shape[1:]) != (c.channels, c.image_size, c.image_size):
            raise DimensionError(
                f"expected input (B, {c.channels}, {c.image_size}, {c.image_size}), got {tuple(x.shape)}"
            )

    def forward_features(self, x: torch.Tensor, keep_indices: torch.Tensor | None = None) -> torch.Tensor:
        """Encode images into normalized token embeddings.

        Args:
            x: Pixels, batch x channels x image_size x image_size
            keep_indices: Optional batch x visible patch indices; only those
                patches enter the encoder (masked-image training)

        Returns:
            Tokens of shape batch x (1 + patches) x hidden_dim, or
            batch x (1 + visible) x hidden_dim when keep_indices is given
        """
        self._check_input(x)
        tokens = self.patch_embed(x) + self.pos_embed[:, 1:, :]
        if keep_indices is not None:
            index = keep_indices.unsqueeze(-1).expand(-1, -1, tokens.shape[-1])
            tokens = torch.gather(tokens, dim=1, index=index)
        cls = (self.cls_token + self.pos_embed[:, :1, :]).expand(tokens.shape[0], -1, -1)
        tokens = self.pos_drop(torch.cat([cls, tokens], dim=1))
        for block in self.blocks:
            tokens = block(tokens)
        return self.norm(tokens)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Logits (batch x num_classes), or all tokens when headless."""
        tokens = self.forward_features(x)
        if self.is_headless:
            return tokens
        return self.head(tokens[:, 0])


def init_head(head: nn.Linear) -> None:
    nn.init.trunc_normal_(head.weight, std=HEAD_INIT_STD)
    nn.init.zeros_(head.bias)


def build_model(config: ModelConfig, seed: int = 0) -> VisionTransformer:
    """Construct and initialize a backbone.

    Initialization draws from a private generator state, so equal
    (config, seed) pairs give bit-identical parameters without disturbing
    the caller's RNG.

    Raises:
        ConfigurationError: if the config violates its invariants
    """
    config.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = VisionTransformer(config)
        model.init_weights()
    return model


def softmax_rows(logits: torch.Tensor) -> torch.Tensor:
    return F.softmax(logits, dim=-1)


def forward_classify(
    model: "VisionTransformer | ParameterCheckpoint", batch: ImageTensorBatch | torch.Tensor
) -> torch.Tensor:
    """Per-class probabilities for a batch; argmax is the predicted class.

    Raises:
        UsageError: if the model has no classification head
    """
    if not isinstance(model, VisionTransformer):
        model = model.to_model()
    if model.is_headless:
        raise UsageError("forward_classify needs a classification head; this model is a headless encoder")
    pixels = batch.pixels if isinstance(batch, ImageTensorBatch) else batch
    if isinstance(batch, ImageTensorBatch):
        batch.validate(model.config)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        probabilities = softmax_rows(model(pixels))
    model.train(was_training)
    return probabilities
