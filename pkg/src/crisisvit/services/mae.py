"""Masked-image self-supervised pre-training.

Random patches are hidden, the encoder sees only the visible remainder and a
light decoder reconstructs the hidden patches. The reconstruction error is
counted over hidden patches only.
"""

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint, ProvenanceStage, attach_head
from crisisvit.backbone.vit import LAYER_NORM_EPS, Block, VisionTransformer, build_model
from crisisvit.errors import ConfigurationError, DataError, DimensionError
from crisisvit.models.config import ModelConfig, Normalization, SslTrainConfig
from crisisvit.models.records import DatasetManifestEntry
from crisisvit.services.images import ImageDataset, ImageItem, build_transform, make_loader
from crisisvit.services.ledger import RunLedger
from crisisvit.services.training import (
    EpochStats,
    TrainingOutcome,
    guard_split,
    make_optimizer,
    make_scheduler,
    progress_bar,
)
from crisisvit.settings import Settings, seed_everything

console = Console()

SSL_SPLIT_SELECTORS = ("all", "positive")


def mask_count(total_patches: int, mask_ratio: float) -> int:
    """Number of hidden patches: mask_ratio x total, rounded half-up.

    Raises:
        ConfigurationError: if the ratio is outside (0, 1) or hides none/all patches
    """
    if not 0.0 < mask_ratio < 1.0:
        raise ConfigurationError(f"mask_ratio must be in (0, 1), got {mask_ratio}", field="mask_ratio")
    if total_patches < 2:
        raise ConfigurationError(f"need at least 2 patches to mask, got {total_patches}", field="total_patches")
    count = math.floor(mask_ratio * total_patches + 0.5)
    if count in (0, total_patches):
        raise ConfigurationError(
            f"mask_ratio {mask_ratio} over {total_patches} patches leaves nothing masked or nothing visible",
            field="mask_ratio",
        )
    return count


@dataclass(frozen=True)
class MaskPlan:
    """Which patches of one image are hidden."""

    total_patches: int
    masked_indices: tuple[int, ...]
    mask_ratio: float

    def __post_init__(self) -> None:
        expected = mask_count(self.total_patches, self.mask_ratio)
        if len(self.masked_indices) != expected:
            raise ConfigurationError(
                f"plan hides {len(self.masked_indices)} patches, ratio requires {expected}", field="masked_indices"
            )
        if list(self.masked_indices) != sorted(set(self.masked_indices)):
            raise ConfigurationError("masked indices must be sorted and unique", field="masked_indices")
        if self.masked_indices[0] < 0 or self.masked_indices[-1] >= self.total_patches:
            raise ConfigurationError("masked index out of range", field="masked_indices")

    @property
    def visible_indices(self) -> tuple[int, ...]:
        hidden = set(self.masked_indices)
        return tuple(i for i in range(self.total_patches) if i not in hidden)

    def as_tensor(self) -> torch.Tensor:
        """1.0 at hidden patches, 0.0 at visible ones."""
        mask = torch.zeros(self.total_patches)
        mask[list(self.masked_indices)] = 1.0
        return mask


def sample_mask(total_patches: int, mask_ratio: float, seed: int) -> MaskPlan:
    """Draw hidden patches uniformly without replacement."""
    count = mask_count(total_patches, mask_ratio)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total_patches, size=count, replace=False)
    return MaskPlan(total_patches, tuple(int(i) for i in np.sort(chosen)), mask_ratio)


def random_masking(
    batch: int, total_patches: int, mask_ratio: float, generator: torch.Generator
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Independent mask per image via argsort of uniform noise.

    Returns:
        keep indices (B x visible), mask (B x N, 1 = hidden) and the
        permutation that restores patch order (B x N)
    """
    hidden = mask_count(total_patches, mask_ratio)
    keep = total_patches - hidden
    noise = torch.rand(batch, total_patches, generator=generator)
    shuffle = torch.argsort(noise, dim=1)
    restore = torch.argsort(shuffle, dim=1)
    mask = torch.ones(batch, total_patches)
    mask[:, :keep] = 0.0
    mask = torch.gather(mask, dim=1, index=restore)
    return shuffle[:, :keep], mask, restore


def patchify(pixels: torch.Tensor, patch_size: int) -> torch.Tensor:
    """B x C x H x W -> B x patches x (p*p*C), patches in row-major order."""
    b, c, h, w = pixels.shape
    gh, gw = h // patch_size, w // patch_size
    x = pixels.reshape(b, c, gh, patch_size, gw, patch_size)
    x = torch.einsum("nchpwq->nhwpqc", x)
    return x.reshape(b, gh * gw, patch_size * patch_size * c)


def normalize_patches(patches: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    mean = patches.mean(dim=-1, keepdim=True)
    var = patches.var(dim=-1, keepdim=True)
    return (patches - mean) / (var + eps) ** 0.5


def reconstruction_loss(
    predicted: torch.Tensor, target: torch.Tensor, plan: "MaskPlan | torch.Tensor"
) -> torch.Tensor:
    """Mean squared error over hidden patches only.

    Args:
        predicted: patches x patch_dim, or batch x patches x patch_dim
        target: same shape as ``predicted``
        plan: a MaskPlan (single image) or a mask tensor, 1 = hidden

    Raises:
        DimensionError: if shapes disagree or the mask hides nothing
    """
    if predicted.shape != target.shape:
        raise DimensionError(f"prediction shape {tuple(predicted.shape)} != target shape {tuple(target.shape)}")
    mask = plan.as_tensor() if isinstance(plan, MaskPlan) else plan
    mask = mask.to(device=predicted.device, dtype=predicted.dtype)
    if predicted.ndim < 2 or tuple(mask.shape) != tuple(predicted.shape[:-1]):
        raise DimensionError(f"mask shape {tuple(mask.shape)} does not cover patches {tuple(predicted.shape[:-1])}")
    hidden = mask.sum()
    if hidden == 0:
        raise DimensionError("mask hides no patches; the loss is undefined")
    per_patch = ((predicted - target) ** 2).mean(dim=-1)
    return (per_patch * mask).sum() / hidden


class MaskedAutoencoder(nn.Module):
    """Headless ViT encoder plus a reconstruction decoder."""

    def __init__(self, encoder: VisionTransformer, ssl_config: SslTrainConfig):
        super().__init__()
        if not encoder.is_headless:
            raise ConfigurationError("masked-image training needs a headless encoder", field="num_classes")
        self.encoder = encoder
        self.ssl_config = ssl_config
        config = encoder.config
        width = ssl_config.decoder_dim
        self.decoder_embed = nn.Linear(config.hidden_dim, width)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, width))
        self.decoder_pos_embed = nn.Parameter(torch.zeros(1, config.num_tokens, width))
        self.decoder_blocks = nn.ModuleList(
            Block(width, ssl_config.decoder_heads, config.mlp_ratio, config.activation)
            for _ in range(ssl_config.decoder_depth)
        )
        self.decoder_norm = nn.LayerNorm(width, eps=LAYER_NORM_EPS)
        self.decoder_pred = nn.Linear(width, config.patch_dim)
        self._init_decoder()

    def _init_decoder(self) -> None:
        nn.init.trunc_normal_(self.mask_token, std=0.02)
        nn.init.trunc_normal_(self.decoder_pos_embed, std=0.02)
        for module in [self.decoder_embed, self.decoder_pred, *self.decoder_blocks.modules()]:
            if isinstance(module, nn.Linear):
                nn.init.xavier_uniform_(module.weight)
                nn.init.zeros_(module.bias)

    def forward_decoder(self, latent: torch.Tensor, restore: torch.Tensor) -> torch.Tensor:
        x = self.decoder_embed(latent)
        hidden = restore.shape[1] + 1 - x.shape[1]
        patches = torch.cat([x[:, 1:, :], self.mask_token.expand(x.shape[0], hidden, -1)], dim=1)
        patches = torch.gather(patches, dim=1, index=restore.unsqueeze(-1).expand(-1, -1, x.shape[2]))
        x = torch.cat([x[:, :1, :], patches], dim=1) + self.decoder_pos_embed
        for block in self.decoder_blocks:
            x = block(x)
        return self.decoder_pred(self.decoder_norm(x))[:, 1:, :]

    def forward(
        self, pixels: torch.Tensor, generator: torch.Generator
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Loss, predicted patches and the mask used."""
        config = self.encoder.config
        keep, mask, restore = random_masking(
            pixels.shape[0], config.num_patches, self.ssl_config.mask_ratio, generator
        )
        keep, mask, restore = keep.to(pixels.device), mask.to(pixels.device), restore.to(pixels.device)
        latent = self.encoder.forward_features(pixels, keep_indices=keep)
        if latent.shape[1] != 1 + keep.shape[1]:
            raise DimensionError(f"encoder produced {latent.shape[1]} tokens for {keep.shape[1]} visible patches")
        predicted = self.forward_decoder(latent, restore)
        target = patchify(pixels, config.patch_size)
        if self.ssl_config.norm_pix_loss:
            target = normalize_patches(target)
        return reconstruction_loss(predicted, target, mask), predicted, mask


def select_ssl_split(entries: list[DatasetManifestEntry], selector: str = "all") -> list[DatasetManifestEntry]:
    """Fetched entries used for self-supervision: all of them, or only labeled ones."""
    if selector not in SSL_SPLIT_SELECTORS:
        raise ConfigurationError(f"split selector must be one of {SSL_SPLIT_SELECTORS}", field="split")
    fetched = [e for e in entries if e.is_fetched]
    if selector == "positive":
        return [e for e in fetched if e.has_positive]
    return fetched


def pretrain_ssl(
    split: list[DatasetManifestEntry],
    model_config: ModelConfig,
    ssl_config: SslTrainConfig,
    *,
    image_dir: Path,
    base: ParameterCheckpoint | None = None,
    dataset: str = "Incidents1M",
    normalization: Normalization | None = None,
    ledger: RunLedger | None = None,
    settings: Settings | None = None,
    out: Console | None = None,
) -> TrainingOutcome:
    """Self-supervised pre-training of a headless encoder.

    Args:
        split: Manifest entries whose fetched images are trained on
        model_config: Encoder architecture (the head width is ignored)
        ssl_config: Masking, decoder and optimizer settings
        image_dir: Content-addressed image store
        base: Optional encoder to continue from; its provenance is kept

    Returns:
        Outcome whose checkpoint is a headless encoder with one more
        provenance stage

    Raises:
        ConfigurationError: on invalid configs or an incompatible base
        DataError: on an empty split or too many undecodable images
    """
    out = out or console
    settings = settings or Settings()
    ssl_config.validate()
    model_config = model_config.with_classes(0)
    model_config.validate()
    fetched = [e for e in split if e.is_fetched]
    if not fetched:
        raise DataError("self-supervised split has no fetched images")

    seed_everything(ssl_config.seed)
    if base is not None:
        if base.model_config.encoder_signature() != model_config.encoder_signature():
            raise ConfigurationError("base checkpoint architecture does not match the model config", field="model")
        base = attach_head(base, 0, ssl_config.seed)
        encoder = base.to_model()
        provenance = base.provenance
    else:
        encoder = build_model(model_config, seed=ssl_config.seed)
        provenance = ()
    normalization = normalization or (base.normalization if base is not None else Normalization())
    normalization.validate(model_config.channels)

    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(ssl_config.seed + 1)
        mae = MaskedAutoencoder(encoder, ssl_config)
    device = settings.torch_device()
    mae.to(device)

    items = [ImageItem(e.entry_id, e.image_path(image_dir)) for e in fetched]
    images = ImageDataset(items, build_transform(model_config.image_size, normalization), split="train")
    loader = make_loader(
        images, ssl_config.batch_size, shuffle=True, seed=ssl_config.seed, num_workers=settings.num_workers
    )
    steps_per_epoch = len(loader)
    total_steps = ssl_config.epochs * steps_per_epoch
    if ssl_config.max_steps is not None:
        total_steps = min(total_steps, ssl_config.max_steps)
    optimizer = make_optimizer(mae, ssl_config.learning_rate, ssl_config.weight_decay)
    scheduler = make_scheduler(optimizer, total_steps, ssl_config.warmup_fraction, "cosine")
    mask_generator = torch.Generator()
    mask_generator.manual_seed(ssl_config.seed)

    out.print(
        f"[cyan]Self-supervised pre-training on {len(items):,} images "
        f"(mask ratio {ssl_config.mask_ratio}, {total_steps:,} steps)[/cyan]"
    )
    history: list[EpochStats] = []
    first_batch_loss: float | None = None
    skipped_first_epoch = 0
    step = 0
    started = time.time()
    with progress_bar(out) as progress:
        task = progress.add_task("[cyan]ssl", total=total_steps)
        for epoch in range(1, ssl_config.epochs + 1):
            if step >= total_steps:
                break
            mae.train()
            loss_sum = 0.0
            batches = skipped = seen = 0
            for loaded in loader:
                if step >= total_steps:
                    break
                skipped += loaded.skipped
                seen += loaded.skipped
                if loaded.batch is None:
                    continue
                seen += loaded.batch.pixels.shape[0]
                guard_split(loaded.batch.split)
                loss, _, _ = mae(loaded.batch.pixels.to(device), mask_generator)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                scheduler.step()
                step += 1
                progress.advance(task)
                value = float(loss.detach())
                if first_batch_loss is None:
                    first_batch_loss = value
                loss_sum += value
                batches += 1
            if epoch == 1:
                skipped_first_epoch = skipped
                if seen and skipped / seen > ssl_config.max_bad_fraction:
                    raise DataError(
                        f"{skipped} of {seen} images could not be decoded "
                        f"(limit {ssl_config.max_bad_fraction:.1%})"
                    )
            if batches == 0:
                raise DataError("no decodable images in the self-supervised split")
            stats = EpochStats(epoch=epoch, loss=loss_sum / batches, skipped=skipped, wall_time=time.time() - started)
            history.append(stats)
            if ledger is not None:
                ledger.metric("ssl", epoch, step, stats.loss, stats.wall_time, skipped=skipped)

    if skipped_first_epoch:
        out.print(f"[yellow]⚠️  Skipped {skipped_first_epoch} undecodable images[/yellow]")
    out.print(f"[green]✓ Self-supervised training done: final loss {history[-1].loss:.4f}[/green]")

    stage = ProvenanceStage(
        dataset=dataset,
        strategy="self-supervised",
        epochs=len(history),
        seed=ssl_config.seed,
        details={
            "mask_ratio": ssl_config.mask_ratio,
            "decoder_depth": ssl_config.decoder_depth,
            "decoder_dim": ssl_config.decoder_dim,
            "steps": step,
            "images": len(items),
            "skipped": skipped_first_epoch,
            "normalization": normalization.to_dict(),
        },
    )
    encoder = mae.encoder.to("cpu")
    checkpoint = ParameterCheckpoint.from_model(encoder, provenance + (stage,))
    return TrainingOutcome(
        checkpoint=checkpoint,
        history=history,
        first_batch_loss=first_batch_loss,
        details={"steps": step, "skipped": skipped_first_epoch},
    )
