"""Shared optimization loop for supervised pre-training and fine-tuning."""

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import torch
import torch.nn as nn
import torch.nn.functional as F
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from torch.utils.data import DataLoader

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.errors import DataError, IntegrityError
from crisisvit.models.config import TrainSchedule
from crisisvit.services.images import NO_TARGET
from crisisvit.services.ledger import RunLedger

console = Console()

# Batches tagged with this split must never reach an optimizer step
HELD_OUT_SPLIT = "test"


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float | None = None
    eval_accuracy: float | None = None
    skipped: int = 0
    wall_time: float = 0.0


@dataclass
class TrainingOutcome:
    """A stage's resulting checkpoint and what happened along the way."""

    checkpoint: ParameterCheckpoint
    history: list[EpochStats] = field(default_factory=list)
    first_batch_loss: float | None = None
    details: dict[str, Any] = field(default_factory=dict)


class Objective:
    """Loss and accuracy bookkeeping for one target layout."""

    def loss(self, logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def correct(self, logits: torch.Tensor, targets: torch.Tensor) -> tuple[int, int]:
        raise NotImplementedError


class SingleLabelObjective(Objective):
    """Softmax cross-entropy over one class index per image."""

    def __init__(self, label_smoothing: float = 0.0):
        self.label_smoothing = label_smoothing

    def loss(self, logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        return F.cross_entropy(logits, targets[:, 0], label_smoothing=self.label_smoothing)

    def correct(self, logits: torch.Tensor, targets: torch.Tensor) -> tuple[int, int]:
        return int((logits.argmax(dim=-1) == targets[:, 0]).sum()), targets.shape[0]


class SplitHeadObjective(Objective):
    """Two softmax blocks on one head: [0, split_at) and [split_at, width).

    Targets carry one index per block (block-local), ``NO_TARGET`` when the
    image has no label in that block.
    """

    def __init__(self, split_at: int, label_smoothing: float = 0.0):
        self.split_at = split_at
        self.label_smoothing = label_smoothing

    def _blocks(self, logits: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return logits[:, : self.split_at], logits[:, self.split_at :]

    def loss(self, logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        total = logits.new_zeros(())
        for block, target in zip(self._blocks(logits), targets.unbind(dim=1), strict=True):
            if (target != NO_TARGET).any():
                total = total + F.cross_entropy(
                    block, target, ignore_index=NO_TARGET, label_smoothing=self.label_smoothing
                )
        return total

    def correct(self, logits: torch.Tensor, targets: torch.Tensor) -> tuple[int, int]:
        hits = counted = 0
        for block, target in zip(self._blocks(logits), targets.unbind(dim=1), strict=True):
            valid = target != NO_TARGET
            hits += int((block.argmax(dim=-1)[valid] == target[valid]).sum())
            counted += int(valid.sum())
        return hits, counted


def lr_factor(step: int, total_steps: int, warmup_fraction: float, decay: str) -> float:
    """Multiplier on the base learning rate: linear warmup, then the decay shape."""
    warmup = int(total_steps * warmup_fraction)
    if warmup and step < warmup:
        return (step + 1) / warmup
    if decay == "constant" or total_steps <= warmup:
        return 1.0
    progress = (step - warmup) / max(1, total_steps - warmup)
    if decay == "linear":
        return max(0.0, 1.0 - progress)
    return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))


def make_optimizer(model: nn.Module, learning_rate: float, weight_decay: float = 0.0) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=learning_rate, weight_decay=weight_decay)


def make_scheduler(
    optimizer: torch.optim.Optimizer, total_steps: int, warmup_fraction: float, decay: str
) -> torch.optim.lr_scheduler.LambdaLR:
    return torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: lr_factor(step, total_steps, warmup_fraction, decay)
    )


def guard_split(split: str) -> None:
    if split == HELD_OUT_SPLIT:
        raise IntegrityError("a test-split batch reached a parameter update")


def progress_bar(out: Console) -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=out,
        transient=True,
    )


def fit_classifier(
    model: nn.Module,
    loader: DataLoader,
    *,
    epochs: int,
    schedule: TrainSchedule,
    device: torch.device,
    stage: str,
    objective: Objective | None = None,
    ledger: RunLedger | None = None,
    evaluate: Callable[[nn.Module], float] | None = None,
    on_epoch_end: Callable[[EpochStats, nn.Module], None] | None = None,
    out: Console | None = None,
) -> tuple[list[EpochStats], float | None]:
    """Train every parameter of ``model`` for ``epochs`` passes over ``loader``.

    Returns:
        Per-epoch statistics and the loss of the very first batch
    """
    out = out or console
    objective = objective or SingleLabelObjective(schedule.label_smoothing)
    if len(loader) == 0:
        raise DataError(f"{stage}: no training examples")
    model.to(device)
    optimizer = make_optimizer(model, schedule.learning_rate, schedule.weight_decay)
    total_steps = epochs * len(loader)
    scheduler = make_scheduler(optimizer, total_steps, schedule.warmup_fraction, schedule.decay)
    history: list[EpochStats] = []
    first_batch_loss: float | None = None
    step = 0
    started = time.time()

    with progress_bar(out) as progress:
        task = progress.add_task(f"[cyan]{stage}", total=total_steps)
        for epoch in range(1, epochs + 1):
            model.train()
            loss_sum = 0.0
            batches = hits = counted = skipped = 0
            for loaded in loader:
                skipped += loaded.skipped
                progress.advance(task)
                if loaded.batch is None:
                    continue
                guard_split(loaded.batch.split)
                pixels = loaded.batch.pixels.to(device)
                targets = loaded.batch.labels.to(device)
                logits = model(pixels)
                loss = objective.loss(logits, targets)
                optimizer.zero_grad()
                loss.backward()
                if schedule.grad_clip is not None:
                    nn.utils.clip_grad_norm_(model.parameters(), schedule.grad_clip)
                optimizer.step()
                scheduler.step()
                step += 1
                if first_batch_loss is None:
                    first_batch_loss = float(loss.detach())
                loss_sum += float(loss.detach())
                batches += 1
                h, c = objective.correct(logits.detach(), targets)
                hits += h
                counted += c
            stats = EpochStats(
                epoch=epoch,
                loss=loss_sum / max(batches, 1),
                train_accuracy=hits / counted if counted else 0.0,
                skipped=skipped,
                wall_time=time.time() - started,
            )
            if evaluate is not None:
                stats.eval_accuracy = evaluate(model)
            history.append(stats)
            if ledger is not None:
                ledger.metric(
                    stage,
                    epoch,
                    step,
                    stats.loss,
                    stats.wall_time,
                    train_accuracy=stats.train_accuracy,
                    eval_accuracy=stats.eval_accuracy,
                )
            held_out = f", held-out acc {stats.eval_accuracy:.3f}" if stats.eval_accuracy is not None else ""
            out.print(
                f"[dim]  {stage} epoch {epoch}/{epochs}: loss {stats.loss:.4f}, "
                f"train acc {stats.train_accuracy:.3f}{held_out}[/dim]"
            )
            if on_epoch_end is not None:
                on_epoch_end(stats, model)
    return history, first_batch_loss


def predict(model: nn.Module, loader: DataLoader, device: torch.device) -> list[tuple[str, int, int]]:
    """(id, true class, predicted class) for every decodable image, in loader order."""
    model.to(device)
    was_training = model.training
    model.eval()
    rows: list[tuple[str, int, int]] = []
    with torch.no_grad():
        for loaded in loader:
            if loaded.batch is None:
                continue
            logits = model(loaded.batch.pixels.to(device))
            predicted = logits.argmax(dim=-1).cpu()
            targets = loaded.batch.labels[:, 0]
            for item_id, target, pred in zip(loaded.batch.source_ids, targets, predicted, strict=True):
                rows.append((item_id, int(target), int(pred)))
    model.train(was_training)
    return rows


def evaluate_accuracy(model: nn.Module, loader: DataLoader, objective: Objective, device: torch.device) -> float:
    model.to(device)
    was_training = model.training
    model.eval()
    hits = counted = 0
    with torch.no_grad():
        for loaded in loader:
            if loaded.batch is None:
                continue
            logits = model(loaded.batch.pixels.to(device))
            h, c = objective.correct(logits, loaded.batch.labels.to(device))
            hits += h
            counted += c
    model.train(was_training)
    return hits / counted if counted else 0.0
