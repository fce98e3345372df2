"""Supervised pre-training over Incidents1M label sets.

Four methodologies: multi-class over incident, place or joint classes, and
sequential one-vs-rest training over every joint class.
"""

import hashlib
from dataclasses import asdict
from pathlib import Path

import torch
from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint, ProvenanceStage, attach_head
from crisisvit.backbone.vit import VisionTransformer, build_model
from crisisvit.errors import ConfigurationError, DataError, IntegrityError
from crisisvit.models.config import ModelConfig, Normalization, PretrainStrategy, TrainSchedule
from crisisvit.models.labels import INCIDENT_CLASSES, LabelVocabulary, get_vocabulary, joint_vocabulary
from crisisvit.models.records import DatasetManifestEntry, ResolvedExample
from crisisvit.services.images import NO_TARGET, ImageDataset, ImageItem, build_transform, make_loader
from crisisvit.services.ledger import RunLedger
from crisisvit.services.manifest import split_holdout
from crisisvit.services.resolver import BinaryTask, resolve_split_targets
from crisisvit.services.training import (
    Objective,
    SingleLabelObjective,
    SplitHeadObjective,
    TrainingOutcome,
    evaluate_accuracy,
    fit_classifier,
)
from crisisvit.settings import Settings, seed_everything

console = Console()


def encoder_digest(checkpoint: ParameterCheckpoint) -> str:
    """Digest over encoder parameters only (head excluded)."""
    h = hashlib.sha256()
    for name, tensor in sorted(checkpoint.encoder_parameters.items()):
        h.update(name.encode("utf-8"))
        h.update(tensor.contiguous().numpy().tobytes())
    return h.hexdigest()[:16]


def _start_model(
    base: ParameterCheckpoint | None, model_config: ModelConfig | None, num_classes: int, seed: int
) -> tuple[VisionTransformer, tuple[ProvenanceStage, ...]]:
    if base is None:
        if model_config is None:
            raise ConfigurationError("a fresh start needs a model config", field="model")
        return build_model(model_config.with_classes(num_classes), seed=seed), ()
    if model_config is not None and base.model_config.encoder_signature() != model_config.encoder_signature():
        raise ConfigurationError("base checkpoint architecture does not match the model config", field="model")
    return attach_head(base, num_classes, seed).to_model(), base.provenance


def _normalization(base: ParameterCheckpoint | None, normalization: Normalization | None) -> Normalization:
    if normalization is not None:
        return normalization
    return base.normalization if base is not None else Normalization()


def pretrain_multiclass(
    base: ParameterCheckpoint | None,
    examples: list[ResolvedExample],
    strategy: PretrainStrategy,
    schedule: TrainSchedule,
    *,
    entries: list[DatasetManifestEntry],
    image_dir: Path,
    model_config: ModelConfig | None = None,
    dataset: str = "Incidents1M",
    normalization: Normalization | None = None,
    ledger: RunLedger | None = None,
    settings: Settings | None = None,
    out: Console | None = None,
) -> TrainingOutcome:
    """Train a full network against one multi-class vocabulary.

    Args:
        base: Checkpoint to continue from, or None for a fresh model
        examples: Entries resolved against the strategy's vocabulary
        strategy: A multiclass_* strategy
        schedule: Optimizer schedule
        entries: Manifest entries the examples refer to (for image paths)
        image_dir: Content-addressed image store
        model_config: Architecture of a fresh model; checked against ``base``

    Returns:
        Outcome whose checkpoint carries a head as wide as the vocabulary

    Raises:
        IntegrityError: if examples were resolved against another vocabulary
        DataError: if there are no usable examples
    """
    out = out or console
    settings = settings or Settings()
    strategy.validate()
    schedule.validate()
    if not strategy.is_multiclass:
        raise ConfigurationError(f"'{strategy.kind}' is not a multi-class strategy", field="kind")
    vocabulary = get_vocabulary(strategy.vocabulary_name)
    if not examples:
        raise DataError(f"{strategy.kind}: no training examples")
    for example in examples:
        if example.vocabulary_digest != vocabulary.digest or not 0 <= example.class_index < len(vocabulary):
            raise IntegrityError(
                f"example {example.entry_id} was resolved against '{example.vocabulary}', "
                f"not vocabulary '{vocabulary.name}' ({vocabulary.digest})"
            )

    by_id = {e.entry_id: e for e in entries}
    split_head = strategy.joint_head == "split"
    objective: Objective
    targets: dict[str, tuple[int, ...]]
    if split_head:
        wanted = [by_id[x.entry_id] for x in examples if x.entry_id in by_id]
        targets = {
            t.entry_id: (
                t.incident_index if t.incident_index >= 0 else NO_TARGET,
                t.place_index if t.place_index >= 0 else NO_TARGET,
            )
            for t in resolve_split_targets(wanted)
        }
        objective = SplitHeadObjective(len(INCIDENT_CLASSES), schedule.label_smoothing)
    else:
        targets = {x.entry_id: (x.class_index,) for x in examples}
        objective = SingleLabelObjective(schedule.label_smoothing)
    usable = [by_id[i] for i in targets if i in by_id and by_id[i].is_fetched]
    if not usable:
        raise DataError(f"{strategy.kind}: none of the {len(examples)} examples has a fetched image")

    seed_everything(strategy.seed)
    model, provenance = _start_model(base, model_config, len(vocabulary), strategy.seed)
    if model.config.num_classes != len(vocabulary):
        raise IntegrityError(f"head width {model.config.num_classes} != vocabulary size {len(vocabulary)}")
    normalization = _normalization(base, normalization)
    transform = build_transform(model.config.image_size, normalization)

    train, held_out = split_holdout(usable, strategy.holdout_fraction, strategy.seed)
    if not train:
        train, held_out = usable, []

    def items(subset: list[DatasetManifestEntry]) -> list[ImageItem]:
        return [ImageItem(e.entry_id, e.image_path(image_dir), targets[e.entry_id]) for e in subset]

    loader = make_loader(
        ImageDataset(items(train), transform, "train"),
        strategy.batch_size,
        shuffle=True,
        seed=strategy.seed,
        num_workers=settings.num_workers,
    )
    device = settings.torch_device()
    held_out_loader = make_loader(
        ImageDataset(items(held_out), transform, "validation"), strategy.batch_size, shuffle=False
    )

    def held_out_accuracy(m: torch.nn.Module) -> float:
        return evaluate_accuracy(m, held_out_loader, objective, device)

    out.print(
        f"[cyan]{strategy.kind}: {len(train):,} train / {len(held_out):,} held-out images, "
        f"{len(vocabulary)} classes, {strategy.epochs} epochs[/cyan]"
    )
    history, first_loss = fit_classifier(
        model,
        loader,
        epochs=strategy.epochs,
        schedule=schedule,
        device=device,
        stage=strategy.kind,
        objective=objective,
        ledger=ledger,
        evaluate=held_out_accuracy if held_out else None,
        out=out,
    )
    details = {
        "vocabulary": vocabulary.name,
        "vocabulary_digest": vocabulary.digest,
        "examples": len(usable),
        "batch_size": strategy.batch_size,
        "schedule": asdict(schedule),
        "normalization": normalization.to_dict(),
    }
    if strategy.kind == "multiclass_joint":
        details["joint_head"] = strategy.joint_head
    stage = ProvenanceStage(dataset, strategy.kind, strategy.epochs, strategy.seed, details)
    checkpoint = ParameterCheckpoint.from_model(model.to("cpu"), provenance + (stage,))
    out.print(f"[green]✓ {strategy.kind} done[/green]")
    return TrainingOutcome(
        checkpoint=checkpoint,
        history=history,
        first_batch_loss=first_loss,
        details={"train": len(train), "held_out": len(held_out)},
    )


def pretrain_binary_sequential(
    base: ParameterCheckpoint | None,
    tasks: list[BinaryTask],
    strategy: PretrainStrategy,
    schedule: TrainSchedule,
    *,
    image_dir: Path,
    vocabulary: LabelVocabulary | None = None,
    model_config: ModelConfig | None = None,
    dataset: str = "Incidents1M",
    normalization: Normalization | None = None,
    ledger: RunLedger | None = None,
    settings: Settings | None = None,
    out: Console | None = None,
) -> TrainingOutcome:
    """Train one 2-way head per class in vocabulary order, carrying the encoder over.

    Empty tasks (no positives or no fetched images) are skipped with a
    warning. Every task shares one schedule. The result is a headless
    encoder whose provenance lists the class sequence actually trained.
    """
    out = out or console
    settings = settings or Settings()
    strategy.validate()
    schedule.validate()
    if strategy.kind != "binary_sequential":
        raise ConfigurationError(f"expected binary_sequential, got '{strategy.kind}'", field="kind")
    vocabulary = vocabulary or joint_vocabulary()
    order = {name: i for i, name in enumerate(vocabulary.classes)}
    unknown = [t.class_name for t in tasks if t.class_name not in order]
    if unknown:
        raise IntegrityError(f"binary tasks for classes outside '{vocabulary.name}': {', '.join(unknown)}")
    tasks = sorted(tasks, key=lambda t: order[t.class_name])

    seed_everything(strategy.seed)
    model, provenance = _start_model(base, model_config, 0, strategy.seed)
    current = ParameterCheckpoint.from_model(model)
    normalization = _normalization(base, normalization)
    transform = build_transform(current.model_config.image_size, normalization)
    device = settings.torch_device()

    trained: list[str] = []
    skipped: list[str] = []
    encoder_digests: list[str] = []
    history = []
    first_loss = None
    for task in tasks:
        items = [
            ImageItem(e.entry_id, e.image_path(image_dir), (label,))
            for label, group in ((1, task.positives), (0, task.negatives))
            for e in group
            if e.is_fetched
        ]
        if task.is_empty or not any(item.target == (1,) for item in items):
            out.print(f"[yellow]⚠️  Skipping '{task.class_name}': no usable positives[/yellow]")
            skipped.append(task.class_name)
            continue
        index = order[task.class_name]
        model = attach_head(current, 2, strategy.seed + index).to_model()
        loader = make_loader(
            ImageDataset(items, transform, "train"),
            strategy.batch_size,
            shuffle=True,
            seed=strategy.seed + index,
            num_workers=settings.num_workers,
        )
        stage_history, stage_first = fit_classifier(
            model,
            loader,
            epochs=strategy.epochs,
            schedule=schedule,
            device=device,
            stage=f"binary:{task.class_name}",
            ledger=ledger,
            out=out,
        )
        history.extend(stage_history)
        first_loss = first_loss if first_loss is not None else stage_first
        current = ParameterCheckpoint.from_model(model.to("cpu"))
        trained.append(task.class_name)
        encoder_digests.append(encoder_digest(current))

    if not trained:
        raise DataError("binary_sequential: every class task was empty")
    stage = ProvenanceStage(
        dataset,
        strategy.kind,
        strategy.epochs,
        strategy.seed,
        {
            "vocabulary": vocabulary.name,
            "vocabulary_digest": vocabulary.digest,
            "class_sequence": trained,
            "skipped_classes": skipped,
            "negative_ratio": strategy.negative_ratio,
            "batch_size": strategy.batch_size,
            "schedule": asdict(schedule),
            "normalization": normalization.to_dict(),
        },
    )
    headless = attach_head(current, 0, strategy.seed)
    checkpoint = ParameterCheckpoint(headless.parameters, headless.model_config, provenance + (stage,))
    out.print(f"[green]✓ binary_sequential done: {len(trained)} classes, {len(skipped)} skipped[/green]")
    return TrainingOutcome(
        checkpoint=checkpoint,
        history=history,
        first_batch_loss=first_loss,
        details={"class_sequence": trained, "skipped": skipped, "encoder_digests": encoder_digests},
    )

