"""Fine-tuning and evaluation on Crisis Image Benchmark tasks."""

import copy
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import fmean

import torch
from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint, ProvenanceStage, replace_head
from crisisvit.errors import ConfigurationError, CrisisViTError, DataError, TrainingError
from crisisvit.models.config import FinetuneConfig
from crisisvit.models.results import Prediction, RunResult
from crisisvit.services.benchmark import BenchmarkExample, TaskSpec
from crisisvit.services.images import ImageDataset, ImageItem, build_transform, make_loader
from crisisvit.services.ledger import RunLedger
from crisisvit.services.training import EpochStats, SingleLabelObjective, evaluate_accuracy, fit_classifier, predict
from crisisvit.settings import Settings, seed_everything

console = Console()

MIN_RUNS = 3

Recipe = ParameterCheckpoint | Callable[[int], ParameterCheckpoint]


@dataclass
class FinetuneOutcome:
    """Fine-tuned checkpoint (best validation epoch) and its validation result."""

    checkpoint: ParameterCheckpoint
    validation: RunResult | None
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def train_accuracy(self) -> float:
        if not self.history:
            return 0.0
        return self.history[-1].train_accuracy or 0.0


@dataclass
class _BestEpoch:
    accuracy: float = -1.0
    epoch: int = 0
    state: dict[str, torch.Tensor] = field(default_factory=dict)


@dataclass
class RepeatOutcome:
    results: list[RunResult]

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.results]

    @property
    def mean_accuracy(self) -> float:
        return fmean(self.accuracies)


def _items(examples: list[BenchmarkExample]) -> list[ImageItem]:
    return [ImageItem(e.image_id, e.image_path, (e.class_index,)) for e in examples]


def finetune(
    checkpoint: ParameterCheckpoint,
    task: TaskSpec,
    config: FinetuneConfig,
    seed: int,
    *,
    settings: Settings | None = None,
    ledger: RunLedger | None = None,
    out: Console | None = None,
) -> FinetuneOutcome:
    """Replace the head for the task and train the whole network.

    The checkpoint from the epoch with the best validation accuracy is kept
    (earliest on ties); without a validation split, the last epoch is kept.

    Raises:
        DataError: if the train split is empty
    """
    out = out or console
    settings = settings or Settings()
    config.validate()
    train = task.split("train")
    if not train:
        raise DataError(f"task '{task.task_id}' has an empty train split")
    validation = task.examples.get("validation", [])

    seed_everything(seed)
    start = replace_head(checkpoint, task.num_classes, seed)
    model = start.to_model()
    normalization = checkpoint.normalization
    size = start.model_config.image_size
    device = settings.torch_device()
    loader = make_loader(
        ImageDataset(_items(train), build_transform(size, normalization, augment=config.augment), "train"),
        config.batch_size,
        shuffle=True,
        seed=seed,
        num_workers=settings.num_workers,
    )
    val_loader = make_loader(
        ImageDataset(_items(validation), build_transform(size, normalization), "validation"),
        config.batch_size,
        shuffle=False,
    )
    objective = SingleLabelObjective(config.schedule.label_smoothing)

    def validation_accuracy(m: torch.nn.Module) -> float:
        return evaluate_accuracy(m, val_loader, objective, device)

    best = _BestEpoch()

    def keep_best(stats: EpochStats, m: torch.nn.Module) -> None:
        accuracy = stats.eval_accuracy if stats.eval_accuracy is not None else -1.0
        if not config.keep_best or not validation or accuracy > best.accuracy:
            best.accuracy, best.epoch, best.state = accuracy, stats.epoch, copy.deepcopy(m.state_dict())

    history, _ = fit_classifier(
        model,
        loader,
        epochs=config.epochs,
        schedule=config.schedule,
        device=device,
        stage=f"finetune:{task.task_id}",
        objective=objective,
        ledger=ledger,
        evaluate=validation_accuracy if validation else None,
        on_epoch_end=keep_best,
        out=out,
    )
    model.load_state_dict(best.state)
    model.to("cpu")
    stage = ProvenanceStage(
        dataset=task.task_id,
        strategy="fine-tune",
        epochs=config.epochs,
        seed=seed,
        details={
            "best_epoch": best.epoch,
            "augment": config.augment,
            "batch_size": config.batch_size,
            "schedule": asdict(config.schedule),
            "normalization": normalization.to_dict(),
        },
    )
    tuned = ParameterCheckpoint.from_model(model, start.provenance + (stage,))
    result = None
    if validation:
        result = evaluate(
            tuned,
            task,
            "validation",
            seed=seed,
            provenance_digest=checkpoint.provenance_digest,
            settings=settings,
            batch_size=config.batch_size,
        )
    return FinetuneOutcome(tuned, result, history, best.epoch)


def evaluate(
    checkpoint: ParameterCheckpoint,
    task: TaskSpec,
    split: str = "test",
    *,
    seed: int | None = None,
    provenance_digest: str | None = None,
    settings: Settings | None = None,
    batch_size: int = 128,
) -> RunResult:
    """Predict every example of a split; no stochasticity is involved.

    Args:
        seed: Seed recorded in the result (defaults to the last provenance stage's)
        provenance_digest: Digest recorded in the result (defaults to the
            checkpoint's own)

    Raises:
        ConfigurationError: if the head width does not match the task
        DataError: if no example of the split could be decoded
    """
    if checkpoint.num_classes != task.num_classes:
        raise ConfigurationError(
            f"checkpoint head has {checkpoint.num_classes} classes, task '{task.task_id}' has {task.num_classes}",
            field="num_classes",
        )
    settings = settings or Settings()
    examples = task.split(split)
    model = checkpoint.to_model()
    transform = build_transform(checkpoint.model_config.image_size, checkpoint.normalization)
    loader = make_loader(ImageDataset(_items(examples), transform, split), batch_size, shuffle=False)
    started = time.time()
    rows = predict(model, loader, settings.torch_device())
    if seed is None:
        seed = checkpoint.provenance[-1].seed if checkpoint.provenance else 0
    return RunResult.from_predictions(
        task_id=task.task_id,
        seed=seed,
        provenance_digest=provenance_digest or checkpoint.provenance_digest,
        split=split,
        predictions=[Prediction(*row) for row in rows],
        wall_time=time.time() - started,
    )


def repeat_runs(
    recipe: Recipe,
    task: TaskSpec,
    config: FinetuneConfig,
    n_runs: int = MIN_RUNS,
    seeds: list[int] | None = None,
    *,
    allow_fewer: bool = False,
    output_dir: Path | None = None,
    settings: Settings | None = None,
    ledger: RunLedger | None = None,
    out: Console | None = None,
) -> RepeatOutcome:
    """Fine-tune and test once per seed.

    Args:
        recipe: A pre-trained checkpoint (only fine-tuning is re-seeded), or
            a callable building the pre-trained checkpoint for a seed (the
            whole pipeline is re-seeded)
        n_runs: Number of runs; fewer than three needs ``allow_fewer``
        seeds: One seed per run (defaults to 0..n_runs-1)
        output_dir: When set, results are saved as ``<task>/seed-<s>`` and
            existing ones are loaded instead of re-run

    Raises:
        ConfigurationError: on n_runs < 1, n_runs < 3 without override, or
            too few seeds
        TrainingError: when a fine-tuning run fails unexpectedly; the ledger
            gets a ``run_failed`` record first
    """
    out = out or console
    if n_runs < 1:
        raise ConfigurationError(f"n_runs must be >= 1, got {n_runs}", field="n_runs")
    if n_runs < MIN_RUNS and not allow_fewer:
        raise ConfigurationError(
            f"n_runs={n_runs}: every configuration is run at least {MIN_RUNS} times; "
            "pass allow_fewer to override",
            field="n_runs",
        )
    seeds = list(seeds) if seeds is not None else list(range(n_runs))
    if len(seeds) < n_runs:
        raise ConfigurationError(f"{len(seeds)} seeds for {n_runs} runs", field="seeds")

    results = []
    for seed in seeds[:n_runs]:
        record = Path(output_dir) / task.task_id / f"seed-{seed}.yaml" if output_dir is not None else None
        if record is not None and record.exists():
            out.print(f"[dim]  {task.task_id} seed {seed}: already done[/dim]")
            results.append(RunResult.load(record))
            continue
        pretrained = recipe(seed) if callable(recipe) else recipe
        try:
            tuned = finetune(pretrained, task, config, seed, settings=settings, ledger=ledger, out=out)
            result = evaluate(
                tuned.checkpoint,
                task,
                "test",
                seed=seed,
                provenance_digest=pretrained.provenance_digest,
                settings=settings,
                batch_size=config.batch_size,
            )
        except Exception as e:
            if ledger is not None:
                ledger.append("run_failed", task=task.task_id, seed=seed, error=f"{type(e).__name__}: {e}")
            out.print(f"[red]✗ {task.task_id} seed {seed} failed: {e}[/red]")
            if isinstance(e, CrisisViTError):
                raise
            raise TrainingError(f"fine-tuning {task.task_id} with seed {seed} failed: {e}") from e
        if record is not None:
            result.save(record.with_suffix(""))
        if ledger is not None:
            ledger.append("run", task=task.task_id, seed=seed, accuracy=result.accuracy, wall_time=result.wall_time)
        out.print(f"[green]✓ {task.task_id} seed {seed}: test accuracy {result.accuracy:.4f}[/green]")
        results.append(result)
    return RepeatOutcome(results)
