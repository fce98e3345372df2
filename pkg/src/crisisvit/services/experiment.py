"""Declarative experiments: validation, fingerprinted runs and the result matrix.

An experiment file names a model, an ordered list of pre-training stages,
the fine-tuning recipe and the run protocol. Every artifact of a run lives
under ``<output_dir>/<id>-<fingerprint>/``:

    experiment.yaml     canonical form of the file that was run
    ledger.jsonl        append-only stage/run/metric records
    checkpoints/        content-addressed stage checkpoints
    runs/<task>/        one RunResult per seed
    scorecard.yaml      the system's scorecard
"""

import glob
import hashlib
import json
import re
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml
from rich.console import Console

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.errors import ConfigurationError, DataError, IntegrityError, ValidationError, Violation
from crisisvit.models.config import BATCH_SIZE_SWEEP, FinetuneConfig, ModelConfig, Normalization, TrainSchedule
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.models.results import RunResult, SystemScorecard
from crisisvit.services.benchmark import load_benchmark
from crisisvit.services.finetune import MIN_RUNS, repeat_runs
from crisisvit.services.ledger import RunLedger
from crisisvit.services.manifest import load_manifest
from crisisvit.services.report import ReportDocument, emit_table, load_reference_rows
from crisisvit.services.stats import DEFAULT_ALPHA, scorecard, significance
from crisisvit.settings import Settings
from crisisvit.stages import PretrainStage, StageContext, build_stage, list_stages
from crisisvit.stages.base import dataclass_from_spec
from crisisvit.stages.compose import compose_stages
from crisisvit.version import __version__

console = Console()

TOP_LEVEL_KEYS = (
    "id",
    "system",
    "family",
    "model",
    "base",
    "stages",
    "schedule",
    "normalization",
    "finetune",
    "manifest",
    "benchmark",
    "image_dir",
    "output_dir",
    "dataset",
    "n_runs",
    "seeds",
    "allow_fewer_runs",
    "reseed",
)
RESEED_MODES = ("finetune", "pipeline")
MODEL_PRESETS: dict[str, Callable[[], ModelConfig]] = {"vit_base": ModelConfig.vit_base, "tiny": ModelConfig.tiny}
ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")
SCORECARD_FILE = "scorecard.yaml"
LEDGER_FILE = "ledger.jsonl"
EXPERIMENT_KEY = "experiment"


@dataclass(frozen=True)
class ExperimentFile:
    """A validated experiment. Relative paths are already resolved."""

    experiment_id: str
    stages: tuple[dict[str, Any], ...]  # canonical stage specs, external base first
    model: ModelConfig
    benchmark: Path
    manifest: Path | None = None
    system: str = ""
    family: str = "crisisvit"
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    normalization: Normalization | None = None
    n_runs: int = MIN_RUNS
    seeds: tuple[int, ...] = (0, 1, 2)
    allow_fewer_runs: bool = False
    reseed: str = "finetune"
    image_dir: Path | None = None
    output_dir: Path | None = None
    dataset: str = "Incidents1M"
    sweep: tuple[int, tuple[int, ...]] | None = None  # (stage position, batch sizes)
    source: Path | None = None

    @property
    def system_name(self) -> str:
        return self.system or self.experiment_id

    @property
    def base_dir(self) -> Path:
        return self.source.parent if self.source is not None else Path(".")

    def canonical(self) -> dict[str, Any]:
        """Defaults-filled mapping the fingerprint is computed from."""
        return {
            "id": self.experiment_id,
            "system": self.system_name,
            "family": self.family,
            "model": self.model.to_dict(),
            "stages": [dict(s) for s in self.stages],
            "schedule": asdict(self.schedule),
            "finetune": asdict(self.finetune),
            "normalization": self.normalization.to_dict() if self.normalization is not None else None,
            "manifest": str(self.manifest) if self.manifest is not None else None,
            "benchmark": str(self.benchmark),
            "image_dir": str(self.image_dir) if self.image_dir is not None else None,
            "dataset": self.dataset,
            "n_runs": self.n_runs,
            "seeds": list(self.seeds),
            "reseed": self.reseed,
            "sweep": [self.sweep[0], list(self.sweep[1])] if self.sweep is not None else None,
        }

    @property
    def fingerprint(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, default=str) + f"\ncrisisvit {__version__}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]

    def run_dir(self, settings: Settings) -> Path:
        root = self.output_dir if self.output_dir is not None else settings.output_dir
        return Path(root) / f"{self.experiment_id}-{self.fingerprint}"

    def expand(self) -> list["ExperimentFile"]:
        """One experiment per batch size of a declared sweep (just self otherwise)."""
        if self.sweep is None:
            return [self]
        position, values = self.sweep
        expanded = []
        for value in values:
            stages = [dict(s) for s in self.stages]
            stages[position]["batch_size"] = value
            expanded.append(
                replace(
                    self,
                    experiment_id=f"{self.experiment_id}-bs{value}",
                    system=f"{self.system_name} (batch {value})",
                    stages=tuple(stages),
                    sweep=None,
                )
            )
        return expanded

    def build_stages(self, seed: int | None = None) -> list[PretrainStage]:
        """Instantiate the stages; ``seed`` overrides every stage seed."""
        stages = []
        for spec in self.stages:
            spec = dict(spec)
            if seed is not None and "seed" in spec:
                spec["seed"] = seed
            stages.append(build_stage(spec))
        return stages


def _violation(violations: list[Violation], path: str, error: Exception) -> None:
    if isinstance(error, ConfigurationError) and error.field:
        violations.append(Violation(f"{path}.{error.field}", str(error)))
    else:
        violations.append(Violation(path, str(error)))


def _model(raw: Any) -> ModelConfig:
    if raw is None:
        return ModelConfig.vit_base()
    overrides: dict[str, Any] = {}
    preset = raw
    if isinstance(raw, dict):
        overrides = dict(raw)
        preset = overrides.pop("preset", "vit_base")
    if preset not in MODEL_PRESETS:
        raise ConfigurationError(f"unknown preset '{preset}'; use one of {', '.join(MODEL_PRESETS)}", field="preset")
    config = ModelConfig.from_dict({**MODEL_PRESETS[preset]().to_dict(), **overrides}).with_classes(0)
    config.validate()
    return config


def _finetune(raw: Any) -> FinetuneConfig:
    spec = dict(raw or {})
    schedule = spec.pop("schedule", None)
    defaults = FinetuneConfig()
    config = dataclass_from_spec(FinetuneConfig, spec, defaults)
    if schedule is not None:
        config = replace(config, schedule=dataclass_from_spec(TrainSchedule, schedule, defaults.schedule))
    config.validate()
    return config


def _schedule(raw: Any) -> TrainSchedule:
    schedule = dataclass_from_spec(TrainSchedule, dict(raw or {}))
    schedule.validate()
    return schedule


def _base_spec(raw: Any) -> dict[str, Any] | None:
    if raw is None or raw == "fresh":
        return None
    if isinstance(raw, str):
        return {"kind": "external", "path": raw}
    if isinstance(raw, dict):
        return {"kind": "external", **raw}
    raise ConfigurationError("base must be 'fresh', a checkpoint path or a mapping with a path")


def parse_experiment(
    data: Any, source: Path | None = None
) -> tuple[ExperimentFile | None, list[Violation]]:
    """Check every field of an experiment mapping.

    Returns:
        The experiment (None when anything is wrong) and the violations,
        each addressed by its field path, e.g. ``stages[1].kind``
    """
    if not isinstance(data, dict):
        return None, [Violation("<file>", "an experiment file must be a mapping")]
    violations: list[Violation] = []
    base_dir = source.parent if source is not None else Path(".")

    def resolve(raw: Any) -> Path:
        path = Path(str(raw)).expanduser()
        return path if path.is_absolute() else base_dir / path

    def attempt(path: str, build: Callable[[], Any]) -> Any:
        try:
            return build()
        except (ConfigurationError, TypeError, ValueError, KeyError) as e:
            _violation(violations, path, e)
            return None

    for key in sorted(set(data) - set(TOP_LEVEL_KEYS)):
        violations.append(Violation(key, "unknown field"))

    experiment_id = data.get("id")
    if not isinstance(experiment_id, str) or not ID_PATTERN.match(experiment_id):
        violations.append(Violation("id", "required; letters, digits, '.', '_' and '-' only"))

    model = attempt("model", lambda: _model(data.get("model")))
    schedule = attempt("schedule", lambda: _schedule(data.get("schedule")))
    finetune = attempt("finetune", lambda: _finetune(data.get("finetune")))
    normalization = None
    if data.get("normalization") is not None:
        normalization = attempt("normalization", lambda: Normalization.from_dict(data["normalization"]))
        if normalization is not None and model is not None:
            attempt("normalization", lambda: normalization.validate(model.channels))

    specs: list[dict[str, Any]] = []
    base = attempt("base", lambda: _base_spec(data.get("base")))
    if base is not None:
        stage = attempt("base", lambda: build_stage(base))
        if stage is not None:
            specs.append(stage.to_spec())

    sweep: tuple[int, tuple[int, ...]] | None = None
    raw_stages = data.get("stages") or []
    if not isinstance(raw_stages, list):
        violations.append(Violation("stages", "must be a list"))
        raw_stages = []
    for i, raw in enumerate(raw_stages):
        path = f"stages[{i}]"
        if not isinstance(raw, dict):
            violations.append(Violation(path, "must be a mapping"))
            continue
        spec = dict(raw)
        values = spec.pop("batch_size_sweep", None)
        kind = spec.get("kind")
        if kind is None:
            violations.append(Violation(f"{path}.kind", "missing"))
            continue
        if str(kind).lower() not in list_stages():
            violations.append(
                Violation(f"{path}.kind", f"unknown stage kind '{kind}'; expected one of {', '.join(list_stages())}")
            )
            continue
        stage = attempt(path, lambda: build_stage(spec))
        if stage is None:
            continue
        position = len(specs)
        if stage.kind == "external" and position > 0:
            violations.append(Violation(f"{path}.kind", "an external stage can only start a pipeline"))
        if values is not None:
            if not stage.is_supervised:
                violations.append(Violation(f"{path}.batch_size_sweep", "only supervised stages take a sweep"))
            elif not isinstance(values, list) or not values or any(v not in BATCH_SIZE_SWEEP for v in values):
                violations.append(
                    Violation(f"{path}.batch_size_sweep", f"values must be drawn from {list(BATCH_SIZE_SWEEP)}")
                )
            elif sweep is not None:
                violations.append(Violation(f"{path}.batch_size_sweep", "only one stage may declare a sweep"))
            else:
                sweep = (position, tuple(int(v) for v in values))
        specs.append(stage.to_spec())
    if not specs and not any(v.path.startswith(("stages", "base")) for v in violations):
        violations.append(Violation("stages", "needs at least one stage or an external base"))

    manifest = resolve(data["manifest"]) if data.get("manifest") else None
    if manifest is None and any(s.get("kind") != "external" for s in specs):
        violations.append(Violation("manifest", "required by the Incidents1M stages"))
    benchmark = resolve(data["benchmark"]) if data.get("benchmark") else None
    if benchmark is None:
        violations.append(Violation("benchmark", "required"))

    allow_fewer = data.get("allow_fewer_runs", False)
    if not isinstance(allow_fewer, bool):
        violations.append(Violation("allow_fewer_runs", "must be true or false"))
        allow_fewer = False
    n_runs = data.get("n_runs", MIN_RUNS)
    if isinstance(n_runs, bool) or not isinstance(n_runs, int) or n_runs < 1:
        violations.append(Violation("n_runs", "must be an integer >= 1"))
        n_runs = MIN_RUNS
    elif n_runs < MIN_RUNS and not allow_fewer:
        violations.append(
            Violation(
                "n_runs",
                f"n_runs={n_runs}: every configuration runs at least {MIN_RUNS} times; "
                "set allow_fewer_runs to override",
            )
        )
    seeds = data.get("seeds", list(range(n_runs)))
    if not isinstance(seeds, list) or any(isinstance(s, bool) or not isinstance(s, int) for s in seeds):
        violations.append(Violation("seeds", "must be a list of integers"))
        seeds = list(range(n_runs))
    elif len(seeds) < n_runs:
        violations.append(Violation("seeds", f"{len(seeds)} seed(s) for n_runs={n_runs}"))
    elif len(set(seeds)) != len(seeds):
        violations.append(Violation("seeds", "seeds must be distinct"))
    reseed = data.get("reseed", "finetune")
    if reseed not in RESEED_MODES:
        violations.append(Violation("reseed", f"must be one of {', '.join(RESEED_MODES)}"))

    if violations:
        return None, violations
    assert model is not None and schedule is not None and finetune is not None and benchmark is not None
    return (
        ExperimentFile(
            experiment_id=experiment_id,
            stages=tuple(specs),
            model=model,
            benchmark=benchmark,
            manifest=manifest,
            system=str(data.get("system", "")),
            family=str(data.get("family", "crisisvit")),
            schedule=schedule,
            finetune=finetune,
            normalization=normalization,
            n_runs=n_runs,
            seeds=tuple(seeds),
            allow_fewer_runs=allow_fewer,
            reseed=reseed,
            image_dir=resolve(data["image_dir"]) if data.get("image_dir") else None,
            output_dir=resolve(data["output_dir"]) if data.get("output_dir") else None,
            dataset=str(data.get("dataset", "Incidents1M")),
            sweep=sweep,
            source=source,
        ),
        [],
    )


def _read(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataError(f"experiment file not found: {path}")
    try:
        return yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ValidationError([Violation("<file>", f"not valid YAML: {e}")]) from e


def validate(path: Path) -> list[Violation]:
    """Violations of an experiment file; empty when it is valid."""
    try:
        data = _read(path)
    except ValidationError as e:
        return list(e.violations)
    _, violations = parse_experiment(data, Path(path))
    return violations


def load_experiment(path: Path) -> ExperimentFile:
    """Load and validate an experiment file.

    Raises:
        DataError: if the file does not exist
        ValidationError: listing every violation
    """
    experiment, violations = parse_experiment(_read(path), Path(path))
    if experiment is None:
        raise ValidationError(violations)
    return experiment


def describe(stages: list[PretrainStage]) -> dict[str, Any]:
    """Report columns derived from the stage list."""
    first = stages[0]
    ssl_dataset = first.dataset_label if first.kind in ("ssl", "external") else "None"
    supervised = [s for s in stages if s.is_supervised or s.kind == "external"]
    datasets: list[str] = []
    for stage in supervised:
        if stage.dataset_label and stage.dataset_label not in datasets:
            datasets.append(stage.dataset_label)
    return {
        "ssl_dataset": ssl_dataset,
        "supervised_dataset": "+".join(datasets) or "None",
        "methodology": " + ".join(s.methodology_label for s in supervised) or "Self-Supervised",
        "epochs": (supervised or stages)[-1].epochs or None,
    }


@dataclass
class ExperimentOutcome:
    experiment: ExperimentFile
    scorecard: SystemScorecard
    run_dir: Path
    resumed: bool = False  # nothing was left to do


def completed_scorecard(experiment: ExperimentFile, settings: Settings) -> SystemScorecard | None:
    """The saved scorecard of a finished run, if there is one."""
    run_dir = experiment.run_dir(settings)
    path = run_dir / SCORECARD_FILE
    if not path.exists() or RunLedger(run_dir / LEDGER_FILE).finished(EXPERIMENT_KEY) is None:
        return None
    return SystemScorecard.load(path)


def run_experiment(
    experiment: ExperimentFile, settings: Settings | None = None, out: Console | None = None
) -> ExperimentOutcome:
    """Pre-train, fine-tune every task once per seed, and score the system.

    Finished stages and runs are picked up from the run directory, so an
    interrupted run continues where it stopped and a finished one is a no-op.

    Raises:
        ConfigurationError: if the experiment still declares an unexpanded sweep
        IntegrityError: if benchmark splits share image ids
    """
    out = out or console
    settings = settings or Settings()
    if experiment.sweep is not None:
        raise ConfigurationError("expand the batch-size sweep before running", field="batch_size_sweep")
    run_dir = experiment.run_dir(settings)
    done = completed_scorecard(experiment, settings)
    if done is not None:
        out.print(f"[green]✓ {experiment.experiment_id}: resumed, nothing to do[/green] [dim]({run_dir})[/dim]")
        return ExperimentOutcome(experiment, done, run_dir, resumed=True)

    settings.apply()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "experiment.yaml").write_text(yaml.safe_dump(experiment.canonical(), sort_keys=False))
    ledger = RunLedger(run_dir / LEDGER_FILE)
    ledger.append("experiment_start", fingerprint=experiment.fingerprint, version=__version__)
    out.print(f"[cyan]Experiment {experiment.experiment_id}[/cyan] [dim]({run_dir})[/dim]")

    tasks, report = load_benchmark(experiment.benchmark, list(TASK_COLUMNS))
    leaks = {task: ids for task, ids in report.overlaps.items() if ids}
    if leaks:
        raise IntegrityError(f"benchmark splits overlap: {leaks}")
    if report.rejected:
        out.print(f"[yellow]⚠️  {len(report.rejected)} benchmark row(s) rejected[/yellow]")
    entries = load_manifest(experiment.manifest)[0] if experiment.manifest is not None else []

    context = StageContext(
        model_config=experiment.model,
        image_dir=experiment.image_dir or settings.image_dir,
        entries=entries,
        settings=settings,
        schedule=experiment.schedule,
        dataset=experiment.dataset,
        normalization=experiment.normalization,
        ledger=ledger,
        run_dir=run_dir,
        base_dir=experiment.base_dir,
        out=out,
    )
    recipe: ParameterCheckpoint | Callable[[int], ParameterCheckpoint]
    if experiment.reseed == "pipeline":
        cache: dict[int, ParameterCheckpoint] = {}

        def pipeline_recipe(seed: int) -> ParameterCheckpoint:
            if seed not in cache:
                cache[seed] = compose_stages(experiment.build_stages(seed), context).checkpoint
            return cache[seed]

        recipe = pipeline_recipe
    else:
        recipe = compose_stages(experiment.build_stages(), context).checkpoint

    results: dict[str, list[RunResult]] = {}
    record_paths: dict[str, list[Path]] = {}
    runs_dir = run_dir / "runs"
    for task_id, task in tasks.items():
        outcome = repeat_runs(
            recipe,
            task,
            experiment.finetune,
            experiment.n_runs,
            list(experiment.seeds),
            allow_fewer=experiment.allow_fewer_runs,
            output_dir=runs_dir,
            settings=settings,
            ledger=ledger,
            out=out,
        )
        results[task_id] = outcome.results
        record_paths[task_id] = [runs_dir / task_id / f"seed-{s}.yaml" for s in experiment.seeds[: experiment.n_runs]]

    pretrain_seconds = sum(
        r.get("wall_time") or 0.0 for r in ledger.records("finish") if str(r.get("key", "")).startswith("stage-")
    )
    card = scorecard(
        results,
        experiment.system_name,
        record_root=run_dir,
        record_paths=record_paths,
        family=experiment.family,
        training_hours=round(pretrain_seconds / 3600.0, 4),
        **describe(experiment.build_stages()),
    )
    card.save(run_dir / SCORECARD_FILE)
    card.source = run_dir / SCORECARD_FILE
    ledger.append("finish", key=EXPERIMENT_KEY, artifact=SCORECARD_FILE, avg=card.avg, finished_at=time.time())
    out.print(f"[green]✓ {experiment.system_name}: AVG {card.avg:.2f}[/green]")
    return ExperimentOutcome(experiment, card, run_dir)


def run_file(path: Path, settings: Settings | None = None, out: Console | None = None) -> list[ExperimentOutcome]:
    """Run every experiment a file expands to."""
    return [run_experiment(e, settings, out) for e in load_experiment(path).expand()]


def expand_patterns(patterns: list[str]) -> list[Path]:
    paths: list[Path] = []
    for pattern in patterns:
        matches = sorted(glob.glob(pattern, recursive=True)) or ([pattern] if Path(pattern).exists() else [])
        paths.extend(Path(m) for m in matches if Path(m) not in paths)
    return paths


def build_report(
    cards: list[SystemScorecard],
    baseline: str,
    *,
    alpha: float = DEFAULT_ALPHA,
    pairing: str = "run",
    reference: bool | Path = False,
    out: Console | None = None,
) -> ReportDocument:
    """Add reference rows when asked, test against the baseline and render.

    Raises:
        DataError: if there are no scorecards to report
        ConfigurationError: if the baseline is unknown
    """
    out = out or console
    if not cards:
        raise DataError("no completed experiments to report")
    rows = list(cards)
    if reference:
        names = {c.system for c in rows}
        for row in load_reference_rows(reference if isinstance(reference, Path) else None):
            if row.system in names:
                out.print(f"[yellow]⚠️  Reference row '{row.system}' shadowed by a reproduced system[/yellow]")
                continue
            rows.append(row)
    if baseline not in {c.system for c in rows}:
        raise ConfigurationError(f"baseline '{baseline}' is not among the systems", field="baseline")
    report = significance(rows, baseline, alpha, pairing)
    return emit_table(rows, report, baseline)


def matrix(
    patterns: list[str],
    baseline: str,
    *,
    alpha: float = DEFAULT_ALPHA,
    pairing: str = "run",
    reference: bool | Path = False,
    settings: Settings | None = None,
    out: Console | None = None,
) -> ReportDocument:
    """Combined report over every completed experiment matching the patterns.

    Raises:
        DataError: if no matching experiment has completed
    """
    out = out or console
    settings = settings or Settings()
    files = expand_patterns(patterns)
    cards = []
    for path in files:
        for experiment in load_experiment(path).expand():
            card = completed_scorecard(experiment, settings)
            if card is None:
                out.print(f"[yellow]⚠️  {experiment.experiment_id}: not completed, skipped[/yellow]")
                continue
            cards.append(card)
    if not cards:
        raise DataError(f"no completed experiments among {len(files)} file(s) matching {', '.join(patterns)}")
    return build_report(cards, baseline, alpha=alpha, pairing=pairing, reference=reference, out=out)


def load_scorecards(paths: list[Path]) -> list[SystemScorecard]:
    """Scorecards from files or run directories.

    Raises:
        DataError: if a path holds no scorecard
    """
    cards = []
    for path in map(Path, paths):
        file = path / SCORECARD_FILE if path.is_dir() else path
        if not file.exists():
            raise DataError(f"no scorecard at {path}")
        cards.append(SystemScorecard.load(file))
    return cards
