"""Evaluation result models: run results, scorecards and significance reports."""

from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any

import pandas as pd
import yaml

from crisisvit.errors import DataError, IntegrityError
from crisisvit.models.labels import TASK_COLUMNS


@dataclass(frozen=True)
class Prediction:
    example_id: str
    true_class: int
    predicted_class: int

    @property
    def correct(self) -> bool:
        return self.true_class == self.predicted_class


@dataclass(frozen=True)
class RunResult:
    """One fine-tune/evaluate execution on one benchmark split."""

    task_id: str
    seed: int
    provenance_digest: str
    split: str
    predictions: tuple[Prediction, ...]
    accuracy: float
    wall_time: float = 0.0

    @classmethod
    def from_predictions(
        cls,
        task_id: str,
        seed: int,
        provenance_digest: str,
        split: str,
        predictions: list[Prediction],
        wall_time: float = 0.0,
    ) -> "RunResult":
        return cls(
            task_id=task_id,
            seed=seed,
            provenance_digest=provenance_digest,
            split=split,
            predictions=tuple(predictions),
            accuracy=compute_accuracy(predictions),
            wall_time=wall_time,
        )

    def recompute_accuracy(self) -> float:
        return compute_accuracy(list(self.predictions))

    def correctness(self) -> dict[str, bool]:
        """Per-example correctness keyed by example id."""
        return {p.example_id: p.correct for p in self.predictions}

    def save(self, path: Path) -> Path:
        """Write ``<path>.yaml`` plus ``<path>.tsv`` predictions.

        Returns:
            Path of the YAML record
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        record_path = path.with_suffix(".yaml")
        predictions_path = path.with_suffix(".tsv")
        frame = pd.DataFrame(
            [(p.example_id, p.true_class, p.predicted_class) for p in self.predictions],
            columns=["example_id", "true_class", "predicted_class"],
        )
        frame.to_csv(predictions_path, sep="\t", index=False)
        record = {
            "task_id": self.task_id,
            "seed": self.seed,
            "provenance_digest": self.provenance_digest,
            "split": self.split,
            "accuracy": self.accuracy,
            "wall_time": self.wall_time,
            "examples": len(self.predictions),
            "predictions": predictions_path.name,
        }
        record_path.write_text(yaml.safe_dump(record, sort_keys=False))
        return record_path

    @classmethod
    def load(cls, record_path: Path) -> "RunResult":
        """Load a saved run and check its stored accuracy against its predictions."""
        record_path = Path(record_path)
        record = yaml.safe_load(record_path.read_text())
        frame = pd.read_csv(record_path.parent / record["predictions"], sep="\t", dtype={"example_id": str})
        predictions = [
            Prediction(str(row.example_id), int(row.true_class), int(row.predicted_class))
            for row in frame.itertuples(index=False)
        ]
        result = cls(
            task_id=record["task_id"],
            seed=int(record["seed"]),
            provenance_digest=record["provenance_digest"],
            split=record["split"],
            predictions=tuple(predictions),
            accuracy=float(record["accuracy"]),
            wall_time=float(record.get("wall_time", 0.0)),
        )
        if result.recompute_accuracy() != result.accuracy:
            raise IntegrityError(f"{record_path}: stored accuracy does not match its predictions")
        return result


def compute_accuracy(predictions: list[Prediction]) -> float:
    if not predictions:
        raise DataError("cannot compute accuracy over zero predictions")
    return sum(p.correct for p in predictions) / len(predictions)


@dataclass
class SystemScorecard:
    """Per-task accuracies of one system, in percent.

    ``runs`` holds every run's accuracy per task; the task means and AVG
    are always derived from it.
    """

    system: str
    runs: dict[str, list[float]]
    family: str = ""
    ssl_dataset: str = ""
    supervised_dataset: str = ""
    methodology: str = ""
    epochs: int | None = None
    training_hours: float | None = None
    reference: bool = False  # numbers copied from a publication, not reproduced
    run_records: dict[str, list[str]] = field(default_factory=dict)  # task -> saved RunResult paths
    source: Path | None = field(default=None, compare=False)  # file this scorecard was loaded from

    @property
    def means(self) -> dict[str, float]:
        return {task: fmean(values) for task, values in self.runs.items()}

    @property
    def avg(self) -> float:
        means = self.means
        return fmean(means[task] for task in TASK_COLUMNS)

    @property
    def n_runs(self) -> int:
        return min(len(values) for values in self.runs.values())

    def run_averages(self) -> list[float]:
        """AVG over the four tasks for each run index."""
        return [fmean(self.runs[task][i] for task in TASK_COLUMNS) for i in range(self.n_runs)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "system": self.system,
            "family": self.family,
            "ssl_dataset": self.ssl_dataset,
            "supervised_dataset": self.supervised_dataset,
            "methodology": self.methodology,
            "epochs": self.epochs,
            "training_hours": self.training_hours,
            "reference": self.reference,
            "runs": {task: list(values) for task, values in self.runs.items()},
            "means": self.means,
            "avg": self.avg,
            "run_records": self.run_records,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SystemScorecard":
        return cls(
            system=data["system"],
            runs={task: [float(v) for v in values] for task, values in data["runs"].items()},
            family=data.get("family", ""),
            ssl_dataset=data.get("ssl_dataset", ""),
            supervised_dataset=data.get("supervised_dataset", ""),
            methodology=data.get("methodology", ""),
            epochs=data.get("epochs"),
            training_hours=data.get("training_hours"),
            reference=bool(data.get("reference", False)),
            run_records={task: list(paths) for task, paths in (data.get("run_records") or {}).items()},
        )

    def save(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path: Path) -> "SystemScorecard":
        scorecard = cls.from_dict(yaml.safe_load(Path(path).read_text()))
        scorecard.source = Path(path)
        return scorecard

    def run_record_paths(self, task: str) -> list[Path]:
        """Saved RunResult records for a task, relative paths resolved against the scorecard file."""
        base = self.source.parent if self.source is not None else Path(".")
        return [p if p.is_absolute() else base / p for p in map(Path, self.run_records.get(task, []))]


@dataclass(frozen=True)
class Comparison:
    system: str
    p_value: float
    significant: bool


@dataclass(frozen=True)
class SignificanceReport:
    """Paired t-tests of every system against one baseline, Holm-corrected."""

    baseline: str
    alpha: float
    comparisons: tuple[Comparison, ...]
    method: str = "paired-t/holm-bonferroni"
    pairing: str = "run"

    def is_significant(self, system: str) -> bool:
        return any(c.system == system and c.significant for c in self.comparisons)
