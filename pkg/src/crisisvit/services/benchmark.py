"""Crisis Image Benchmark splits.

Layout: ``<root>/<task_id>/{train,dev,test}.tsv`` with columns
``image_id``, ``image_path`` (relative to the root) and ``class_label``.
"""

from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from crisisvit.errors import DataError
from crisisvit.models.labels import BENCHMARK_TASKS, LabelVocabulary, benchmark_vocabulary

SPLIT_FILES = {"train": "train.tsv", "validation": "dev.tsv", "test": "test.tsv"}
COLUMNS = ("image_id", "image_path", "class_label")


@dataclass(frozen=True)
class BenchmarkExample:
    image_id: str
    image_path: Path
    class_index: int


@dataclass
class TaskSpec:
    """One benchmark task: its classes and its three splits."""

    task_id: str
    vocabulary: LabelVocabulary
    split_paths: dict[str, Path]
    examples: dict[str, list[BenchmarkExample]] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.vocabulary)

    def split(self, name: str) -> list[BenchmarkExample]:
        if name not in self.examples:
            raise DataError(f"task '{self.task_id}' has no split '{name}'")
        return self.examples[name]


@dataclass(frozen=True)
class RejectedRow:
    task_id: str
    split: str
    row: int  # 1-based data row, header excluded
    reason: str


@dataclass
class BenchmarkReport:
    """Per-task counts and integrity findings."""

    counts: dict[str, dict[str, int]] = field(default_factory=dict)
    rejected: list[RejectedRow] = field(default_factory=list)
    overlaps: dict[str, list[str]] = field(default_factory=dict)  # task -> "<id> in train+test"
    missing_images: dict[str, int] = field(default_factory=dict)

    @property
    def is_clean(self) -> bool:
        return not self.rejected and not any(self.overlaps.values())


def _read_split(
    root: Path, task_id: str, split: str, path: Path, vocabulary: LabelVocabulary, report: BenchmarkReport
) -> list[BenchmarkExample]:
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    missing = [c for c in COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{task_id}/{split}: {path.name} lacks column(s) {', '.join(missing)}")
    examples = []
    for row, record in enumerate(frame.itertuples(index=False), start=1):
        label = str(record.class_label).strip()
        if label not in vocabulary:
            report.rejected.append(RejectedRow(task_id, split, row, f"unknown class '{label}'"))
            continue
        image_id = str(record.image_id).strip()
        if not image_id:
            report.rejected.append(RejectedRow(task_id, split, row, "empty image_id"))
            continue
        examples.append(BenchmarkExample(image_id, root / record.image_path, vocabulary.index(label)))
    return examples


def load_benchmark(root: Path, tasks: list[str] | None = None) -> tuple[dict[str, TaskSpec], BenchmarkReport]:
    """Load every task's splits and check them.

    Args:
        root: Benchmark directory
        tasks: Task ids to load (all four by default)

    Returns:
        Tasks keyed by id, and the integrity report (rejected rows, ids
        shared between splits, missing image files)

    Raises:
        DataError: naming task and split when a split file is missing, or
            when a test split is empty
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"benchmark directory not found: {root}")
    report = BenchmarkReport()
    specs: dict[str, TaskSpec] = {}
    for task_id in tasks or list(BENCHMARK_TASKS):
        vocabulary = benchmark_vocabulary(task_id)
        paths = {split: root / task_id / name for split, name in SPLIT_FILES.items()}
        spec = TaskSpec(task_id, vocabulary, paths)
        for split, path in paths.items():
            if not path.exists():
                raise DataError(f"task '{task_id}' is missing its {split} split ({path})")
            spec.examples[split] = _read_split(root, task_id, split, path, vocabulary, report)
        if not spec.examples["test"]:
            raise DataError(f"task '{task_id}' has an empty test split")

        seen: dict[str, str] = {}
        overlaps = []
        for split in SPLIT_FILES:
            for example in spec.examples[split]:
                first = seen.setdefault(example.image_id, split)
                if first != split:
                    overlaps.append(f"{example.image_id} in {first}+{split}")
        report.overlaps[task_id] = overlaps
        report.counts[task_id] = {split: len(spec.examples[split]) for split in SPLIT_FILES}
        report.missing_images[task_id] = sum(
            not e.image_path.exists() for split in SPLIT_FILES for e in spec.examples[split]
        )
        specs[task_id] = spec
    return specs, report
