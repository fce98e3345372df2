"""Tests for Crisis Image Benchmark loading."""

import pytest

from crisisvit.errors import DataError, VocabularyError
from crisisvit.services.benchmark import load_benchmark


def _append_row(path, row):
    with path.open("a") as f:
        f.write(row + "\n")


class TestLoadBenchmark:
    """Split files, class vocabularies and integrity findings."""

    def test_class_counts_per_task(self, benchmark_root):
        tasks, report = load_benchmark(benchmark_root)
        assert {t: spec.num_classes for t, spec in tasks.items()} == {
            "disaster_types": 7,
            "informativeness": 2,
            "humanitarian": 4,
            "damage_severity": 3,
        }
        assert report.is_clean
        assert report.counts["informativeness"] == {"train": 4, "validation": 2, "test": 2}
        assert report.missing_images == {t: 0 for t in tasks}

    def test_subset_of_tasks(self, benchmark_root):
        tasks, _ = load_benchmark(benchmark_root, ["damage_severity"])
        assert list(tasks) == ["damage_severity"]
        example = tasks["damage_severity"].split("test")[0]
        assert example.image_path.exists()

    def test_split_overlap_is_flagged(self, benchmark_root):
        row = "informativeness-train-0-0\timages/x.png\tinformative"
        _append_row(benchmark_root / "informativeness" / "test.tsv", row)
        _, report = load_benchmark(benchmark_root, ["informativeness"])
        assert report.overlaps["informativeness"] == ["informativeness-train-0-0 in train+test"]
        assert report.missing_images["informativeness"] == 1
        assert not report.is_clean

    def test_unknown_class_row_rejected(self, benchmark_root):
        _append_row(benchmark_root / "humanitarian" / "train.tsv", "h-x\timages/x.png\tpanic")
        tasks, report = load_benchmark(benchmark_root, ["humanitarian"])
        [rejected] = report.rejected
        assert (rejected.split, rejected.row) == ("train", 9)
        assert "panic" in rejected.reason
        assert len(tasks["humanitarian"].split("train")) == 8

    def test_empty_test_split(self, benchmark_root):
        (benchmark_root / "informativeness" / "test.tsv").write_text("image_id\timage_path\tclass_label\n")
        with pytest.raises(DataError, match="empty test split"):
            load_benchmark(benchmark_root, ["informativeness"])

    def test_missing_split_names_task_and_split(self, benchmark_root):
        (benchmark_root / "humanitarian" / "dev.tsv").unlink()
        with pytest.raises(DataError, match="'humanitarian' is missing its validation split"):
            load_benchmark(benchmark_root, ["humanitarian"])

    def test_missing_column(self, benchmark_root):
        (benchmark_root / "informativeness" / "train.tsv").write_text("image_id\tlabel\na\tinformative\n")
        with pytest.raises(DataError, match="class_label"):
            load_benchmark(benchmark_root, ["informativeness"])

    def test_unknown_task(self, benchmark_root):
        with pytest.raises(VocabularyError):
            load_benchmark(benchmark_root, ["sentiment"])

    def test_missing_root(self, tmp_path):
        with pytest.raises(DataError):
            load_benchmark(tmp_path / "nowhere")

    def test_unknown_split_name(self, benchmark_root):
        tasks, _ = load_benchmark(benchmark_root, ["informativeness"])
        with pytest.raises(DataError):
            tasks["informativeness"].split("holdout")
