"""Tests for run results and scorecards."""

import pytest

from crisisvit.errors import DataError, IntegrityError
from crisisvit.models.labels import TASK_COLUMNS
from crisisvit.models.results import Prediction, RunResult, SystemScorecard, compute_accuracy


def _result(correct=3, total=4):
    predictions = [Prediction(f"img-{i}", 1, 1 if i < correct else 0) for i in range(total)]
    return RunResult.from_predictions("humanitarian", 2, "abc123", "test", predictions, wall_time=1.5)


class TestRunResult:
    def test_accuracy_from_predictions(self):
        result = _result()
        assert result.accuracy == 0.75
        assert result.correctness() == {"img-0": True, "img-1": True, "img-2": True, "img-3": False}

    def test_save_and_load(self, tmp_path):
        result = _result()
        record = result.save(tmp_path / "runs" / "seed-2")
        assert record.name == "seed-2.yaml"
        assert (tmp_path / "runs" / "seed-2.tsv").exists()
        assert RunResult.load(record) == result

    def test_tampered_accuracy(self, tmp_path):
        record = _result().save(tmp_path / "seed-2")
        record.write_text(record.read_text().replace("accuracy: 0.75", "accuracy: 0.9"))
        with pytest.raises(IntegrityError):
            RunResult.load(record)

    def test_numeric_looking_ids_stay_strings(self, tmp_path):
        predictions = [Prediction("007", 0, 0), Prediction("8", 1, 0)]
        result = RunResult.from_predictions("informativeness", 0, "d", "test", predictions)
        loaded = RunResult.load(result.save(tmp_path / "r"))
        assert [p.example_id for p in loaded.predictions] == ["007", "8"]

    def test_no_predictions(self):
        with pytest.raises(DataError):
            compute_accuracy([])


class TestSystemScorecard:
    def _card(self):
        runs = {task: [70.0 + i, 72.0 + i, 74.0 + i] for i, task in enumerate(TASK_COLUMNS)}
        return SystemScorecard("toy", runs, family="crisisvit", epochs=10, training_hours=0.5)

    def test_means_and_avg(self):
        card = self._card()
        assert card.means["disaster_types"] == pytest.approx(72.0)
        assert card.avg == pytest.approx(73.5)
        assert card.n_runs == 3
        assert card.run_averages() == pytest.approx([71.5, 73.5, 75.5])

    def test_save_and_load(self, tmp_path):
        card = self._card()
        card.run_records = {"humanitarian": ["runs/humanitarian/seed-0.yaml"]}
        card.save(tmp_path / "scorecard.yaml")
        loaded = SystemScorecard.load(tmp_path / "scorecard.yaml")
        assert loaded == card
        assert loaded.run_record_paths("humanitarian") == [tmp_path / "runs" / "humanitarian" / "seed-0.yaml"]
        assert loaded.run_record_paths("informativeness") == []
