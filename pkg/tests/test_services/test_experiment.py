"""Tests for experiment files, runs and the result matrix."""

import pytest
import yaml

from crisisvit.errors import ConfigurationError, DataError, ValidationError
from crisisvit.services.experiment import (
    build_report,
    completed_scorecard,
    describe,
    expand_patterns,
    load_experiment,
    load_scorecards,
    matrix,
    parse_experiment,
    run_experiment,
    validate,
)
from crisisvit.services.ledger import RunLedger
from crisisvit.services.report import load_reference_rows
from crisisvit.settings import Settings
from crisisvit.stages import build_stage


def _experiment(**overrides):
    data = {
        "id": "places-toy",
        "model": "tiny",
        "stages": [{"kind": "multiclass_places", "epochs": 1, "batch_size": 8}],
        "manifest": "manifest.jsonl",
        "benchmark": "benchmark",
        "image_dir": "images",
        "output_dir": "runs",
        "finetune": {"epochs": 1, "batch_size": 8, "schedule": {"learning_rate": 0.001, "warmup_fraction": 0.0}},
    }
    data.update(overrides)
    return data


def _write(path, data):
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def _paths(violations):
    return [v.path for v in violations]


class TestParseExperiment:
    """Field-path addressed validation."""

    def test_valid(self):
        experiment, violations = parse_experiment(_experiment())
        assert violations == []
        assert experiment.system_name == "places-toy"
        assert experiment.model.num_patches == 16
        assert experiment.seeds == (0, 1, 2)
        assert experiment.stages[0]["kind"] == "multiclass_places"

    def test_too_few_runs(self):
        _, violations = parse_experiment(_experiment(n_runs=2))
        [violation] = violations
        assert violation.path == "n_runs"
        assert "at least 3" in violation.message

    def test_fewer_runs_with_override(self):
        experiment, violations = parse_experiment(_experiment(n_runs=1, allow_fewer_runs=True))
        assert violations == []
        assert experiment.seeds == (0,)

    def test_unknown_stage_kind(self):
        _, violations = parse_experiment(_experiment(stages=[{"kind": "contrastive"}]))
        assert _paths(violations) == ["stages[0].kind"]
        assert "multiclass_places" in violations[0].message

    def test_bad_stage_field(self):
        _, violations = parse_experiment(_experiment(stages=[{"kind": "multiclass_places", "epochz": 3}]))
        assert _paths(violations) == ["stages[0].epochz"]

    def test_every_violation_reported(self):
        data = _experiment(n_runs=0, seeds="abc", reseed="always", colour="blue")
        del data["benchmark"]
        _, violations = parse_experiment(data)
        assert set(_paths(violations)) >= {"n_runs", "seeds", "reseed", "colour", "benchmark"}

    def test_duplicate_seeds(self):
        _, violations = parse_experiment(_experiment(seeds=[1, 1, 2]))
        assert _paths(violations) == ["seeds"]

    def test_too_few_seeds(self):
        _, violations = parse_experiment(_experiment(seeds=[1, 2]))
        assert _paths(violations) == ["seeds"]

    def test_empty_pipeline(self):
        _, violations = parse_experiment(_experiment(stages=[]))
        assert _paths(violations) == ["stages"]

    def test_external_base_goes_first(self):
        experiment, violations = parse_experiment(_experiment(base="vit_in1k.pth"))
        assert violations == []
        assert [s["kind"] for s in experiment.stages] == ["external", "multiclass_places"]

    def test_external_only_later_in_pipeline(self):
        stages = [{"kind": "multiclass_places"}, {"kind": "external", "path": "x.pth"}]
        _, violations = parse_experiment(_experiment(stages=stages))
        assert _paths(violations) == ["stages[1].kind"]

    def test_manifest_required_for_incidents_stages(self):
        data = _experiment()
        del data["manifest"]
        _, violations = parse_experiment(data)
        assert _paths(violations) == ["manifest"]

    def test_unknown_model_preset(self):
        _, violations = parse_experiment(_experiment(model="vit_huge"))
        assert _paths(violations) == ["model.preset"]

    def test_model_overrides(self):
        experiment, _ = parse_experiment(_experiment(model={"preset": "tiny", "depth": 3}))
        assert experiment.model.depth == 3
        assert experiment.model.num_classes == 0

    def test_not_a_mapping(self):
        _, violations = parse_experiment(["a"])
        assert _paths(violations) == ["<file>"]


class TestSweep:
    def test_expands_one_experiment_per_batch_size(self):
        stages = [{"kind": "multiclass_places", "batch_size_sweep": [32, 64, 128, 256, 512]}]
        experiment, violations = parse_experiment(_experiment(stages=stages))
        assert violations == []
        expanded = experiment.expand()
        assert len(expanded) == 5
        assert [e.stages[0]["batch_size"] for e in expanded] == [32, 64, 128, 256, 512]
        assert expanded[0].experiment_id == "places-toy-bs32"
        assert len({e.fingerprint for e in expanded}) == 5

    def test_values_outside_the_grid(self):
        stages = [{"kind": "multiclass_places", "batch_size_sweep": [48]}]
        _, violations = parse_experiment(_experiment(stages=stages))
        assert _paths(violations) == ["stages[0].batch_size_sweep"]

    def test_only_one_sweep(self):
        stages = [
            {"kind": "multiclass_places", "batch_size_sweep": [32]},
            {"kind": "multiclass_joint", "batch_size_sweep": [64]},
        ]
        _, violations = parse_experiment(_experiment(stages=stages))
        assert _paths(violations) == ["stages[1].batch_size_sweep"]

    def test_ssl_stage_takes_no_sweep(self):
        stages = [{"kind": "ssl", "batch_size_sweep": [32]}]
        _, violations = parse_experiment(_experiment(stages=stages))
        assert _paths(violations) == ["stages[0].batch_size_sweep"]

    def test_unexpanded_sweep_cannot_run(self):
        stages = [{"kind": "multiclass_places", "batch_size_sweep": [32, 64]}]
        experiment, _ = parse_experiment(_experiment(stages=stages))
        with pytest.raises(ConfigurationError):
            run_experiment(experiment)


class TestFingerprint:
    def test_stable_across_loads(self, tmp_path):
        path = _write(tmp_path / "exp.yaml", _experiment())
        assert load_experiment(path).fingerprint == load_experiment(path).fingerprint

    def test_defaults_spelled_out_do_not_change_it(self, tmp_path):
        a = load_experiment(_write(tmp_path / "a.yaml", _experiment()))
        b = load_experiment(_write(tmp_path / "b.yaml", _experiment(n_runs=3, reseed="finetune")))
        assert a.fingerprint == b.fingerprint

    def test_changes_with_any_setting(self, tmp_path):
        a = load_experiment(_write(tmp_path / "a.yaml", _experiment()))
        b = load_experiment(_write(tmp_path / "b.yaml", _experiment(seeds=[5, 6, 7])))
        assert a.fingerprint != b.fingerprint

    def test_run_dir_names_id_and_fingerprint(self, tmp_path):
        experiment = load_experiment(_write(tmp_path / "a.yaml", _experiment()))
        assert experiment.run_dir(Settings()) == tmp_path / "runs" / f"places-toy-{experiment.fingerprint}"


class TestLoadExperiment:
    def test_relative_paths_resolve_against_the_file(self, tmp_path):
        (tmp_path / "configs").mkdir()
        experiment = load_experiment(_write(tmp_path / "configs" / "a.yaml", _experiment()))
        assert experiment.benchmark == tmp_path / "configs" / "benchmark"
        assert experiment.manifest == tmp_path / "configs" / "manifest.jsonl"

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_experiment(tmp_path / "nope.yaml")

    def test_invalid_file_lists_violations(self, tmp_path):
        path = _write(tmp_path / "a.yaml", _experiment(n_runs=2))
        with pytest.raises(ValidationError) as info:
            load_experiment(path)
        assert _paths(info.value.violations) == ["n_runs"]
        assert _paths(validate(path)) == ["n_runs"]

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "a.yaml"
        path.write_text("id: [unclosed\n")
        assert _paths(validate(path)) == ["<file>"]

    def test_expand_patterns(self, tmp_path):
        for name in ("a.yaml", "b.yaml"):
            _write(tmp_path / name, _experiment())
        assert expand_patterns([str(tmp_path / "*.yaml")]) == [tmp_path / "a.yaml", tmp_path / "b.yaml"]


class TestDescribe:
    def test_external_then_places(self):
        stages = [build_stage({"kind": "external", "path": "x.pth"}), build_stage({"kind": "multiclass_places"})]
        assert describe(stages) == {
            "ssl_dataset": "ImageNet-1k",
            "supervised_dataset": "ImageNet-1k+Incidents1M",
            "methodology": "Multi-Class (1k) + Multi-Class (Places)",
            "epochs": 10,
        }

    def test_ssl_then_incident(self):
        stages = [build_stage({"kind": "ssl", "epochs": 5}), build_stage({"kind": "multiclass_incident", "epochs": 20})]
        described = describe(stages)
        assert described["ssl_dataset"] == "Incidents1M"
        assert described["methodology"] == "Multi-Class (Incident)"
        assert described["epochs"] == 20


@pytest.fixture
def toy_experiment(tmp_path, manifest_file, benchmark_root, image_dir):
    return _write(tmp_path / "places-toy.yaml", _experiment())


@pytest.mark.slow
class TestRunExperiment:
    """End-to-end toy runs on the tiny model."""

    def test_run_and_resume(self, toy_experiment):
        experiment = load_experiment(toy_experiment)
        first = run_experiment(experiment)
        assert not first.resumed
        assert first.scorecard.n_runs == 3
        assert set(first.scorecard.runs) == {"disaster_types", "informativeness", "humanitarian", "damage_severity"}
        assert first.scorecard.methodology == "Multi-Class (Places)"
        assert (first.run_dir / "scorecard.yaml").exists()
        assert (first.run_dir / "experiment.yaml").exists()
        assert RunLedger(first.run_dir / "ledger.jsonl").missing_artifacts(first.run_dir) == []

        again = run_experiment(load_experiment(toy_experiment))
        assert again.resumed
        assert again.scorecard.runs == first.scorecard.runs
        assert completed_scorecard(experiment, Settings()) is not None

    def test_interrupted_run_reuses_finished_stages(self, toy_experiment):
        experiment = load_experiment(toy_experiment)
        first = run_experiment(experiment)
        (first.run_dir / "scorecard.yaml").unlink()
        again = run_experiment(experiment)
        assert not again.resumed
        assert again.scorecard.runs == first.scorecard.runs
        starts = RunLedger(first.run_dir / "ledger.jsonl").records("start")
        assert len(starts) == 1

    def test_matrix_with_reference_rows(self, toy_experiment):
        outcome = run_experiment(load_experiment(toy_experiment))
        document = matrix([str(toy_experiment)], "ViT-Base", reference=True)
        assert "places-toy" in document.text
        assert "CrisisViT I1M Places-20" in document.text
        assert document.significance.comparisons == ()
        assert load_scorecards([outcome.run_dir])[0].system == "places-toy"


class TestReports:
    def test_matrix_without_completed_runs(self, tmp_path):
        path = _write(tmp_path / "a.yaml", _experiment())
        with pytest.raises(DataError):
            matrix([str(path)], "places-toy")

    def test_reference_only_report(self):
        rows = load_reference_rows()
        document = build_report(rows[:1], "ResNet101", reference=True)
        assert document.best_system == "CrisisViT I1M Places-20"

    def test_unknown_baseline(self):
        with pytest.raises(ConfigurationError):
            build_report(load_reference_rows(), "AlexNet")

    def test_nothing_to_report(self):
        with pytest.raises(DataError):
            build_report([], "ViT-Base")

    def test_missing_scorecard(self, tmp_path):
        with pytest.raises(DataError):
            load_scorecards([tmp_path])
