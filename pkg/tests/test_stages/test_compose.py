"""Tests for chaining pre-training stages."""

from dataclasses import replace
from typing import Any

import pytest
import torch

from crisisvit.backbone.checkpoint import ParameterCheckpoint
from crisisvit.backbone.vit import build_model
from crisisvit.errors import ConfigurationError, DataError, TrainingError
from crisisvit.services.ledger import RunLedger
from crisisvit.stages import PretrainStage, StageContext, build_stage
from crisisvit.stages.compose import compose_stages, stage_key

SSL = {
    "kind": "ssl",
    "epochs": 1,
    "max_steps": 2,
    "batch_size": 8,
    "decoder_depth": 1,
    "decoder_dim": 16,
    "decoder_heads": 2,
}
PLACES = {"kind": "multiclass_places", "epochs": 1, "batch_size": 8}


class ExplodingStage(PretrainStage):
    kind = "exploding"

    @property
    def methodology_label(self) -> str:
        return "Boom"

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind}

    @classmethod
    def from_spec(cls, spec: dict[str, Any]) -> "ExplodingStage":
        return cls()

    def run(self, checkpoint, context):
        raise RuntimeError("out of memory")


@pytest.fixture
def context(tiny_config, image_dir, place_entries, tmp_path):
    return StageContext(model_config=tiny_config, image_dir=image_dir, entries=place_entries, base_dir=tmp_path)


@pytest.fixture
def resumable(context, tmp_path):
    run_dir = tmp_path / "run"
    return replace(context, run_dir=run_dir, ledger=RunLedger(run_dir / "ledger.jsonl"))


class TestComposeStages:
    """Provenance threading, compatibility and failure handling."""

    def test_empty_stage_list(self, context):
        with pytest.raises(ConfigurationError):
            compose_stages([], context)

    def test_ssl_then_places(self, context):
        outcome = compose_stages([build_stage(SSL), build_stage(PLACES)], context)
        strategies = [s.strategy for s in outcome.checkpoint.provenance]
        assert strategies == ["self-supervised", "multiclass_places"]
        assert outcome.checkpoint.num_classes == 49
        assert len(outcome.outcomes) == 2

    def test_external_state_dict_starts_lineage(self, context, tiny_config, tmp_path):
        torch.save(build_model(tiny_config, seed=1).state_dict(), tmp_path / "vit.pth")
        stages = [build_stage({"kind": "external", "path": "vit.pth"}), build_stage(PLACES)]
        checkpoint = compose_stages(stages, context).checkpoint
        assert [s.strategy for s in checkpoint.provenance] == ["external", "multiclass_places"]
        assert checkpoint.provenance[0].dataset == "ImageNet-1k"

    def test_external_archive_keeps_its_provenance(self, context, tiny_config, tmp_path):
        archived = compose_stages([build_stage(PLACES)], context).checkpoint
        archived.save(tmp_path / "places.ckpt")
        checkpoint = compose_stages([build_stage({"kind": "external", "path": "places.ckpt"})], context).checkpoint
        assert checkpoint.provenance == archived.provenance
        assert checkpoint.digest == archived.digest

    def test_external_after_training(self, context, tiny_config, tmp_path):
        ParameterCheckpoint.from_model(build_model(tiny_config, seed=0)).save(tmp_path / "x.ckpt")
        stages = [build_stage(PLACES), build_stage({"kind": "external", "path": "x.ckpt"})]
        with pytest.raises(ConfigurationError):
            compose_stages(stages, context)

    def test_missing_external_file(self, context):
        with pytest.raises(DataError):
            compose_stages([build_stage({"kind": "external", "path": "nowhere.pth"})], context)

    def test_incompatible_checkpoint(self, context, tiny_config, tmp_path):
        other = replace(tiny_config, depth=3)
        ParameterCheckpoint.from_model(build_model(other, seed=0)).save(tmp_path / "deep.ckpt")
        stages = [build_stage({"kind": "external", "path": "deep.ckpt"}), build_stage(PLACES)]
        with pytest.raises(ConfigurationError, match="does not match"):
            compose_stages(stages, context)

    def test_unexpected_failure_is_wrapped(self, resumable):
        with pytest.raises(TrainingError, match="out of memory"):
            compose_stages([ExplodingStage()], resumable)
        [failure] = resumable.ledger.records("stage_failed")
        assert "RuntimeError" in failure["error"]

    def test_finished_stages_are_resumed(self, resumable):
        stages = [build_stage(SSL), build_stage(PLACES)]
        first = compose_stages(stages, resumable)
        assert first.resumed == []
        assert len(resumable.ledger.records("finish")) == 2

        again = compose_stages([build_stage(SSL), build_stage(PLACES)], resumable)
        assert again.outcomes == [None, None]
        assert len(again.resumed) == 2
        assert again.checkpoint.digest == first.checkpoint.digest
        assert again.checkpoint.provenance == first.checkpoint.provenance

    def test_changed_stage_is_retrained(self, resumable):
        compose_stages([build_stage(SSL), build_stage(PLACES)], resumable)
        again = compose_stages([build_stage(SSL), build_stage({**PLACES, "seed": 9})], resumable)
        assert len(again.resumed) == 1
        assert again.outcomes[1] is not None


class TestStageKey:
    def test_depends_on_upstream(self, context):
        stage = build_stage(PLACES)
        assert stage_key("root", stage, context) != stage_key("stage-abc", stage, context)

    def test_depends_on_model(self, context, tiny_config):
        stage = build_stage(PLACES)
        deeper = replace(context, model_config=replace(tiny_config, depth=3))
        assert stage_key("root", stage, context) != stage_key("root", stage, deeper)
