"""Tests for the stage registry and stage specs."""

import pytest

from crisisvit.errors import ConfigurationError, VocabularyError
from crisisvit.stages import build_stage, get_stage_class, list_stages
from crisisvit.stages.binary import BinarySequentialStage
from crisisvit.stages.external import ExternalStage
from crisisvit.stages.multiclass import MulticlassStage
from crisisvit.stages.ssl import SslStage


class TestRegistry:
    def test_known_kinds(self):
        assert list_stages() == [
            "binary_sequential",
            "external",
            "multiclass_incident",
            "multiclass_joint",
            "multiclass_places",
            "ssl",
        ]

    def test_lookup_is_case_insensitive(self):
        assert get_stage_class("SSL") is SslStage
        assert get_stage_class("multiclass_joint") is MulticlassStage

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError, match="Available kinds"):
            get_stage_class("contrastive")

    def test_kind_required(self):
        with pytest.raises(ConfigurationError):
            build_stage({"epochs": 3})


class TestStageSpecs:
    """Specs round-trip and reject what they do not know."""

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "ssl", "epochs": 5, "split": "positive"},
            {"kind": "multiclass_incident", "epochs": 20, "batch_size": 64},
            {"kind": "multiclass_joint", "joint_head": "split", "schedule": {"learning_rate": 0.001}},
            {"kind": "binary_sequential", "negative_ratio": 2.0, "classes": ["flooded", "forest"]},
            {"kind": "external", "path": "weights/vit.pth", "dataset": "ImageNet-21k"},
        ],
    )
    def test_round_trip(self, spec):
        stage = build_stage(spec)
        again = build_stage(stage.to_spec())
        assert again.to_spec() == stage.to_spec()
        for key, value in spec.items():
            if key != "schedule":
                assert stage.to_spec()[key] == value

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "ssl", "mask_ratio": 1.0},
            {"kind": "ssl", "split": "negative"},
            {"kind": "multiclass_places", "epochs": 0},
            {"kind": "multiclass_joint", "joint_head": "triple"},
            {"kind": "multiclass_places", "schedule": {"learning_rate": -1.0}},
            {"kind": "external"},
            {"kind": "external", "path": "x.pth", "format": "onnx"},
        ],
    )
    def test_invalid(self, spec):
        with pytest.raises((ConfigurationError, TypeError)):
            build_stage(spec)

    def test_labels(self):
        assert build_stage({"kind": "multiclass_joint"}).methodology_label == "Multi-Class (Incident+Places)"
        assert build_stage({"kind": "binary_sequential"}).methodology_label == "Binary"
        assert build_stage({"kind": "ssl"}).methodology_label == "Self-Supervised"
        assert isinstance(build_stage({"kind": "external", "path": "a"}), ExternalStage)

    def test_binary_class_subset_follows_joint_order(self):
        stage = build_stage({"kind": "binary_sequential", "classes": ["forest", "flooded"]})
        assert isinstance(stage, BinarySequentialStage)
        assert stage.vocabulary().classes == ("flooded", "forest")

    def test_binary_unknown_class(self):
        stage = build_stage({"kind": "binary_sequential", "classes": ["alien invasion"]})
        with pytest.raises(VocabularyError):
            stage.vocabulary()
