"""Tests for configuration dataclasses."""

import pytest

from crisisvit.errors import ConfigurationError
from crisisvit.models.config import FinetuneConfig, Normalization, PretrainStrategy, SslTrainConfig, TrainSchedule


class TestPretrainStrategy:
    @pytest.mark.parametrize(
        ("kind", "vocabulary"),
        [
            ("multiclass_incident", "incident"),
            ("multiclass_places", "place"),
            ("multiclass_joint", "joint"),
            ("binary_sequential", "joint"),
        ],
    )
    def test_vocabulary(self, kind, vocabulary):
        assert PretrainStrategy(kind).vocabulary_name == vocabulary

    def test_defaults(self):
        strategy = PretrainStrategy("multiclass_places")
        assert (strategy.epochs, strategy.batch_size, strategy.joint_head) == (10, 128, "single")
        assert strategy.is_multiclass
        assert not PretrainStrategy("binary_sequential").is_multiclass

    @pytest.mark.parametrize(
        ("kwargs", "field"),
        [
            ({"kind": "contrastive"}, "kind"),
            ({"kind": "multiclass_places", "epochs": 0}, "epochs"),
            ({"kind": "multiclass_places", "batch_size": 0}, "batch_size"),
            ({"kind": "binary_sequential", "negative_ratio": 0.0}, "negative_ratio"),
            ({"kind": "multiclass_places", "joint_head": "split"}, "joint_head"),
            ({"kind": "multiclass_places", "holdout_fraction": 1.0}, "holdout_fraction"),
        ],
    )
    def test_invalid(self, kwargs, field):
        with pytest.raises(ConfigurationError) as info:
            PretrainStrategy(**kwargs).validate()
        assert info.value.field == field


class TestSchedules:
    def test_finetune_defaults(self):
        config = FinetuneConfig()
        assert (config.epochs, config.batch_size, config.schedule.learning_rate) == (10, 128, 5e-5)
        assert config.keep_best

    def test_ssl_defaults(self):
        config = SslTrainConfig()
        assert (config.mask_ratio, config.batch_size, config.optimizer) == (0.75, 1024, "adam")

    @pytest.mark.parametrize(
        "kwargs",
        [{"learning_rate": 0.0}, {"warmup_fraction": 1.0}, {"decay": "step"}, {"grad_clip": 0.0}],
    )
    def test_invalid_schedule(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainSchedule(**kwargs).validate()

    def test_decoder_heads_divide_width(self):
        with pytest.raises(ConfigurationError) as info:
            SslTrainConfig(decoder_dim=30, decoder_heads=8).validate()
        assert info.value.field == "decoder_dim"


class TestNormalization:
    def test_round_trip(self):
        norm = Normalization((0.5, 0.5, 0.5), (0.25, 0.25, 0.25))
        assert Normalization.from_dict(norm.to_dict()) == norm

    def test_channel_count(self):
        with pytest.raises(ConfigurationError):
            Normalization((0.5,), (0.5,)).validate(3)

    def test_positive_std(self):
        with pytest.raises(ConfigurationError):
            Normalization((0.5, 0.5, 0.5), (0.5, 0.0, 0.5)).validate(3)
