"""Registry of pre-training stage kinds."""

from typing import Any

from crisisvit.errors import ConfigurationError
from crisisvit.stages.base import PretrainStage

# Registry of available stage kinds
_STAGES: dict[str, type[PretrainStage]] = {}


def register_stage(kind: str, stage_class: type[PretrainStage]) -> None:
    """Register a stage implementation under its kind."""
    _STAGES[kind.lower()] = stage_class


def get_stage_class(kind: str) -> type[PretrainStage]:
    """Look up a stage class.

    Raises:
        ConfigurationError: if the kind is unknown
    """
    kind = kind.lower()
    if kind not in _STAGES:
        available = ", ".join(list_stages())
        raise ConfigurationError(f"unknown stage kind '{kind}'. Available kinds: {available}", field="kind")
    return _STAGES[kind]


def build_stage(spec: dict[str, Any]) -> PretrainStage:
    """Instantiate a stage from an experiment-file mapping with a ``kind`` key."""
    if "kind" not in spec:
        raise ConfigurationError("stage needs a 'kind'", field="kind")
    return get_stage_class(str(spec["kind"])).from_spec(dict(spec))


def list_stages() -> list[str]:
    return sorted(_STAGES.keys())


def _auto_register_stages() -> None:
    from crisisvit.stages.binary import BinarySequentialStage
    from crisisvit.stages.external import ExternalStage
    from crisisvit.stages.multiclass import MulticlassStage
    from crisisvit.stages.ssl import SslStage

    register_stage(SslStage.kind, SslStage)
    register_stage(ExternalStage.kind, ExternalStage)
    register_stage(BinarySequentialStage.kind, BinarySequentialStage)
    for kind in ("multiclass_incident", "multiclass_places", "multiclass_joint"):
        register_stage(kind, MulticlassStage)


_auto_register_stages()
