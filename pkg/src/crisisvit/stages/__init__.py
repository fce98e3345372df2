"""Pre-training stages that can be chained into a checkpoint lineage."""

from crisisvit.stages.base import PretrainStage, StageContext
from crisisvit.stages.factory import build_stage, get_stage_class, list_stages, register_stage

__all__ = ["PretrainStage", "StageContext", "build_stage", "get_stage_class", "list_stages", "register_stage"]
