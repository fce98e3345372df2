"""ViT backbone and parameter checkpoints."""

from crisisvit.backbone.checkpoint import ParameterCheckpoint, ProvenanceStage, replace_head
from crisisvit.backbone.vit import ImageTensorBatch, VisionTransformer, build_model, forward_classify

__all__ = [
    "ImageTensorBatch",
    "ParameterCheckpoint",
    "ProvenanceStage",
    "VisionTransformer",
    "build_model",
    "forward_classify",
    "replace_head",
]
