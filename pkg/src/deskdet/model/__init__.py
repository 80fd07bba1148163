from deskdet.model.backbone import BackboneParams, StageParams, backbone_forward, backbone_shapes
from deskdet.model.config import BackboneSpec, HeadSpec, LossSpec, ModelConfig, NeckSpec
from deskdet.model.detector import Detector, detector_from_checkpoint, load_detector
from deskdet.model.summary import ModelSummary, SummaryRow, render_summary, summarize

__all__ = [
    "BackboneParams",
    "BackboneSpec",
    "Detector",
    "HeadSpec",
    "LossSpec",
    "ModelConfig",
    "ModelSummary",
    "NeckSpec",
    "StageParams",
    "SummaryRow",
    "backbone_forward",
    "backbone_shapes",
    "detector_from_checkpoint",
    "load_detector",
    "render_summary",
    "summarize",
]
