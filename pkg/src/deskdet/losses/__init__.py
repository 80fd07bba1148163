from deskdet.losses.cls import bce_with_logits, cls_loss
from deskdet.losses.detection import LossBreakdown, LossWeights, detection_loss
from deskdet.losses.dfl import dfl_loss
from deskdet.losses.iou import IoUMetrics, WiouState, box_metric, iou_loss, iou_metric_arrays, iou_metrics

__all__ = [
    "IoUMetrics",
    "LossBreakdown",
    "LossWeights",
    "WiouState",
    "bce_with_logits",
    "box_metric",
    "cls_loss",
    "detection_loss",
    "dfl_loss",
    "iou_loss",
    "iou_metric_arrays",
    "iou_metrics",
]
