from deskdet.head.anchors import AnchorPoints, make_anchor_points
from deskdet.head.assigner import Assignment, assign_targets
from deskdet.head.decode import decode_boxes, dfl_decode, distances_to_boxes
from deskdet.head.head import DetectionHeadParams, HeadOutput, ScaleBranchParams, head_forward
from deskdet.head.nms import nms

__all__ = [
    "AnchorPoints",
    "Assignment",
    "DetectionHeadParams",
    "HeadOutput",
    "ScaleBranchParams",
    "assign_targets",
    "decode_boxes",
    "dfl_decode",
    "distances_to_boxes",
    "head_forward",
    "make_anchor_points",
    "nms",
]
