from deskdet.types.detection import BoxXYXY, Detection, GroundTruth, boxes_array, pairwise_iou

__all__ = ["BoxXYXY", "Detection", "GroundTruth", "boxes_array", "pairwise_iou"]
