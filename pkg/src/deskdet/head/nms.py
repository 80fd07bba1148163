from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from deskdet.constants import MAX_DETECTIONS
from deskdet.types import Detection, boxes_array, pairwise_iou


def nms(detections: Sequence[Detection], iou_thresh: float, max_det: int = MAX_DETECTIONS) -> list[Detection]:
    """Class-wise greedy suppression.

    Detections are visited by descending score, ties by original index. A detection is kept
    unless its IoU with an already kept box of the same class exceeds ``iou_thresh``.
    """
    if not detections:
        return []
    scores = np.array([d.score for d in detections])
    classes = np.array([d.class_id for d in detections])
    order = np.lexsort((np.arange(len(detections)), -scores))
    ious = pairwise_iou(boxes_array(detections), boxes_array(detections))

    kept: list[int] = []
    for index in order:
        same_class = [k for k in kept if classes[k] == classes[index]]
        if same_class and ious[index, same_class].max() > iou_thresh:
            continue
        kept.append(int(index))
        if len(kept) == max_det:
            break
    return [detections[k] for k in kept]
