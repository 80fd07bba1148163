"""Task-aligned target assignment."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from deskdet.exceptions import ShapeMismatchError
from deskdet.head.anchors import AnchorPoints
from deskdet.types import GroundTruth, boxes_array, pairwise_iou

ALIGN_EPS = 1e-9


class Assignment(BaseModel):
    """Per-anchor targets of one image.

    ``gt_index`` is -1 for background anchors; ``weights`` holds the normalised alignment
    metric of positives and zero elsewhere.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    gt_index: np.ndarray
    weights: np.ndarray
    target_boxes: np.ndarray
    target_classes: np.ndarray

    @property
    def positive_mask(self) -> np.ndarray:
        return self.gt_index >= 0

    @property
    def num_pos(self) -> int:
        return int(self.positive_mask.sum())

    def target_scores(self, num_classes: int) -> np.ndarray:
        """Soft class targets [A, num_classes]: the positive's weight at its class, zero elsewhere."""
        scores = np.zeros((self.gt_index.size, num_classes))
        positives = np.flatnonzero(self.positive_mask)
        scores[positives, self.target_classes[positives]] = self.weights[positives]
        return scores


def _background(count: int) -> Assignment:
    return Assignment(
        gt_index=np.full(count, -1, dtype=np.int64),
        weights=np.zeros(count),
        target_boxes=np.zeros((count, 4)),
        target_classes=np.full(count, -1, dtype=np.int64),
    )


def assign_targets(
    anchors: AnchorPoints,
    gts: Sequence[GroundTruth],
    cls_scores: np.ndarray,
    pred_boxes: np.ndarray,
    top_k: int = 10,
    alpha: float = 0.5,
    beta: float = 6.0,
) -> Assignment:
    """Assign anchors to ground truths by the alignment metric score**alpha * IoU**beta.

    Args:
        anchors: Anchor centres of every scale
        gts: Ground truths of one image
        cls_scores: Predicted class probabilities [A, num_classes]
        pred_boxes: Predicted boxes [A, 4] in pixels
        top_k: Positives kept per ground truth among its candidates
        alpha: Exponent of the class score
        beta: Exponent of the IoU

    Candidates of a ground truth are the anchors whose centre lies strictly inside its box;
    the top_k candidates by (metric desc, anchor index asc) become positive. An anchor claimed
    by several ground truths goes to the one with the higher IoU, ties to the lower index.

    """
    count = anchors.count
    if cls_scores.shape[0] != count or pred_boxes.shape != (count, 4):
        msg = f"scores {cls_scores.shape} and boxes {pred_boxes.shape} do not fit {count} anchors"
        raise ShapeMismatchError(msg)
    if not gts:
        return _background(count)

    gt_boxes = boxes_array(gts)
    gt_classes = np.array([gt.class_id for gt in gts], dtype=np.int64)
    px = anchors.points[:, 0]
    py = anchors.points[:, 1]
    inside = (
        (px[None] > gt_boxes[:, 0:1])
        & (px[None] < gt_boxes[:, 2:3])
        & (py[None] > gt_boxes[:, 1:2])
        & (py[None] < gt_boxes[:, 3:4])
    )
    ious = np.clip(pairwise_iou(gt_boxes, pred_boxes), 0.0, 1.0)
    scores = np.clip(cls_scores[:, gt_classes].T, 0.0, 1.0)
    metric = scores**alpha * ious**beta * inside

    claimed = np.zeros_like(inside)
    for g in range(len(gts)):
        candidates = np.flatnonzero(inside[g])
        order = np.lexsort((candidates, -metric[g, candidates]))
        claimed[g, candidates[order[:top_k]]] = True

    result = _background(count)
    positives = np.flatnonzero(claimed.any(axis=0))
    if positives.size == 0:
        return result
    claim_iou = np.where(claimed[:, positives], ious[:, positives], -1.0)
    owner = claim_iou.argmax(axis=0)
    result.gt_index[positives] = owner

    align = metric[owner, positives]
    own_iou = ious[owner, positives]
    weights = np.zeros(positives.size)
    for g in np.unique(owner):
        rows = owner == g
        weights[rows] = align[rows] * own_iou[rows].max() / (align[rows].max() + ALIGN_EPS)
    result.weights[positives] = weights
    result.target_boxes[positives] = gt_boxes[owner]
    result.target_classes[positives] = gt_classes[owner]
    return result
