"""Detection matching and 101-point interpolated average precision."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from deskdet.constants import RECALL_SAMPLES
from deskdet.types import Detection, GroundTruth, boxes_array, pairwise_iou

RECALL_GRID = np.linspace(0.0, 1.0, RECALL_SAMPLES)


def score_order(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score, ties by position."""
    return np.lexsort((np.arange(scores.size), -scores))


def greedy_match(ious: np.ndarray, order: np.ndarray, iou_thresh: float) -> np.ndarray:
    """TP flags for detections (rows of ``ious``) visited in ``order`` against unmatched ground truths."""
    flags = np.zeros(ious.shape[0], dtype=bool)
    if ious.shape[1] == 0:
        return flags
    available = np.ones(ious.shape[1], dtype=bool)
    for det in order:
        candidates = np.where(available, ious[det], -1.0)
        best = int(candidates.argmax())
        if available[best] and candidates[best] >= iou_thresh:
            flags[det] = True
            available[best] = False
    return flags


def match_detections(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_thresh: float
) -> np.ndarray:
    """Per-detection TP flags for one image and class, in input order.

    Detections are visited by descending score (ties by input order). Each takes the
    unmatched ground truth with the highest IoU and is a TP iff that IoU reaches the threshold.
    """
    scores = np.array([d.score for d in dets], dtype=np.float64)
    ious = pairwise_iou(boxes_array(dets), boxes_array(gts))
    return greedy_match(ious, score_order(scores), iou_thresh)


def precision_recall(tp: np.ndarray, scores: np.ndarray, num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall after each detection of the descending-score ranking."""
    ranked = np.asarray(tp, dtype=bool)[score_order(np.asarray(scores, dtype=np.float64))]
    cum_tp = np.cumsum(ranked)
    cum_fp = np.cumsum(~ranked)
    recall = cum_tp / max(num_gt, 1)
    precision = cum_tp / np.maximum(cum_tp + cum_fp, 1)
    return precision, recall


def interpolated_precision(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    """Max precision at recall >= r for every r of the 101-point recall grid."""
    if precision.size == 0:
        return np.zeros(RECALL_SAMPLES)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    index = np.searchsorted(recall, RECALL_GRID, side="left")
    padded = np.append(envelope, 0.0)
    return padded[np.minimum(index, envelope.size)]


def average_precision(tp: np.ndarray, scores: np.ndarray, num_gt: int) -> float | None:
    """101-point interpolated AP.

    Returns ``None`` when there is neither a ground truth nor a detection, so the class is
    left out of averages; 0.0 when there are detections but no ground truth.
    """
    if num_gt == 0:
        return None if np.asarray(tp).size == 0 else 0.0
    precision, recall = precision_recall(tp, scores, num_gt)
    return float(interpolated_precision(precision, recall).mean())
