from __future__ import annotations

import numpy as np

from deskdet.exceptions import ShapeMismatchError
from deskdet.head.anchors import AnchorPoints
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F
from deskdet.types import BoxXYXY, Detection


def dfl_decode(reg_logits: Tensor | np.ndarray) -> Tensor:
    """Expected bin index per side: sum_i i * softmax(logits)_i over the last axis, in stride units."""
    logits = reg_logits if isinstance(reg_logits, Tensor) else Tensor(reg_logits)
    bins = Tensor(np.arange(logits.shape[-1], dtype=logits.dtype))
    return F.sum(F.softmax(logits, axis=-1) * bins, axis=-1)


def distances_to_boxes(distances: Tensor, centres: np.ndarray) -> Tensor:
    """(l, t, r, b) distances around ``centres`` [A,2] to (x1, y1, x2, y2), in the units of both."""
    c = Tensor(np.asarray(centres, dtype=distances.dtype))
    top_left = c - distances[..., :2]
    bottom_right = c + distances[..., 2:]
    return F.concat([top_left, bottom_right], axis=-1)


def decode_boxes(
    reg: Tensor | np.ndarray,
    cls: Tensor | np.ndarray,
    anchors: AnchorPoints,
    conf_thresh: float,
    image_id: int = 0,
) -> list[Detection]:
    """Turn one image's head logits (reg [A,4*(R+1)], cls [A,nc]) into detections in pixels.

    The score is the sigmoid of the best class logit; boxes are clipped to the image and
    boxes left with no area are dropped.
    """
    reg_data = reg.data if isinstance(reg, Tensor) else np.asarray(reg)
    cls_data = cls.data if isinstance(cls, Tensor) else np.asarray(cls)
    if reg_data.ndim != 2 or reg_data.shape[1] % 4 or reg_data.shape[0] != anchors.count:  # noqa: PLR2004
        msg = f"regression logits of shape {reg_data.shape} do not fit {anchors.count} anchors"
        raise ShapeMismatchError(msg)
    if cls_data.ndim != 2 or cls_data.shape[0] != anchors.count:  # noqa: PLR2004
        msg = f"class logits of shape {cls_data.shape} do not fit {anchors.count} anchors"
        raise ShapeMismatchError(msg)

    scores = 1.0 / (1.0 + np.exp(-np.clip(cls_data, -500.0, 500.0)))
    best_class = scores.argmax(axis=1)
    best_score = scores[np.arange(anchors.count), best_class]
    keep = np.flatnonzero(best_score >= conf_thresh)
    if keep.size == 0:
        return []

    logits = reg_data[keep].reshape(keep.size, 4, -1)
    distances = dfl_decode(logits).data * anchors.strides[keep, None]
    centres = anchors.points[keep]
    boxes = np.concatenate([centres - distances[:, :2], centres + distances[:, 2:]], axis=1)
    boxes = np.clip(boxes, 0.0, float(anchors.input_size))

    detections = []
    for row, anchor in enumerate(keep):
        x1, y1, x2, y2 = boxes[row]
        if x2 <= x1 or y2 <= y1:
            continue
        detections.append(
            Detection(
                box=BoxXYXY(x1=x1, y1=y1, x2=x2, y2=y2),
                score=float(min(max(best_score[anchor], 0.0), 1.0)),
                class_id=int(best_class[anchor]),
                image_id=image_id,
            )
        )
    return detections
