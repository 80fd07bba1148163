"""Total detection loss: box regression, classification and distribution terms."""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, Field

from deskdet.constants import ClsLossKind, IoULossKind
from deskdet.exceptions import NonFiniteError, NonFiniteLossError, ShapeMismatchError
from deskdet.head.anchors import AnchorPoints
from deskdet.head.assigner import Assignment
from deskdet.head.decode import dfl_decode, distances_to_boxes
from deskdet.head.head import HeadOutput
from deskdet.losses.cls import cls_loss
from deskdet.losses.dfl import dfl_loss
from deskdet.losses.iou import WiouState, iou_loss
from deskdet.tensor import Tensor

DFL_TARGET_MARGIN = 0.01


class LossWeights(BaseModel):
    box_w: float = Field(default=7.5, ge=0.0)
    cls_w: float = Field(default=0.5, ge=0.0)
    dfl_w: float = Field(default=1.5, ge=0.0)


class LossBreakdown(BaseModel):
    """Weighted components; ``box + cls + dfl == total``."""

    box: float
    cls: float
    dfl: float
    total: float
    num_pos: int


def _guarded(component: str, compute: Callable[[], Tensor]) -> Tensor:
    try:
        value = compute()
    except NonFiniteError as exc:
        raise NonFiniteLossError(component) from exc
    if not np.all(np.isfinite(value.data)):
        raise NonFiniteLossError(component)
    return value


def detection_loss(
    head_out: HeadOutput,
    assignments: Sequence[Assignment],
    anchors: AnchorPoints,
    weights: LossWeights | None = None,
    reg_variant: IoULossKind | str = IoULossKind.CIOU,
    cls_kind: ClsLossKind | str = ClsLossKind.BCE,
    wiou_state: WiouState | None = None,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted sum of the three terms, each normalised by max(positives, 1).

    Args:
        head_out: Raw head logits of the batch
        assignments: One assignment per image of the batch
        anchors: Anchor points the head was evaluated on
        weights: Component weights
        reg_variant: Regression loss of the box term
        cls_kind: Classification loss over all anchors
        wiou_state: Running state, required for WIoU

    Box and DFL terms run over positive anchors in grid units; class targets are the
    assignment's soft scores.

    """
    weights = weights or LossWeights()
    n, count, num_classes = head_out.cls.shape
    if len(assignments) != n or count != anchors.count:
        msg = f"{len(assignments)} assignments and {anchors.count} anchors for head output {head_out.cls.shape}"
        raise ShapeMismatchError(msg)

    positive = np.stack([a.positive_mask for a in assignments])
    num_pos = int(positive.sum())
    norm = float(max(num_pos, 1))
    target_scores = np.stack([a.target_scores(num_classes) for a in assignments])

    cls_term = _guarded("cls", lambda: cls_loss(head_out.cls, target_scores, cls_kind) / norm)

    if num_pos == 0:
        box_term = Tensor(0.0, dtype=head_out.reg.dtype)
        dfl_term = Tensor(0.0, dtype=head_out.reg.dtype)
    else:
        image_idx, anchor_idx = np.nonzero(positive)
        logits = head_out.reg_logits[image_idx, anchor_idx]
        strides = anchors.strides[anchor_idx, None]
        centres = anchors.grid_points()[anchor_idx]
        target_boxes = np.stack([assignments[i].target_boxes[a] for i, a in zip(image_idx, anchor_idx, strict=True)])
        target_grid = target_boxes / strides

        def box() -> Tensor:
            pred_grid = distances_to_boxes(dfl_decode(logits), centres)
            return iou_loss(pred_grid, Tensor(target_grid), reg_variant, wiou_state).sum() / norm

        def dfl() -> Tensor:
            ltrb = np.concatenate([centres - target_grid[:, :2], target_grid[:, 2:] - centres], axis=1)
            ltrb = np.clip(ltrb, 0.0, head_out.reg_max - DFL_TARGET_MARGIN)
            return dfl_loss(logits, ltrb).sum() / norm

        box_term = _guarded("box", box)
        dfl_term = _guarded("dfl", dfl)

    weighted_box = box_term * weights.box_w
    weighted_cls = cls_term * weights.cls_w
    weighted_dfl = dfl_term * weights.dfl_w
    total = weighted_box + weighted_cls + weighted_dfl
    breakdown = LossBreakdown(
        box=weighted_box.item(),
        cls=weighted_cls.item(),
        dfl=weighted_dfl.item(),
        total=total.item(),
        num_pos=num_pos,
    )
    return total, breakdown
