"""Overlap metrics between axis-aligned boxes and the regression losses built on them.

Boxes are tensors whose last axis holds (x1, y1, x2, y2); every function broadcasts over
the leading axes.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, Field

from deskdet.constants import BOX_EPS, IoULossKind
from deskdet.exceptions import MissingLossStateError
from deskdet.tensor import Tensor, no_grad
from deskdet.tensor import functional as F
from deskdet.types import BoxXYXY

SIOU_THETA = 4.0


class _Geometry(NamedTuple):
    iou: Tensor
    union: Tensor
    enclose_w: Tensor
    enclose_h: Tensor
    dx: Tensor
    dy: Tensor
    wa: Tensor
    ha: Tensor
    wb: Tensor
    hb: Tensor

    @property
    def rho2(self) -> Tensor:
        return self.dx * self.dx + self.dy * self.dy

    @property
    def diag2(self) -> Tensor:
        return self.enclose_w * self.enclose_w + self.enclose_h * self.enclose_h + BOX_EPS


def _geometry(a: Tensor, b: Tensor) -> _Geometry:
    ax1, ay1, ax2, ay2 = (a[..., i] for i in range(4))
    bx1, by1, bx2, by2 = (b[..., i] for i in range(4))
    wa, ha = ax2 - ax1, ay2 - ay1
    wb, hb = bx2 - bx1, by2 - by1
    inter_w = F.clamp(F.minimum(ax2, bx2) - F.maximum(ax1, bx1), low=0.0)
    inter_h = F.clamp(F.minimum(ay2, by2) - F.maximum(ay1, by1), low=0.0)
    inter = inter_w * inter_h
    union = wa * ha + wb * hb - inter
    return _Geometry(
        iou=inter / (union + BOX_EPS),
        union=union,
        enclose_w=F.maximum(ax2, bx2) - F.minimum(ax1, bx1),
        enclose_h=F.maximum(ay2, by2) - F.minimum(ay1, by1),
        dx=(bx1 + bx2 - ax1 - ax2) * 0.5,
        dy=(by1 + by2 - ay1 - ay2) * 0.5,
        wa=wa,
        ha=ha,
        wb=wb,
        hb=hb,
    )


def _giou(g: _Geometry) -> Tensor:
    enclose = g.enclose_w * g.enclose_h + BOX_EPS
    return g.iou - (enclose - g.union) / enclose


def _diou(g: _Geometry) -> Tensor:
    return g.iou - g.rho2 / g.diag2


def _ciou(g: _Geometry) -> Tensor:
    v = (4.0 / math.pi**2) * (F.atan(g.wb / (g.hb + BOX_EPS)) - F.atan(g.wa / (g.ha + BOX_EPS))) ** 2
    alpha = F.stop_gradient(v / (v - g.iou + (1.0 + BOX_EPS)))
    return _diou(g) - alpha * v


def _eiou(g: _Geometry) -> Tensor:
    width_term = (g.wa - g.wb) ** 2 / (g.enclose_w * g.enclose_w + BOX_EPS)
    height_term = (g.ha - g.hb) ** 2 / (g.enclose_h * g.enclose_h + BOX_EPS)
    return _diou(g) - width_term - height_term


def _siou(g: _Geometry) -> Tensor:
    # 1 - 2 sin^2(arcsin(sin a) - pi/4) == sin(2a) == 2 |dx| |dy| / (dx^2 + dy^2)
    angle = 2.0 * F.abs(g.dx * g.dy) / (g.rho2 + BOX_EPS)
    gamma = 2.0 - angle
    rho_x = (g.dx / (g.enclose_w + BOX_EPS)) ** 2
    rho_y = (g.dy / (g.enclose_h + BOX_EPS)) ** 2
    distance = 2.0 - F.exp(-(gamma * rho_x)) - F.exp(-(gamma * rho_y))
    omega_w = F.abs(g.wa - g.wb) / (F.maximum(g.wa, g.wb) + BOX_EPS)
    omega_h = F.abs(g.ha - g.hb) / (F.maximum(g.ha, g.hb) + BOX_EPS)
    shape = (1.0 - F.exp(-omega_w)) ** SIOU_THETA + (1.0 - F.exp(-omega_h)) ** SIOU_THETA
    return g.iou - (distance + shape) * 0.5


_METRICS = {
    IoULossKind.IOU: lambda g: g.iou,
    IoULossKind.GIOU: _giou,
    IoULossKind.DIOU: _diou,
    IoULossKind.CIOU: _ciou,
    IoULossKind.EIOU: _eiou,
    IoULossKind.SIOU: _siou,
}


def box_metric(a: Tensor, b: Tensor, variant: IoULossKind | str) -> Tensor:
    """One overlap metric of ``a`` against ``b``. WIoU has no metric of its own and yields the IoU."""
    kind = IoULossKind.from_string(variant)
    return _METRICS.get(kind, _METRICS[IoULossKind.IOU])(_geometry(a, b))


class IoUMetrics(BaseModel):
    iou: float
    giou: float
    diou: float
    ciou: float
    eiou: float
    siou: float


def iou_metrics(a: BoxXYXY, b: BoxXYXY) -> IoUMetrics:
    with no_grad():
        g = _geometry(Tensor(a.as_array()), Tensor(b.as_array()))
        values = {kind.value: fn(g).item() for kind, fn in _METRICS.items()}
    return IoUMetrics(**values)


def iou_metric_arrays(a: np.ndarray, b: np.ndarray) -> dict[str, np.ndarray]:
    """Every metric for the box pairs of two [n,4] arrays."""
    with no_grad():
        g = _geometry(Tensor(a), Tensor(b))
        return {kind.value: fn(g).numpy() for kind, fn in _METRICS.items()}


class WiouState(BaseModel):
    """Running mean of the IoU loss that scales the focusing coefficient of WIoU v3."""

    running_mean: float = Field(default=1.0, gt=0.0)
    momentum: float = Field(default=0.01, gt=0.0, le=1.0)
    alpha: float = Field(default=1.9, gt=0.0)
    delta: float = Field(default=3.0, gt=0.0)

    def update(self, batch_mean: float) -> None:
        self.running_mean = (1.0 - self.momentum) * self.running_mean + self.momentum * batch_mean

    def focusing(self, iou_loss: np.ndarray) -> np.ndarray:
        """r = beta / (delta * alpha**(beta - delta)) with outlierness beta = L_iou / running mean."""
        beta = iou_loss / self.running_mean
        return beta / (self.delta * np.power(self.alpha, beta - self.delta))


def iou_loss(
    pred: Tensor, target: Tensor, variant: IoULossKind | str, state: WiouState | None = None
) -> Tensor:
    """Per-box regression loss, differentiable in ``pred``.

    ``1 - metric`` for the metric variants. WIoU v3 is ``r * exp(rho^2 / c^2) * (1 - iou)`` with
    the enclosing diagonal ``c^2`` and the focusing coefficient ``r`` detached; ``state`` is
    updated with the batch mean of ``1 - iou`` afterwards.
    """
    kind = IoULossKind.from_string(variant)
    if kind is not IoULossKind.WIOU:
        return 1.0 - box_metric(pred, target, kind)
    if state is None:
        raise MissingLossStateError(kind.value)

    g = _geometry(pred, target)
    plain = 1.0 - g.iou
    detached = F.stop_gradient(plain)
    distance = F.exp(g.rho2 / F.stop_gradient(g.diag2))
    focusing = Tensor(state.focusing(detached.data), dtype=plain.dtype)
    loss = focusing * distance * plain
    state.update(float(detached.data.mean()))
    return loss
