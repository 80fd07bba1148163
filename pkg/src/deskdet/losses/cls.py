from __future__ import annotations

import numpy as np

from deskdet.constants import ClsLossKind
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F

VARIFOCAL_ALPHA = 0.75
VARIFOCAL_GAMMA = 2.0


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise softplus(x) - x * t."""
    t = Tensor(np.asarray(targets, dtype=logits.dtype))
    return F.softplus(logits) - logits * t


def cls_loss(
    logits: Tensor,
    targets: np.ndarray,
    kind: ClsLossKind | str = ClsLossKind.BCE,
    alpha: float = VARIFOCAL_ALPHA,
    gamma: float = VARIFOCAL_GAMMA,
) -> Tensor:
    """Summed classification loss.

    Varifocal weights positives (target q > 0) by q and negatives by ``alpha * p**gamma``
    with ``p = sigmoid(logit)``.
    """
    kind = ClsLossKind.from_string(kind)
    bce = bce_with_logits(logits, targets)
    if kind is ClsLossKind.BCE:
        return bce.sum()
    q = np.asarray(targets, dtype=logits.dtype)
    positive = (q > 0).astype(logits.dtype)
    weight = alpha * F.sigmoid(logits) ** gamma * Tensor(1.0 - positive) + Tensor(q * positive)
    return (bce * weight).sum()
