from __future__ import annotations

import numpy as np

from deskdet.exceptions import DflTargetRangeError
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


def dfl_loss(reg_logits: Tensor, target: np.ndarray) -> Tensor:
    """Distribution focal loss, averaged over the four sides.

    Args:
        reg_logits: Logits [..., 4, reg_max + 1]
        target: Target distances [..., 4] in bin units, within [0, reg_max]

    With ``i = min(floor(y), reg_max - 1)`` the loss per side is
    ``-((i + 1 - y) * log p_i + (y - i) * log p_{i+1})``.

    """
    reg_max = reg_logits.shape[-1] - 1
    y = np.asarray(target, dtype=reg_logits.dtype)
    if y.size and (y.min() < 0 or y.max() > reg_max):
        raise DflTargetRangeError(float(y.min()), float(y.max()), reg_max)
    left = np.minimum(np.floor(y), reg_max - 1).astype(np.int64)
    weight_left = Tensor(left + 1 - y)
    weight_right = Tensor(y - left)

    log_p = F.log_softmax(reg_logits, axis=-1)
    log_left = F.take_along_axis(log_p, left[..., None], axis=-1).reshape(*y.shape)
    log_right = F.take_along_axis(log_p, left[..., None] + 1, axis=-1).reshape(*y.shape)
    per_side = -(weight_left * log_left + weight_right * log_right)
    return per_side.mean(axis=-1)
