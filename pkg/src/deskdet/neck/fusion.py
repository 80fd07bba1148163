from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from deskdet.constants import FUSION_EPS
from deskdet.exceptions import ShapeMismatchError
from deskdet.nn.module import Module, parameter
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


def fuse_concat(inputs: Sequence[Tensor]) -> Tensor:
    """Concatenate along channels in the given order. A single input passes through."""
    if not inputs:
        msg = "fuse_concat needs at least one input"
        raise ShapeMismatchError(msg)
    if len(inputs) == 1:
        return inputs[0]
    first = inputs[0].shape
    for x in inputs[1:]:
        if x.shape[0] != first[0] or x.shape[2:] != first[2:]:
            msg = f"fuse_concat inputs disagree on N,H,W: {first} vs {x.shape}"
            raise ShapeMismatchError(msg)
    return F.concat(list(inputs), axis=1)


class FusionNodeParams(Module):
    """Learnable fusion weights, initialised to one per input."""

    def __init__(self, num_inputs: int, eps: float = FUSION_EPS) -> None:
        if eps <= 0:
            msg = f"fusion eps must be positive, got {eps}"
            raise ValueError(msg)
        self.weights = parameter(np.ones(num_inputs))
        self.eps = eps

    def normalized(self) -> np.ndarray:
        w = np.maximum(self.weights.data, 0.0)
        return w / (w.sum() + self.eps)


def fuse_weighted(inputs: Sequence[Tensor], params: FusionNodeParams) -> Tensor:
    """Fast normalized fusion: sum_i relu(w_i) / (sum_j relu(w_j) + eps) * x_i."""
    if len(inputs) != params.weights.size:
        msg = f"fusion node has {params.weights.size} weights but got {len(inputs)} inputs"
        raise ShapeMismatchError(msg)
    first = inputs[0].shape
    for x in inputs[1:]:
        if x.shape != first:
            msg = f"fuse_weighted inputs must share a shape: {first} vs {x.shape}"
            raise ShapeMismatchError(msg)
    w = F.relu(params.weights)
    norm = w / (w.sum() + params.eps)
    out = inputs[0] * norm[0]
    for i, x in enumerate(inputs[1:], start=1):
        out = out + x * norm[i]
    return out
