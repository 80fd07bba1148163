"""Decoupled anchor-free head: one regression and one classification branch per scale."""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from deskdet.constants import DEFAULT_REG_MAX
from deskdet.exceptions import AnchorConfigError, BlockConfigError, ShapeMismatchError
from deskdet.nn.blocks import ConvBlockParams, ConvParams, cbs_forward, conv_forward
from deskdet.nn.module import Module
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


class ScaleBranchParams(Module):
    def __init__(
        self,
        c_in: int,
        reg_width: int,
        cls_width: int,
        reg_max: int,
        num_classes: int,
        stride: int,
        input_size: int,
        rng: np.random.Generator,
    ) -> None:
        self.reg = [
            ConvBlockParams(c_in, reg_width, rng, kernel=3),
            ConvBlockParams(reg_width, reg_width, rng, kernel=3),
        ]
        self.reg_out = ConvParams(reg_width, 4 * (reg_max + 1), rng, bias_init=1.0)
        self.cls = [
            ConvBlockParams(c_in, cls_width, rng, kernel=3),
            ConvBlockParams(cls_width, cls_width, rng, kernel=3),
        ]
        # prior of about five objects per image spread over the grid
        prior = math.log(5 / num_classes / (input_size / stride) ** 2)
        self.cls_out = ConvParams(cls_width, num_classes, rng, bias_init=prior)


class DetectionHeadParams(Module):
    def __init__(
        self,
        channels: Sequence[int],
        strides: Sequence[int],
        num_classes: int,
        input_size: int,
        rng: np.random.Generator,
        reg_max: int = DEFAULT_REG_MAX,
        reg_width: int | None = None,
        cls_width: int | None = None,
    ) -> None:
        if len(channels) != len(strides):
            msg = f"{len(channels)} feature widths for {len(strides)} strides"
            raise BlockConfigError(msg)
        if any(b <= a for a, b in zip(strides, strides[1:], strict=False)):
            msg = f"head strides must be strictly increasing, got {list(strides)}"
            raise AnchorConfigError(msg)
        if reg_max < 1 or num_classes < 1:
            msg = f"reg_max and num_classes must be >= 1, got {reg_max} and {num_classes}"
            raise BlockConfigError(msg)
        c0 = channels[0]
        reg_width = reg_width or max(16, c0 // 4, 4 * reg_max)
        cls_width = cls_width or max(c0, min(num_classes, 100))
        self.branches = [
            ScaleBranchParams(c, reg_width, cls_width, reg_max, num_classes, s, input_size, rng)
            for c, s in zip(channels, strides, strict=True)
        ]
        self.strides = list(strides)
        self.reg_max = reg_max
        self.num_classes = num_classes
        self.input_size = input_size


class HeadOutput(BaseModel):
    """Raw head logits for all anchors: ``reg`` [N,A,4*(reg_max+1)] and ``cls`` [N,A,num_classes]."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    reg: Tensor
    cls: Tensor
    grids: list[int]
    reg_max: int

    @property
    def reg_logits(self) -> Tensor:
        n, a, _ = self.reg.shape
        return self.reg.reshape(n, a, 4, self.reg_max + 1)


def _flatten(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    return x.reshape(n, c, h * w).transpose(0, 2, 1)


def head_forward(features: Sequence[Tensor], params: DetectionHeadParams) -> HeadOutput:
    """Run every scale branch; ``features`` are ordered like ``params.strides``."""
    if len(features) != len(params.branches):
        msg = f"head has {len(params.branches)} scales but got {len(features)} feature maps"
        raise ShapeMismatchError(msg)
    reg_parts = []
    cls_parts = []
    grids = []
    for x, branch in zip(features, params.branches, strict=True):
        reg = x
        for block in branch.reg:
            reg = cbs_forward(reg, block)
        cls = x
        for block in branch.cls:
            cls = cbs_forward(cls, block)
        reg_parts.append(_flatten(conv_forward(reg, branch.reg_out)))
        cls_parts.append(_flatten(conv_forward(cls, branch.cls_out)))
        grids.append(x.shape[2])
    return HeadOutput(
        reg=F.concat(reg_parts, axis=1),
        cls=F.concat(cls_parts, axis=1),
        grids=grids,
        reg_max=params.reg_max,
    )
