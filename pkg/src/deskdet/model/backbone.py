from __future__ import annotations

import numpy as np

from deskdet.constants import PyramidLevel
from deskdet.exceptions import ShapeMismatchError
from deskdet.model.config import BACKBONE_LEVELS, BackboneSpec
from deskdet.nn.blocks import C2fParams, ConvBlockParams, SPPFParams, c2f_forward, cbs_forward, sppf_forward
from deskdet.nn.module import Module
from deskdet.tensor import Tensor


class StageParams(Module):
    """Stride-2 3x3 CBS followed by a C2f with residual bottlenecks."""

    def __init__(self, c_in: int, c_out: int, repeats: int, rng: np.random.Generator) -> None:
        self.down = ConvBlockParams(c_in, c_out, rng, kernel=3, stride=2)
        self.c2f = C2fParams(c_out, c_out, rng, repeats=repeats)


class BackboneParams(Module):
    def __init__(self, spec: BackboneSpec, rng: np.random.Generator) -> None:
        self.in_channels = spec.in_channels
        self.stem = ConvBlockParams(spec.in_channels, spec.stem, rng, kernel=3, stride=2)
        self.stages: dict[str, StageParams] = {}
        c_in = spec.stem
        for level in BACKBONE_LEVELS:
            c_out = spec.width(level)
            self.stages[level.value] = StageParams(c_in, c_out, spec.depth(level), rng)
            c_in = c_out
        self.sppf = SPPFParams(c_in, c_in, rng)


def backbone_forward(x: Tensor, params: BackboneParams) -> dict[PyramidLevel, Tensor]:
    """Feature maps of every level P2..P5 for a batch [N,C,H,W]."""
    if x.ndim != 4 or x.shape[1] != params.in_channels:  # noqa: PLR2004
        msg = f"backbone expects [N,{params.in_channels},H,W] images, got {x.shape}"
        raise ShapeMismatchError(msg)
    y = cbs_forward(x, params.stem)
    taps: dict[PyramidLevel, Tensor] = {}
    for name, stage in params.stages.items():
        y = c2f_forward(cbs_forward(y, stage.down), stage.c2f, shortcut=True)
        taps[PyramidLevel(name)] = y
    taps[PyramidLevel.P5] = sppf_forward(taps[PyramidLevel.P5], params.sppf)
    return taps


def backbone_shapes(spec: BackboneSpec, input_size: int) -> list[tuple[str, tuple[int, int, int]]]:
    """Symbolic output shape of the stem and of every stage."""
    side = (input_size + 1) // 2
    shapes = [("stem", (spec.stem, side, side))]
    for level in BACKBONE_LEVELS:
        side = (side + 1) // 2
        shapes.append((f"stage_{level.value}", (spec.width(level), side, side)))
    shapes.append(("sppf", (spec.width(PyramidLevel.P5), side, side)))
    return shapes
