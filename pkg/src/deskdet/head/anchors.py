from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

from deskdet.exceptions import AnchorConfigError


class AnchorPoints(BaseModel):
    """Grid-cell centres of every scale, concatenated scale by scale in row-major order."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    strides: np.ndarray
    grids: list[int]
    scale_strides: list[int]
    input_size: int

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def grid_points(self) -> np.ndarray:
        """Centres in units of their own stride."""
        return self.points / self.strides[:, None]

    def scale_slices(self) -> list[slice]:
        slices = []
        start = 0
        for side in self.grids:
            slices.append(slice(start, start + side * side))
            start += side * side
        return slices


def make_anchor_points(input_size: int, strides: Sequence[int]) -> AnchorPoints:
    if not strides:
        msg = "at least one stride is required"
        raise AnchorConfigError(msg)
    if any(b <= a for a, b in zip(strides, strides[1:], strict=False)):
        msg = f"strides must be strictly increasing, got {list(strides)}"
        raise AnchorConfigError(msg)
    points = []
    stride_values = []
    grids = []
    for stride in strides:
        if stride <= 0 or input_size % stride:
            msg = f"stride {stride} does not divide input size {input_size}"
            raise AnchorConfigError(msg)
        side = input_size // stride
        rows, cols = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        centres = np.stack([cols.ravel() + 0.5, rows.ravel() + 0.5], axis=1) * stride
        points.append(centres)
        stride_values.append(np.full(side * side, float(stride)))
        grids.append(side)
    return AnchorPoints(
        points=np.concatenate(points).astype(np.float64),
        strides=np.concatenate(stride_values),
        grids=grids,
        scale_strides=list(strides),
        input_size=input_size,
    )
