from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class BoxXYXY(BaseModel):
    model_config = ConfigDict(frozen=True)

    x1: float
    y1: float
    x2: float
    y2: float

    @model_validator(mode="after")
    def reject_degenerate(self) -> BoxXYXY:
        """Boxes need positive width and height."""
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            msg = f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            raise ValueError(msg)
        return self

    @classmethod
    def from_cxcywh(cls, cx: float, cy: float, w: float, h: float) -> BoxXYXY:
        return cls(x1=cx - w / 2, y1=cy - h / 2, x2=cx + w / 2, y2=cy + h / 2)

    @classmethod
    def from_array(cls, values: np.ndarray | list[float] | tuple[float, ...]) -> BoxXYXY:
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1=x1, y1=y1, x2=x2, y2=y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.y1, self.x2, self.y2], dtype=np.float64)


class GroundTruth(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: BoxXYXY
    class_id: int = Field(ge=0)
    image_id: int = Field(default=0, ge=0)


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    box: BoxXYXY
    score: float = Field(ge=0.0, le=1.0)
    class_id: int = Field(ge=0)
    image_id: int = Field(default=0, ge=0)


def boxes_array(items: Sequence[Detection] | Sequence[GroundTruth]) -> np.ndarray:
    """Stack the boxes of detections or ground truths into an [n, 4] array."""
    if not items:
        return np.zeros((0, 4))
    return np.stack([item.box.as_array() for item in items])


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU of every box in ``a`` [n,4] against every box in ``b`` [m,4], as an [n,m] array."""
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
