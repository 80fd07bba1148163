from __future__ import annotations

import math

from pydantic import BaseModel, Field

from deskdet.constants import EVAL_CONF_THRESHOLD, NMS_IOU_THRESHOLD, Precision


class TrainConfig(BaseModel):
    """SGD schedule and run settings. ``steps`` overrides ``epochs`` when set."""

    lr0: float = Field(default=0.01, gt=0.0)
    lr_final: float = Field(default=0.01, ge=0.0)
    momentum: float = Field(default=0.937, ge=0.0, lt=1.0)
    nesterov: bool = True
    weight_decay: float = Field(default=5e-4, ge=0.0)
    batch: int = Field(default=5, ge=1)
    epochs: int = Field(default=120, ge=1)
    steps: int | None = Field(default=None, ge=0)
    seed: int = 0
    precision: Precision = Precision.FLOAT32
    log_every: int = Field(default=10, ge=1)
    train_split: str = "train"
    val_split: str = "val"
    eval_conf: float = Field(default=EVAL_CONF_THRESHOLD, ge=0.0, le=1.0)
    eval_nms_iou: float = Field(default=NMS_IOU_THRESHOLD, gt=0.0, le=1.0)

    def total_steps(self, num_images: int) -> int:
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(num_images / self.batch)
