"""Toy training loop: SGD over a dataset split with a per-step CSV loss log and resumable checkpoints."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from deskdet.data.dataset import DatasetDescriptor, Sample, load_split, stack_batch
from deskdet.exceptions import CheckpointMismatchError, DatasetError, NonFiniteLossError
from deskdet.io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from deskdet.logging import log_duration, logger
from deskdet.losses.detection import LossBreakdown
from deskdet.losses.iou import WiouState
from deskdet.model.config import ModelConfig
from deskdet.model.detector import Detector
from deskdet.tensor import default_dtype
from deskdet.training.config import TrainConfig
from deskdet.training.optim import SGD, linear_lr

CHECKPOINT_NAME = "last.ckpt"
LOSS_LOG_NAME = "loss_log.csv"
LOG_COLUMNS = ("step", "lr", "box", "cls", "dfl", "total", "num_pos")


class TrainResult(BaseModel):
    checkpoint: Path
    loss_log: Path
    steps: int
    losses: list[LossBreakdown]


def batch_indices(step: int, num_images: int, batch: int, seed: int) -> np.ndarray:
    """Images of ``step``: epoch-wise permutations keyed by (seed, epoch), so a resumed run sees the same order."""
    per_epoch = math.ceil(num_images / batch)
    epoch, position = divmod(step, per_epoch)
    order = np.random.default_rng([seed, epoch]).permutation(num_images)
    return order[position * batch : (position + 1) * batch]


def _train_state(train_cfg: TrainConfig, wiou_state: WiouState | None) -> dict[str, Any]:
    state: dict[str, Any] = {"config": train_cfg.model_dump(mode="json")}
    if wiou_state is not None:
        state["wiou_running_mean"] = wiou_state.running_mean
    return state


def _resume(
    path: Path, model_cfg: ModelConfig, train_cfg: TrainConfig, detector: Detector, optimizer: SGD
) -> tuple[int, float | None]:
    checkpoint = load_checkpoint(path)
    if checkpoint.model != model_cfg.model_dump(mode="json"):
        raise CheckpointMismatchError("model config")
    saved = (checkpoint.train or {}).get("config", {})
    if saved.get("precision", train_cfg.precision.value) != train_cfg.precision.value:
        raise CheckpointMismatchError("precision")
    detector.load_model_state(checkpoint.tensors)
    optimizer.load_state_dict(checkpoint.tensors)
    logger.info(f"resumed from {path} at step {checkpoint.step}")
    return checkpoint.step, (checkpoint.train or {}).get("wiou_running_mean")


def train_toy(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    dataset: DatasetDescriptor,
    out_dir: str | Path,
    resume: str | Path | None = None,
    workers: int = 1,
) -> TrainResult:
    """Train ``model_cfg`` on the train split and write ``last.ckpt`` and ``loss_log.csv`` to ``out_dir``.

    Args:
        model_cfg: Model to build
        train_cfg: Optimiser, schedule and precision
        dataset: Dataset holding ``train_cfg.train_split``
        out_dir: Output directory
        resume: Checkpoint to continue from; its model config must match ``model_cfg``
        workers: Threads for image loading

    Raises:
        NonFiniteLossError: A loss component became NaN or Inf; the step is reported.
        CheckpointMismatchError: ``resume`` was written for another model or precision.

    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dtype = train_cfg.precision.dtype

    with default_dtype(dtype), log_duration("training"):
        detector = Detector(model_cfg, np.random.default_rng(train_cfg.seed)).train()
        optimizer = SGD(
            detector.named_parameters(),
            momentum=train_cfg.momentum,
            nesterov=train_cfg.nesterov,
            weight_decay=train_cfg.weight_decay,
        )
        wiou_state = detector.new_wiou_state()
        start = 0
        if resume is not None:
            start, running_mean = _resume(Path(resume), model_cfg, train_cfg, detector, optimizer)
            if wiou_state is not None and running_mean is not None:
                wiou_state.running_mean = running_mean

        samples: list[Sample] = load_split(
            dataset,
            train_cfg.train_split,
            size=model_cfg.input_size,
            channels=model_cfg.backbone.in_channels,
            workers=workers,
        )
        if not samples:
            msg = f"split '{train_cfg.train_split}' has no images to train on"
            raise DatasetError(msg)
        total = train_cfg.total_steps(len(samples))
        logger.info(f"training {detector.num_parameters()} parameters for {total - start} steps")

        log_path = out_dir / LOSS_LOG_NAME
        losses: list[LossBreakdown] = []
        with log_path.open("a" if start else "w", newline="") as handle:
            writer = csv.writer(handle)
            if not start:
                writer.writerow(LOG_COLUMNS)
            for step in range(start, total):
                batch = [samples[i] for i in batch_indices(step, len(samples), train_cfg.batch, train_cfg.seed)]
                images, gts = stack_batch(batch, dtype)
                lr = linear_lr(step, total, train_cfg.lr0, train_cfg.lr_final)
                detector.zero_grad()
                try:
                    loss, breakdown = detector.loss(images, gts, wiou_state)
                except NonFiniteLossError as exc:
                    raise NonFiniteLossError(exc.component, step) from exc
                loss.backward()
                optimizer.step(lr)
                losses.append(breakdown)
                writer.writerow(
                    (
                        step,
                        repr(lr),
                        repr(breakdown.box),
                        repr(breakdown.cls),
                        repr(breakdown.dfl),
                        repr(breakdown.total),
                        breakdown.num_pos,
                    )
                )
                if (step + 1) % train_cfg.log_every == 0 or step + 1 == total:
                    logger.info(f"step {step + 1}/{total} loss {breakdown.total:.4f} positives {breakdown.num_pos}")

        checkpoint = Checkpoint(
            model=model_cfg.model_dump(mode="json"),
            train=_train_state(train_cfg, wiou_state),
            step=max(total, start),
            tensors={**detector.model_state(), **optimizer.state_dict()},
        )
        checkpoint_path = out_dir / CHECKPOINT_NAME
        save_checkpoint(checkpoint_path, checkpoint)
    return TrainResult(checkpoint=checkpoint_path, loss_log=log_path, steps=total - start, losses=losses)
