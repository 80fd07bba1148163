"""Backbone, neck and decoupled head assembled from a ModelConfig."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np

from deskdet.constants import MAX_DETECTIONS, NMS_IOU_THRESHOLD, PREDICT_CONF_THRESHOLD, IoULossKind
from deskdet.exceptions import CheckpointFormatError
from deskdet.head.anchors import AnchorPoints, make_anchor_points
from deskdet.head.assigner import Assignment, assign_targets
from deskdet.head.decode import decode_boxes, dfl_decode
from deskdet.head.head import DetectionHeadParams, HeadOutput, head_forward
from deskdet.head.nms import nms
from deskdet.io.checkpoint import Checkpoint, load_checkpoint
from deskdet.losses.detection import LossBreakdown, detection_loss
from deskdet.losses.iou import WiouState
from deskdet.model.backbone import BackboneParams, backbone_forward
from deskdet.model.config import ModelConfig
from deskdet.neck.executor import NeckExecutor, build_neck
from deskdet.nn.module import Module
from deskdet.tensor import Tensor, no_grad
from deskdet.types import Detection, GroundTruth

MODEL_PREFIX = "model."


class Detector(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None) -> None:
        rng = rng if rng is not None else np.random.default_rng(0)
        self._config = config
        self.backbone = BackboneParams(config.backbone, rng)
        graph = config.neck_graph()
        self.neck: NeckExecutor = build_neck(
            graph, config.channel_plan(), input_size=config.input_size, attention=config.attention, rng=rng
        )
        levels = config.output_levels
        self._levels = levels
        channels = [self.neck.shapes[graph.outputs[level]][0] for level in levels]
        self.head = DetectionHeadParams(
            channels,
            config.strides,
            config.head.num_classes,
            config.input_size,
            rng,
            reg_max=config.head.reg_max,
            reg_width=config.head.reg_width,
            cls_width=config.head.cls_width,
        )
        self._anchors = make_anchor_points(config.input_size, config.strides)

    @property
    def config(self) -> ModelConfig:
        return self._config

    @property
    def anchors(self) -> AnchorPoints:
        return self._anchors

    def forward(self, images: Tensor | np.ndarray) -> HeadOutput:
        x = images if isinstance(images, Tensor) else Tensor(images)
        features = self.neck.forward(backbone_forward(x, self.backbone))
        return head_forward([features[level] for level in self._levels], self.head)

    def pixel_boxes(self, head_out: HeadOutput) -> np.ndarray:
        """Decoded boxes [N,A,4] in pixels, without clipping."""
        distances = dfl_decode(head_out.reg_logits.data).data * self._anchors.strides[None, :, None]
        centres = self._anchors.points[None]
        return np.concatenate([centres - distances[..., :2], centres + distances[..., 2:]], axis=-1)

    def assign(self, head_out: HeadOutput, gts: Sequence[Sequence[GroundTruth]]) -> list[Assignment]:
        spec = self._config.loss
        scores = 1.0 / (1.0 + np.exp(-np.clip(head_out.cls.data, -500.0, 500.0)))
        boxes = self.pixel_boxes(head_out)
        return [
            assign_targets(
                self._anchors,
                image_gts,
                scores[i],
                boxes[i],
                top_k=spec.top_k,
                alpha=spec.align_alpha,
                beta=spec.align_beta,
            )
            for i, image_gts in enumerate(gts)
        ]

    def new_wiou_state(self) -> WiouState | None:
        spec = self._config.loss
        if spec.reg_variant is not IoULossKind.WIOU:
            return None
        return WiouState(momentum=spec.wiou_momentum, alpha=spec.wiou_alpha, delta=spec.wiou_delta)

    def loss(
        self,
        images: Tensor | np.ndarray,
        gts: Sequence[Sequence[GroundTruth]],
        wiou_state: WiouState | None = None,
    ) -> tuple[Tensor, LossBreakdown]:
        head_out = self.forward(images)
        spec = self._config.loss
        return detection_loss(
            head_out,
            self.assign(head_out, gts),
            self._anchors,
            weights=spec.weights,
            reg_variant=spec.reg_variant,
            cls_kind=spec.cls_kind,
            wiou_state=wiou_state,
        )

    def predict(
        self,
        images: Tensor | np.ndarray,
        conf_thresh: float = PREDICT_CONF_THRESHOLD,
        iou_thresh: float = NMS_IOU_THRESHOLD,
        max_det: int = MAX_DETECTIONS,
        image_ids: Sequence[int] | None = None,
    ) -> list[list[Detection]]:
        """Decoded, class-wise suppressed detections per image, in inference mode."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                head_out = self.forward(images)
        finally:
            self.train(was_training)
        ids = list(image_ids) if image_ids is not None else list(range(head_out.cls.shape[0]))
        return [
            nms(
                decode_boxes(head_out.reg.data[i], head_out.cls.data[i], self._anchors, conf_thresh, ids[i]),
                iou_thresh,
                max_det,
            )
            for i in range(head_out.cls.shape[0])
        ]

    def model_state(self) -> dict[str, np.ndarray]:
        return {f"{MODEL_PREFIX}{name}": value for name, value in self.state_dict().items()}

    def load_model_state(self, tensors: dict[str, np.ndarray]) -> None:
        own = {name[len(MODEL_PREFIX) :]: value for name, value in tensors.items() if name.startswith(MODEL_PREFIX)}
        self.load_state_dict(own)


def detector_from_checkpoint(checkpoint: Checkpoint) -> Detector:
    detector = Detector(ModelConfig.model_validate(checkpoint.model))
    detector.load_model_state(checkpoint.tensors)
    return detector.eval()


def load_detector(path: str | Path) -> Detector:
    checkpoint = load_checkpoint(path)
    if not checkpoint.model:
        msg = f"{path}: checkpoint carries no model config"
        raise CheckpointFormatError(msg)
    return detector_from_checkpoint(checkpoint)
