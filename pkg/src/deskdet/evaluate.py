"""Evaluation of a detector, or of precomputed detection files, against a dataset split."""

from __future__ import annotations

from pathlib import Path

from pydantic import BaseModel

from deskdet.constants import COCO_IOU_THRESHOLDS, EVAL_CONF_THRESHOLD, MAX_DETECTIONS, NMS_IOU_THRESHOLD
from deskdet.data.dataset import DatasetDescriptor, load_split, stack_batch
from deskdet.io.detections import read_detection_dir
from deskdet.io.labels import load_yolo_labels
from deskdet.logging import log_duration, logger
from deskdet.metrics.summary import MetricsReport, map_summary
from deskdet.model.detector import Detector
from deskdet.tensor import default_dtype
from deskdet.types import BoxXYXY, Detection, GroundTruth

EVAL_BATCH = 8


class SplitPredictions(BaseModel):
    """Detections and ground truths of one split; image ids are record positions."""

    stems: list[str]
    detections: list[list[Detection]]
    ground_truths: list[GroundTruth]

    @property
    def flat_detections(self) -> list[Detection]:
        return [det for image in self.detections for det in image]


def predict_split(
    detector: Detector,
    dataset: DatasetDescriptor,
    split: str,
    conf_thresh: float = EVAL_CONF_THRESHOLD,
    iou_thresh: float = NMS_IOU_THRESHOLD,
    max_det: int = MAX_DETECTIONS,
    batch: int = EVAL_BATCH,
    workers: int = 1,
) -> SplitPredictions:
    """Run ``detector`` over every image of ``split`` at model resolution."""
    config = detector.config
    dtype = detector.head.branches[0].cls_out.weight.dtype
    samples = load_split(dataset, split, size=config.input_size, channels=config.backbone.in_channels, workers=workers)
    detections: list[list[Detection]] = []
    with default_dtype(dtype), log_duration(f"prediction on split '{split}'"):
        for start in range(0, len(samples), batch):
            chunk = samples[start : start + batch]
            images, _ = stack_batch(chunk, dtype)
            detections.extend(
                detector.predict(images, conf_thresh, iou_thresh, max_det, image_ids=[s.image_id for s in chunk])
            )
    logger.info(f"predicted {sum(map(len, detections))} boxes on {len(samples)} images of split '{split}'")
    return SplitPredictions(
        stems=[s.stem for s in samples],
        detections=detections,
        ground_truths=[gt for s in samples for gt in s.gts],
    )


def evaluate_detector(
    detector: Detector,
    dataset: DatasetDescriptor,
    split: str,
    conf_thresh: float = EVAL_CONF_THRESHOLD,
    iou_thresh: float = NMS_IOU_THRESHOLD,
    workers: int = 1,
) -> MetricsReport:
    predictions = predict_split(detector, dataset, split, conf_thresh, iou_thresh, workers=workers)
    return map_summary(predictions.flat_detections, predictions.ground_truths, COCO_IOU_THRESHOLDS, workers=workers)


def split_ground_truths(dataset: DatasetDescriptor, split: str) -> tuple[list[str], list[GroundTruth]]:
    """Ground truths at each image's native resolution; image ids are record positions."""
    records = dataset.records(split)
    gts = []
    for image_id, record in enumerate(records):
        gts.extend(load_yolo_labels(dataset.root / record.label, record.width, record.height, image_id=image_id))
    return [record.stem for record in records], gts


def evaluate_detection_dir(
    detections_dir: str | Path, dataset: DatasetDescriptor, split: str, workers: int = 1
) -> MetricsReport:
    """Score one ``<stem>.txt`` detection file per image of ``split``; missing files mean no detections."""
    stems, gts = split_ground_truths(dataset, split)
    detections = read_detection_dir(detections_dir, stems)
    return map_summary(detections, gts, COCO_IOU_THRESHOLDS, workers=workers)


def to_native(detections: list[Detection], size: int, width: int, height: int) -> list[Detection]:
    """Map detections from model pixels (size x size) back to an image of width x height."""
    if (width, height) == (size, size):
        return detections
    sx, sy = width / size, height / size
    return [
        det.model_copy(
            update={
                "box": BoxXYXY(x1=det.box.x1 * sx, y1=det.box.y1 * sy, x2=det.box.x2 * sx, y2=det.box.y2 * sy)
            }
        )
        for det in detections
    ]
