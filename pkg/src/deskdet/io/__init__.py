from deskdet.io.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from deskdet.io.detections import (
    read_detection_dir,
    read_detections,
    write_detection_dir,
    write_detections,
)
from deskdet.io.images import load_image, read_image_size, read_pnm, resize_nearest, write_pnm
from deskdet.io.labels import load_yolo_labels, write_yolo_labels

__all__ = [
    "Checkpoint",
    "load_checkpoint",
    "load_image",
    "load_yolo_labels",
    "read_detection_dir",
    "read_detections",
    "read_image_size",
    "read_pnm",
    "resize_nearest",
    "save_checkpoint",
    "write_detection_dir",
    "write_detections",
    "write_pnm",
    "write_yolo_labels",
]
