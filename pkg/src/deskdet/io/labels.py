"""YOLO text labels: one ``class cx cy w h`` line per object, normalised to [0, 1]."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from deskdet.exceptions import LabelFormatError
from deskdet.types import BoxXYXY, GroundTruth

LABEL_COLUMNS = 5


def parse_label_line(line: str, path: str | Path, line_no: int) -> tuple[int, float, float, float, float]:
    parts = line.split()
    if len(parts) != LABEL_COLUMNS:
        raise LabelFormatError(path, line_no, f"expected {LABEL_COLUMNS} columns, got {len(parts)}")
    try:
        class_id = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise LabelFormatError(path, line_no, f"non-numeric field in {line.strip()!r}") from exc
    if class_id < 0:
        raise LabelFormatError(path, line_no, f"negative class id {class_id}")
    for name, value in (("cx", cx), ("cy", cy), ("w", w), ("h", h)):
        if not 0.0 <= value <= 1.0:
            raise LabelFormatError(path, line_no, f"{name}={value} is outside [0, 1]")
    if w == 0.0 or h == 0.0:
        raise LabelFormatError(path, line_no, "box has zero width or height")
    return class_id, cx, cy, w, h


def load_yolo_labels(path: str | Path, image_w: int, image_h: int, image_id: int = 0) -> list[GroundTruth]:
    """Read a label file into pixel-space ground truths. A missing or empty file has no objects."""
    path = Path(path)
    if not path.exists():
        return []
    gts = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        class_id, cx, cy, w, h = parse_label_line(line, path, line_no)
        try:
            box = BoxXYXY.from_cxcywh(cx * image_w, cy * image_h, w * image_w, h * image_h)
        except ValidationError as exc:
            raise LabelFormatError(path, line_no, "box is degenerate at this image size") from exc
        gts.append(GroundTruth(box=box, class_id=class_id, image_id=image_id))
    return gts


def format_label_line(gt: GroundTruth, image_w: int, image_h: int) -> str:
    box = gt.box
    cx = (box.x1 + box.x2) / 2 / image_w
    cy = (box.y1 + box.y2) / 2 / image_h
    return f"{gt.class_id} {cx:.6f} {cy:.6f} {box.width / image_w:.6f} {box.height / image_h:.6f}"


def write_yolo_labels(path: str | Path, gts: Sequence[GroundTruth], image_w: int, image_h: int) -> None:
    lines = [format_label_line(gt, image_w, image_h) for gt in gts]
    Path(path).write_text("".join(f"{line}\n" for line in lines))
