"""Detection files: one ``class score x1 y1 x2 y2`` line per box, pixels, six decimals."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from deskdet.exceptions import DetectionFormatError
from deskdet.types import BoxXYXY, Detection

DETECTION_COLUMNS = 6


def format_detection(det: Detection) -> str:
    b = det.box
    return f"{det.class_id} {det.score:.6f} {b.x1:.6f} {b.y1:.6f} {b.x2:.6f} {b.y2:.6f}"


def write_detections(path: str | Path, dets: Sequence[Detection]) -> None:
    Path(path).write_text("".join(f"{format_detection(d)}\n" for d in dets))


def read_detections(path: str | Path, image_id: int = 0) -> list[Detection]:
    path = Path(path)
    dets = []
    for line_no, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != DETECTION_COLUMNS:
            raise DetectionFormatError(path, line_no, f"expected {DETECTION_COLUMNS} columns, got {len(parts)}")
        try:
            class_id = int(parts[0])
            score, x1, y1, x2, y2 = (float(p) for p in parts[1:])
            dets.append(
                Detection(
                    box=BoxXYXY(x1=x1, y1=y1, x2=x2, y2=y2),
                    score=score,
                    class_id=class_id,
                    image_id=image_id,
                )
            )
        except (ValueError, ValidationError) as exc:
            raise DetectionFormatError(path, line_no, f"invalid detection {line.strip()!r}") from exc
    return dets


def write_detection_dir(root: str | Path, stems: Sequence[str], per_image: Sequence[Sequence[Detection]]) -> None:
    """One ``<stem>.txt`` file per image, empty when the image has no detections."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for stem, dets in zip(stems, per_image, strict=True):
        write_detections(root / f"{stem}.txt", dets)


def read_detection_dir(root: str | Path, stems: Sequence[str]) -> list[Detection]:
    """Detections for the given image stems; image ids follow the order of ``stems``."""
    root = Path(root)
    dets: list[Detection] = []
    for image_id, stem in enumerate(stems):
        path = root / f"{stem}.txt"
        if path.exists():
            dets.extend(read_detections(path, image_id=image_id))
    return dets
