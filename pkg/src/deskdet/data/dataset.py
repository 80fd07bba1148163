"""Dataset descriptors and split loading."""

from __future__ import annotations

import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from deskdet.constants import ImageFormat
from deskdet.exceptions import DatasetError
from deskdet.io.images import read_image_size, read_pnm, resize_nearest, to_planes
from deskdet.io.labels import load_yolo_labels
from deskdet.logging import logger
from deskdet.types import BoxXYXY, GroundTruth

DESCRIPTOR_NAME = "dataset.json"
IMAGE_SUFFIXES = {".pgm": ImageFormat.PGM, ".ppm": ImageFormat.PPM}


class ImageRecord(BaseModel):
    """One image of a split; paths are relative to the dataset root."""

    image: str
    label: str
    width: int = Field(gt=0)
    height: int = Field(gt=0)

    @property
    def stem(self) -> str:
        return Path(self.image).stem


class DatasetDescriptor(BaseModel):
    root: Path
    splits: dict[str, list[ImageRecord]] = Field(default_factory=dict)
    image_format: ImageFormat = ImageFormat.PGM
    label_convention: Literal["yolo-txt"] = "yolo-txt"

    def records(self, split: str) -> list[ImageRecord]:
        if split not in self.splits:
            msg = f"dataset at {self.root} has no split '{split}' (available: {', '.join(sorted(self.splits))})"
            raise DatasetError(msg)
        return self.splits[split]

    def check(self) -> None:
        """Every listed image and its label file must exist."""
        for split, records in self.splits.items():
            for record in records:
                if not (self.root / record.image).exists():
                    msg = f"split '{split}' lists missing image {record.image}"
                    raise DatasetError(msg)
                if not (self.root / record.label).exists():
                    msg = f"image {record.image} in split '{split}' has no label file {record.label}"
                    raise DatasetError(msg)

    def write(self) -> Path:
        path = self.root / DESCRIPTOR_NAME
        payload = self.model_dump(mode="json", exclude={"root"})
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path


def load_dataset(path: str | Path) -> DatasetDescriptor:
    """Load a dataset from its root directory or its ``dataset.json``.

    A directory without ``dataset.json`` is scanned as a YOLO export.
    """
    path = Path(path)
    descriptor_path = path / DESCRIPTOR_NAME if path.is_dir() else path
    if not descriptor_path.exists():
        if path.is_dir():
            return dataset_from_yolo_dir(path)
        msg = f"no dataset found at {path}"
        raise DatasetError(msg)
    try:
        payload = json.loads(descriptor_path.read_text())
        descriptor = DatasetDescriptor.model_validate({**payload, "root": descriptor_path.parent})
    except (json.JSONDecodeError, ValidationError) as exc:
        msg = f"malformed dataset descriptor {descriptor_path}"
        raise DatasetError(msg) from exc
    descriptor.check()
    return descriptor


def dataset_from_yolo_dir(root: str | Path) -> DatasetDescriptor:
    """Index an ``images/<split>`` + ``labels/<split>`` export of PGM/PPM files.

    Images without a label file are background images.
    """
    root = Path(root)
    images_dir = root / "images"
    if not images_dir.is_dir():
        msg = f"{root} has no images/ directory"
        raise DatasetError(msg)
    splits: dict[str, list[ImageRecord]] = {}
    formats: set[ImageFormat] = set()
    for split_dir in sorted(p for p in images_dir.iterdir() if p.is_dir()):
        records = []
        for image in sorted(split_dir.iterdir()):
            if image.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            formats.add(IMAGE_SUFFIXES[image.suffix.lower()])
            label = root / "labels" / split_dir.name / f"{image.stem}.txt"
            if not label.exists():
                logger.warning(f"{image} has no label file; treating it as background")
            width, height = read_image_size(image)
            records.append(
                ImageRecord(
                    image=str(image.relative_to(root)),
                    label=str(label.relative_to(root)),
                    width=width,
                    height=height,
                )
            )
        splits[split_dir.name] = records
    image_format = ImageFormat.PPM if ImageFormat.PPM in formats else ImageFormat.PGM
    return DatasetDescriptor(root=root, splits=splits, image_format=image_format)


class Sample(BaseModel):
    """A loaded image at model resolution with its ground truths in model pixels."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    gts: list[GroundTruth]
    stem: str
    image_id: int


def _scale_box(gt: GroundTruth, sx: float, sy: float, image_id: int) -> GroundTruth | None:
    b = gt.box
    try:
        box = BoxXYXY(x1=b.x1 * sx, y1=b.y1 * sy, x2=b.x2 * sx, y2=b.y2 * sy)
    except ValidationError:
        return None
    return GroundTruth(box=box, class_id=gt.class_id, image_id=image_id)


def load_sample(
    descriptor: DatasetDescriptor, record: ImageRecord, image_id: int, size: int, channels: int = 3
) -> Sample:
    pixels = read_pnm(descriptor.root / record.image)
    height, width = pixels.shape[:2]
    gts = load_yolo_labels(descriptor.root / record.label, width, height, image_id=image_id)
    if (height, width) != (size, size):
        pixels = resize_nearest(pixels, size, size)
        scaled = (_scale_box(gt, size / width, size / height, image_id) for gt in gts)
        gts = [gt for gt in scaled if gt is not None]
    return Sample(image=to_planes(pixels, channels), gts=gts, stem=record.stem, image_id=image_id)


def load_split(
    descriptor: DatasetDescriptor, split: str, size: int, channels: int = 3, workers: int = 1
) -> list[Sample]:
    """Load every image of ``split``; image ids are the record positions, whatever the thread count."""
    records = descriptor.records(split)
    if not records:
        logger.warning(f"split '{split}' of {descriptor.root} is empty")
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        samples = list(
            pool.map(lambda item: load_sample(descriptor, item[1], item[0], size, channels), enumerate(records))
        )
    logger.debug(f"loaded {len(samples)} images from split '{split}'")
    return samples


def stack_batch(
    samples: Sequence[Sample], dtype: np.dtype | None = None
) -> tuple[np.ndarray, list[list[GroundTruth]]]:
    images = np.stack([s.image for s in samples])
    if dtype is not None:
        images = images.astype(dtype)
    return images, [s.gts for s in samples]
