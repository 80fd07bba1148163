"""Deterministic synthetic detection data: bright elliptical blobs on a noisy background."""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from deskdet.data.dataset import DESCRIPTOR_NAME, DatasetDescriptor, ImageRecord
from deskdet.exceptions import DatasetError
from deskdet.io.images import write_pnm
from deskdet.io.labels import write_yolo_labels
from deskdet.logging import logger
from deskdet.types import BoxXYXY, GroundTruth

BLOB_GAP = 2
PLACEMENT_ATTEMPTS = 50


class SyntheticSpec(BaseModel):
    """Generator settings. Intensities are fractions of full scale."""

    image_size: int = Field(default=128, ge=8)
    objects_min: int = Field(default=1, ge=0)
    objects_max: int = Field(default=3, ge=0)
    radius_min: float = Field(default=6.0, ge=2.0)
    radius_max: float = Field(default=18.0, ge=2.0)
    intensity_min: float = Field(default=0.6, ge=0.0, le=1.0)
    intensity_max: float = Field(default=0.95, ge=0.0, le=1.0)
    background: float = Field(default=0.15, ge=0.0, le=1.0)
    noise: float = Field(default=0.04, ge=0.0)
    num_classes: int = Field(default=1, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_ranges(self) -> SyntheticSpec:
        if self.objects_max < self.objects_min:
            msg = "objects_max must be >= objects_min"
            raise ValueError(msg)
        if self.radius_max < self.radius_min or 2 * self.radius_max + 2 * BLOB_GAP >= self.image_size:
            msg = "radius range must be ordered and blobs must fit in the image"
            raise ValueError(msg)
        if self.intensity_min <= self.background or self.intensity_max < self.intensity_min:
            msg = "blob intensities must be ordered and brighter than the background"
            raise ValueError(msg)
        return self


class SyntheticImage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    pixels: np.ndarray
    gts: list[GroundTruth]


def image_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(split.encode("utf-8")), index])


def _overlaps(box: tuple[int, int, int, int], placed: list[tuple[int, int, int, int]]) -> bool:
    x1, y1, x2, y2 = box
    return any(
        x1 < px2 + BLOB_GAP and px1 < x2 + BLOB_GAP and y1 < py2 + BLOB_GAP and py1 < y2 + BLOB_GAP
        for px1, py1, px2, py2 in placed
    )


def render_image(spec: SyntheticSpec, rng: np.random.Generator, image_id: int = 0) -> SyntheticImage:
    """Draw one image; each label is the tight pixel bounding box of its blob mask."""
    size = spec.image_size
    values = np.full((size, size), spec.background)
    if spec.noise > 0:
        values = values + rng.normal(0.0, spec.noise, size=(size, size))
    ys, xs = np.mgrid[0:size, 0:size] + 0.5

    placed: list[tuple[int, int, int, int]] = []
    gts: list[GroundTruth] = []
    for _ in range(int(rng.integers(spec.objects_min, spec.objects_max + 1))):
        for _ in range(PLACEMENT_ATTEMPTS):
            ax, ay = rng.uniform(spec.radius_min, spec.radius_max, size=2)
            cx = rng.uniform(ax + BLOB_GAP, size - ax - BLOB_GAP)
            cy = rng.uniform(ay + BLOB_GAP, size - ay - BLOB_GAP)
            intensity = rng.uniform(spec.intensity_min, spec.intensity_max)
            class_id = int(rng.integers(0, spec.num_classes))
            mask = ((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2 <= 1.0
            if not mask.any():
                continue
            rows = np.flatnonzero(mask.any(axis=1))
            cols = np.flatnonzero(mask.any(axis=0))
            box = (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)
            if _overlaps(box, placed):
                continue
            placed.append(box)
            values = np.where(mask, intensity + (values - spec.background), values)
            gts.append(
                GroundTruth(
                    box=BoxXYXY(x1=box[0], y1=box[1], x2=box[2], y2=box[3]),
                    class_id=class_id,
                    image_id=image_id,
                )
            )
            break
    pixels = np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)
    return SyntheticImage(pixels=pixels, gts=gts)


def gen_synthetic(spec: SyntheticSpec, n: int, root: str | Path, split: str = "train") -> DatasetDescriptor:
    """Write ``n`` images and labels of ``split`` under ``root`` and record them in ``dataset.json``.

    Image i is a pure function of (spec, split, i), so reruns are byte-identical.
    """
    root = Path(root)
    image_dir = root / "images" / split
    label_dir = root / "labels" / split
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
        label_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        msg = f"cannot create dataset directories under {root}: {exc.strerror}"
        raise DatasetError(msg) from exc

    records = []
    for index in range(n):
        image = render_image(spec, image_rng(spec.seed, split, index), image_id=index)
        stem = f"{split}_{index:05d}"
        image_path = image_dir / f"{stem}.pgm"
        label_path = label_dir / f"{stem}.txt"
        try:
            write_pnm(image_path, image.pixels)
            write_yolo_labels(label_path, image.gts, spec.image_size, spec.image_size)
        except OSError as exc:
            msg = f"cannot write {image_path}: {exc.strerror}"
            raise DatasetError(msg) from exc
        records.append(
            ImageRecord(
                image=str(image_path.relative_to(root)),
                label=str(label_path.relative_to(root)),
                width=spec.image_size,
                height=spec.image_size,
            )
        )

    descriptor_path = root / DESCRIPTOR_NAME
    splits: dict[str, list[ImageRecord]] = {}
    if descriptor_path.exists():
        existing = json.loads(descriptor_path.read_text())
        splits = {name: [ImageRecord(**r) for r in rs] for name, rs in existing.get("splits", {}).items()}
    splits[split] = records
    descriptor = DatasetDescriptor(root=root, splits=splits)
    descriptor.write()
    logger.info(f"wrote {n} synthetic images to {image_dir}")
    return descriptor
