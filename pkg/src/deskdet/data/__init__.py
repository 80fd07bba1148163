from deskdet.data.dataset import (
    DESCRIPTOR_NAME,
    DatasetDescriptor,
    ImageRecord,
    Sample,
    dataset_from_yolo_dir,
    load_dataset,
    load_sample,
    load_split,
    stack_batch,
)
from deskdet.data.synthetic import SyntheticImage, SyntheticSpec, gen_synthetic, image_rng, render_image

__all__ = [
    "DESCRIPTOR_NAME",
    "DatasetDescriptor",
    "ImageRecord",
    "Sample",
    "SyntheticImage",
    "SyntheticSpec",
    "dataset_from_yolo_dir",
    "gen_synthetic",
    "image_rng",
    "load_dataset",
    "load_sample",
    "load_split",
    "render_image",
    "stack_batch",
]
