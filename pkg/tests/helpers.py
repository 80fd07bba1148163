import numpy as np

from deskdet.types import BoxXYXY, Detection, GroundTruth


def detection(
    x1: float, y1: float, x2: float, y2: float, score: float, class_id: int = 0, image_id: int = 0
) -> Detection:
    return Detection(box=BoxXYXY(x1=x1, y1=y1, x2=x2, y2=y2), score=score, class_id=class_id, image_id=image_id)


def ground_truth(x1: float, y1: float, x2: float, y2: float, class_id: int = 0, image_id: int = 0) -> GroundTruth:
    return GroundTruth(box=BoxXYXY(x1=x1, y1=y1, x2=x2, y2=y2), class_id=class_id, image_id=image_id)


def random_boxes(rng: np.random.Generator, n: int, extent: float = 100.0) -> np.ndarray:
    """``n`` valid boxes [n,4] inside [0, extent]."""
    xy = rng.uniform(0.0, extent * 0.8, size=(n, 2))
    wh = rng.uniform(extent * 0.02, extent * 0.2, size=(n, 2))
    return np.concatenate([xy, xy + wh], axis=1)
