from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Annotated

import numpy as np
from pydantic import BaseModel, Field
from rich.table import Table

from deskdet.constants import COCO_IOU_THRESHOLDS
from deskdet.logging import logger
from deskdet.metrics.ap import (
    average_precision,
    greedy_match,
    interpolated_precision,
    precision_recall,
    score_order,
)
from deskdet.types import Detection, GroundTruth, boxes_array, pairwise_iou

UnitFloat = Annotated[float, Field(ge=0.0, le=1.0)]


class ClassMetrics(BaseModel):
    class_id: int
    num_gt: int
    num_det: int
    precision: UnitFloat
    recall: UnitFloat
    ap50: UnitFloat
    ap50_95: UnitFloat
    pr_curve: list[float] = Field(default_factory=list, description="interpolated precision at recall 0.00..1.00")


class MetricsReport(BaseModel):
    """Aggregate metrics; precision and recall are read at the confidence with the best mean F1."""

    precision: UnitFloat
    recall: UnitFloat
    map50: UnitFloat
    map50_95: UnitFloat
    best_conf: UnitFloat
    ap_per_threshold: list[float] = Field(default_factory=list)
    iou_thresholds: list[float] = Field(default_factory=lambda: list(COCO_IOU_THRESHOLDS))
    classes: list[ClassMetrics] = Field(default_factory=list)
    num_images: int = 0
    num_detections: int = 0
    num_ground_truths: int = 0


class _ClassCurve:
    def __init__(self, class_id: int, flags: np.ndarray, scores: np.ndarray, num_gt: int) -> None:
        self.class_id = class_id
        self.flags = flags
        self.scores = scores
        self.num_gt = num_gt
        order = score_order(scores)
        self.sorted_scores = scores[order]
        self.cum_tp = np.cumsum(flags[0][order]) if scores.size else np.zeros(0)

    def precision_recall_at(self, conf: float) -> tuple[float, float]:
        kept = int(np.searchsorted(-self.sorted_scores, -conf, side="right"))
        if kept == 0:
            return 0.0, 0.0
        tp = float(self.cum_tp[kept - 1])
        return tp / kept, tp / max(self.num_gt, 1)


def _best_confidence(curves: list[_ClassCurve]) -> float:
    scored = [c for c in curves if c.num_gt > 0]
    candidates = np.unique(np.concatenate([c.scores for c in scored])) if scored else np.zeros(0)
    best_conf, best_f1 = 0.0, -1.0
    for conf in candidates[::-1]:
        f1 = []
        for curve in scored:
            p, r = curve.precision_recall_at(float(conf))
            f1.append(2 * p * r / (p + r + 1e-16))
        mean_f1 = float(np.mean(f1))
        if mean_f1 > best_f1:
            best_conf, best_f1 = float(conf), mean_f1
    return best_conf


def map_summary(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    thresholds: Sequence[float] = COCO_IOU_THRESHOLDS,
    workers: int = 1,
) -> MetricsReport:
    """Precision, recall, mAP50 and mAP50-95 over every class present in ``dets`` or ``gts``.

    Matching runs per (image, class) and may fan out over ``workers`` threads; results are
    merged in (class, image id) order so the report does not depend on the thread count.
    """
    det_groups: dict[tuple[int, int], list[Detection]] = defaultdict(list)
    gt_groups: dict[tuple[int, int], list[GroundTruth]] = defaultdict(list)
    for det in dets:
        det_groups[det.class_id, det.image_id].append(det)
    for gt in gts:
        gt_groups[gt.class_id, gt.image_id].append(gt)
    keys = sorted(set(det_groups) | set(gt_groups))
    known_images = {gt.image_id for gt in gts}
    strays = {det.image_id for det in dets} - known_images
    if gts and strays:
        logger.warning(f"{len(strays)} images have detections but no ground-truth entry")

    def match(key: tuple[int, int]) -> np.ndarray:
        group = det_groups.get(key, [])
        if not group:
            return np.zeros((len(thresholds), 0), dtype=bool)
        ious = pairwise_iou(boxes_array(group), boxes_array(gt_groups.get(key, [])))
        order = score_order(np.array([d.score for d in group]))
        return np.stack([greedy_match(ious, order, t) for t in thresholds])

    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        matched = dict(zip(keys, pool.map(match, keys), strict=True))

    curves: list[_ClassCurve] = []
    for class_id in sorted({key[0] for key in keys}):
        class_keys = [key for key in keys if key[0] == class_id]
        flags = np.concatenate([matched[key] for key in class_keys], axis=1)
        scores = np.array([d.score for key in class_keys for d in det_groups.get(key, [])], dtype=np.float64)
        num_gt = sum(len(gt_groups.get(key, [])) for key in class_keys)
        curves.append(_ClassCurve(class_id, flags, scores, num_gt))

    best_conf = _best_confidence(curves)
    rows: list[ClassMetrics] = []
    per_threshold: list[list[float]] = [[] for _ in thresholds]
    for curve in curves:
        aps = [average_precision(curve.flags[t], curve.scores, curve.num_gt) for t in range(len(thresholds))]
        if any(ap is None for ap in aps):
            continue
        values = [float(ap) for ap in aps if ap is not None]
        for t, ap in enumerate(values):
            per_threshold[t].append(ap)
        precision, recall = curve.precision_recall_at(best_conf)
        pr = interpolated_precision(*precision_recall(curve.flags[0], curve.scores, curve.num_gt))
        rows.append(
            ClassMetrics(
                class_id=curve.class_id,
                num_gt=curve.num_gt,
                num_det=int(curve.scores.size),
                precision=precision,
                recall=recall,
                ap50=values[0],
                ap50_95=float(np.mean(values)),
                pr_curve=[float(v) for v in pr],
            )
        )

    with_gt = [row for row in rows if row.num_gt > 0]
    ap_per_threshold = [float(np.mean(v)) if v else 0.0 for v in per_threshold]
    return MetricsReport(
        precision=float(np.mean([r.precision for r in with_gt])) if with_gt else 0.0,
        recall=float(np.mean([r.recall for r in with_gt])) if with_gt else 0.0,
        map50=ap_per_threshold[0] if rows else 0.0,
        map50_95=float(np.mean(ap_per_threshold)) if rows else 0.0,
        best_conf=best_conf,
        ap_per_threshold=ap_per_threshold,
        iou_thresholds=list(thresholds),
        classes=rows,
        num_images=len({key[1] for key in keys}),
        num_detections=len(dets),
        num_ground_truths=len(gts),
    )


def render_report(report: MetricsReport, title: str = "Detection metrics") -> Table:
    table = Table(title=title)
    for column in ("class", "gt", "det", "P", "R", "mAP50", "mAP50-95"):
        table.add_column(column, justify="right")
    for row in report.classes:
        table.add_row(
            str(row.class_id),
            str(row.num_gt),
            str(row.num_det),
            f"{row.precision:.3f}",
            f"{row.recall:.3f}",
            f"{row.ap50:.3f}",
            f"{row.ap50_95:.3f}",
        )
    table.add_row(
        "all",
        str(report.num_ground_truths),
        str(report.num_detections),
        f"{report.precision:.3f}",
        f"{report.recall:.3f}",
        f"{report.map50:.3f}",
        f"{report.map50_95:.3f}",
        style="bold",
    )
    return table


def write_report(report: MetricsReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    logger.info(f"wrote metrics report to {path}")
