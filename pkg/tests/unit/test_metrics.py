import json
from pathlib import Path

import numpy as np
import pytest
from rich.console import Console

from deskdet.metrics.ap import average_precision, greedy_match, match_detections, precision_recall
from deskdet.metrics.summary import map_summary, render_report, write_report
from deskdet.types import Detection, GroundTruth, pairwise_iou
from tests.helpers import detection, ground_truth, random_boxes


def _ranked_fixture() -> tuple[list[Detection], list[GroundTruth]]:
    """1000 unit objects; the ranking is 855 TP, 82 FP, 71 TP, 265 FP, 74 TP.

    True positives overlap their object with IoU 0.97 (first 605), 0.72 (next 30) or 0.52
    (the rest); false positives sit in images without objects.
    """
    gts = [ground_truth(0.0, 0.0, 100.0, 100.0, image_id=i) for i in range(1000)]
    runs = [(True, 855), (False, 82), (True, 71), (False, 265), (True, 74)]
    dets = []
    rank = tp_seen = fp_seen = 0
    for is_tp, length in runs:
        for _ in range(length):
            score = 1.0 - rank / 2000
            if is_tp:
                height = 97.0 if tp_seen < 605 else 72.0 if tp_seen < 635 else 52.0
                dets.append(detection(0.0, 0.0, 100.0, height, score, image_id=tp_seen))
                tp_seen += 1
            else:
                dets.append(detection(0.0, 0.0, 100.0, 100.0, score, image_id=1000 + fp_seen))
                fp_seen += 1
            rank += 1
    return dets, gts


def test_ap_of_hit_then_miss_is_one() -> None:
    assert average_precision(np.array([True, False]), np.array([0.9, 0.8]), 1) == pytest.approx(1.0)


def test_ap_of_miss_then_hit_is_half() -> None:
    assert average_precision(np.array([False, True]), np.array([0.9, 0.8]), 1) == pytest.approx(0.5)


def test_ap_without_ground_truth() -> None:
    assert average_precision(np.zeros(0, dtype=bool), np.zeros(0), 0) is None
    assert average_precision(np.array([False]), np.array([0.3]), 0) == 0.0


def test_precision_recall_follow_score_order() -> None:
    precision, recall = precision_recall(np.array([False, True, True]), np.array([0.1, 0.9, 0.5]), 4)
    np.testing.assert_allclose(precision, [1.0, 1.0, 2 / 3])
    np.testing.assert_allclose(recall, [0.25, 0.5, 0.5])


def test_each_ground_truth_matches_once() -> None:
    gt = ground_truth(0, 0, 10, 10)
    flags = match_detections([detection(0, 0, 10, 10, 0.8), detection(0, 0, 10, 10, 0.9)], [gt], 0.5)
    np.testing.assert_array_equal(flags, [False, True])


def _brute_force_match(ious: np.ndarray, scores: np.ndarray, thresh: float) -> np.ndarray:
    flags = np.zeros(len(scores), dtype=bool)
    taken: set[int] = set()
    for det in sorted(range(len(scores)), key=lambda i: (-scores[i], i)):
        best, best_iou = -1, -1.0
        for g in range(ious.shape[1]):
            if g not in taken and ious[det, g] > best_iou:
                best, best_iou = g, ious[det, g]
        if best >= 0 and best_iou >= thresh:
            flags[det] = True
            taken.add(best)
    return flags


@pytest.mark.parametrize("seed", range(200))
def test_matcher_agrees_with_brute_force(seed: int) -> None:
    rng = np.random.default_rng(seed)
    gt_boxes = random_boxes(rng, 8, extent=60.0)
    det_boxes = np.concatenate([gt_boxes + rng.normal(scale=2.0, size=gt_boxes.shape), random_boxes(rng, 8, 60.0)])
    det_boxes[:, 2:] = np.maximum(det_boxes[:, 2:], det_boxes[:, :2] + 1.0)
    scores = np.round(rng.uniform(size=len(det_boxes)), 1)
    dets = [detection(*box, score=float(s)) for box, s in zip(det_boxes, scores, strict=True)]
    gts = [ground_truth(*box) for box in gt_boxes]
    expected = _brute_force_match(pairwise_iou(det_boxes, gt_boxes), scores, 0.5)
    np.testing.assert_array_equal(match_detections(dets, gts, 0.5), expected)


def test_greedy_match_without_ground_truth() -> None:
    assert not greedy_match(np.zeros((3, 0)), np.arange(3), 0.5).any()


def test_ranked_fixture_summary() -> None:
    dets, gts = _ranked_fixture()
    report = map_summary(dets, gts)
    assert report.precision == pytest.approx(926 / 1008, abs=1e-9)
    assert report.recall == pytest.approx(0.926, abs=1e-9)
    assert report.map50 == pytest.approx(0.973957, abs=1e-6)
    assert report.map50_95 == pytest.approx(0.652841, abs=1e-6)
    assert report.num_images == 1347
    assert report.num_ground_truths == 1000
    assert len(report.classes[0].pr_curve) == 101


def test_summary_ignores_detection_order_and_thread_count(rng: np.random.Generator) -> None:
    gts = [ground_truth(*box, class_id=i % 3, image_id=i % 5) for i, box in enumerate(random_boxes(rng, 30))]
    dets = []
    for gt in gts:
        if rng.uniform() >= 0.8:
            continue
        box = gt.box.as_array() + rng.normal(scale=3.0, size=4)
        box[2:] = np.maximum(box[2:], box[:2] + 1.0)
        dets.append(detection(*box, score=float(rng.uniform()), class_id=gt.class_id, image_id=gt.image_id))
    baseline = map_summary(dets, gts, workers=1).model_dump()
    shuffled = [dets[i] for i in rng.permutation(len(dets))]
    assert map_summary(shuffled, gts, workers=4).model_dump() == baseline


def test_perfect_detections_score_one() -> None:
    gts = [ground_truth(10, 10, 50, 50, image_id=i) for i in range(3)]
    dets = [detection(10, 10, 50, 50, 0.9, image_id=i) for i in range(3)]
    report = map_summary(dets, gts)
    assert report.map50 == pytest.approx(1.0)
    assert report.map50_95 == pytest.approx(1.0)


def test_empty_inputs_give_zero_report() -> None:
    report = map_summary([], [])
    assert report.map50 == 0.0
    assert report.classes == []


def test_report_renders_and_serialises(tmp_path: Path) -> None:
    gts = [ground_truth(10, 10, 50, 50)]
    report = map_summary([detection(10, 10, 50, 50, 0.9)], gts)
    console = Console(record=True, width=120)
    console.print(render_report(report, title="val"))
    assert "mAP50" in console.export_text()
    path = tmp_path / "report.json"
    write_report(report, path)
    assert json.loads(path.read_text())["map50"] == pytest.approx(1.0)
