import json
from pathlib import Path

import pytest
from click.testing import CliRunner, Result

from deskdet.cli import cli
from deskdet.config import RunConfig, dump_run_config
from deskdet.data.dataset import load_dataset
from deskdet.evaluate import split_ground_truths
from deskdet.io.detections import write_detection_dir
from deskdet.model.config import ModelConfig
from deskdet.training.config import TrainConfig
from deskdet.types import Detection
from tests.helpers import detection


def _invoke(*args: str) -> Result:
    return CliRunner().invoke(cli, list(args), catch_exceptions=False)


def _error_line(result: Result) -> dict[str, str]:
    lines = [line for line in result.output.splitlines() if line.startswith('{"error"')]
    assert lines, result.output
    payload: dict[str, str] = json.loads(lines[-1])
    return payload


@pytest.fixture(scope="module")
def dataset_root(tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("cli_dataset")
    result = _invoke("gen-data", "--out", str(root), "--train", "6", "--val", "3", "--test", "2", "--image-size", "64")
    assert result.exit_code == 0, result.output
    return root


@pytest.fixture(scope="module")
def toy_config(tmp_path_factory: pytest.TempPathFactory) -> Path:
    path = tmp_path_factory.mktemp("cli_config") / "toy.yaml"
    train = TrainConfig(steps=2, batch=2, precision="float64", log_every=1)
    dump_run_config(RunConfig(model=ModelConfig.toy(64), train=train), path)
    return path


def test_summary_reports_four_head_grids_at_640(tmp_path: Path) -> None:
    out = tmp_path / "summary.json"
    result = _invoke("summary", "--input-size", "640", "--out", str(out))
    assert result.exit_code == 0, result.output
    heads = [row for row in json.loads(out.read_text())["rows"] if row["section"] == "head"]
    assert [row["shape"][1:] for row in heads] == [[160, 160], [80, 80], [40, 40], [20, 20]]
    assert "grid 160x160" in result.output


def test_generated_dataset_has_every_split(dataset_root: Path) -> None:
    descriptor = load_dataset(dataset_root)
    assert {split: len(records) for split, records in descriptor.splits.items()} == {"train": 6, "val": 3, "test": 2}


def test_eval_of_ground_truth_detections_is_perfect(tmp_path: Path, dataset_root: Path) -> None:
    descriptor = load_dataset(dataset_root)
    stems, gts = split_ground_truths(descriptor, "val")
    per_image: list[list[Detection]] = [[] for _ in stems]
    for gt in gts:
        per_image[gt.image_id].append(detection(*gt.box.as_array(), score=0.9, image_id=gt.image_id))
    write_detection_dir(tmp_path / "dets", stems, per_image)
    out = tmp_path / "report.json"
    result = _invoke("eval", "--detections", str(tmp_path / "dets"), "--dataset", str(dataset_root), "--out", str(out))
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["map50"] == pytest.approx(1.0)
    assert report["map50_95"] == pytest.approx(1.0)


def test_invalid_input_size_is_a_json_error() -> None:
    result = _invoke("summary", "--input-size", "100")
    assert result.exit_code == 1
    assert _error_line(result)["error"] == "ValidationError"


def test_unknown_split_is_a_json_error(tmp_path: Path, dataset_root: Path) -> None:
    (tmp_path / "dets").mkdir()
    result = _invoke("eval", "--detections", str(tmp_path / "dets"), "--dataset", str(dataset_root), "--split", "dev")
    assert result.exit_code == 1
    error = _error_line(result)
    assert error["error"] == "DatasetError"
    assert "dev" in error["message"]


def test_eval_needs_exactly_one_source(dataset_root: Path) -> None:
    result = _invoke("eval", "--dataset", str(dataset_root))
    assert result.exit_code == 2
    assert "exactly one" in result.output


def test_train_detect_eval_pipeline(tmp_path: Path, dataset_root: Path, toy_config: Path) -> None:
    runs = []
    for name in ("a", "b"):
        result = _invoke(
            "train", "--config", str(toy_config), "--dataset", str(dataset_root), "--out", str(tmp_path / name)
        )
        assert result.exit_code == 0, result.output
        assert "trained 2 steps" in result.output
        runs.append(tmp_path / name)
    assert (runs[0] / "last.ckpt").read_bytes() == (runs[1] / "last.ckpt").read_bytes()
    assert (runs[0] / "loss_log.csv").read_text() == (runs[1] / "loss_log.csv").read_text()

    checkpoint = str(runs[0] / "last.ckpt")
    detections = str(tmp_path / "d")
    result = _invoke(
        "detect", "--checkpoint", checkpoint, "--dataset", str(dataset_root), "--conf", "0.0", "--out", detections
    )
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in (tmp_path / "d").iterdir()) == ["test_00000.txt", "test_00001.txt"]

    out = tmp_path / "report.json"
    result = _invoke("eval", "--checkpoint", checkpoint, "--dataset", str(dataset_root), "--out", str(out))
    assert result.exit_code == 0, result.output
    assert 0.0 <= json.loads(out.read_text())["map50"] <= 1.0


def test_resume_with_another_model_is_a_json_error(tmp_path: Path, dataset_root: Path, toy_config: Path) -> None:
    first = _invoke("train", "--config", str(toy_config), "--dataset", str(dataset_root), "--out", str(tmp_path / "a"))
    assert first.exit_code == 0, first.output
    result = _invoke(
        "train",
        "--config",
        str(toy_config),
        "--dataset",
        str(dataset_root),
        "--input-size",
        "128",
        "--resume",
        str(tmp_path / "a" / "last.ckpt"),
        "--out",
        str(tmp_path / "b"),
    )
    assert result.exit_code == 1
    assert _error_line(result)["error"] == "CheckpointMismatchError"


def test_gradcheck_ops_suite_passes() -> None:
    result = _invoke("gradcheck", "--suite", "ops", "--seeds", "2")
    assert result.exit_code == 0, result.output
    assert "FAIL" not in result.output
