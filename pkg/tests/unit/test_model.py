import numpy as np
import pytest
from pydantic import ValidationError
from rich.console import Console

from deskdet.constants import AttentionKind, NeckPreset, PyramidLevel
from deskdet.exceptions import AnchorConfigError, RegionDivisibilityError, ShapeMismatchError
from deskdet.io.checkpoint import Checkpoint
from deskdet.model.config import ModelConfig, NeckSpec
from deskdet.model.detector import Detector, detector_from_checkpoint
from deskdet.model.summary import render_summary, summarize


def test_default_model_heads_four_scales_at_640() -> None:
    summary = summarize(ModelConfig())
    heads = summary.section("head")
    assert [row.name for row in heads] == ["grid 160x160", "grid 80x80", "grid 40x40", "grid 20x20"]
    assert [row.level for row in heads] == ["p2", "p3", "p4", "p5"]
    assert heads[0].shape == (4 * 17 + 1, 160, 160)
    assert summary.total_params == sum(row.params for row in summary.rows)


def test_summary_at_another_size_revalidates(toy_model: ModelConfig) -> None:
    summary = summarize(toy_model, input_size=128)
    assert summary.input_size == 128
    assert summary.section("head")[-1].name == "grid 4x4"
    backbone = summary.section("backbone")
    assert backbone[0].shape == (8, 64, 64)
    assert backbone[-1].op == "sppf"


def test_summary_renders(toy_model: ModelConfig) -> None:
    console = Console(record=True, width=120)
    console.print(render_summary(summarize(toy_model)))
    assert "grid 16x16" in console.export_text()


def test_three_level_neck_drops_the_p2_head() -> None:
    config = ModelConfig.toy(
        64, neck=NeckSpec(preset=NeckPreset.FPN_PANET, levels=[PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5])
    )
    assert config.strides == [8, 16, 32]


def test_input_size_must_align_to_the_largest_stride() -> None:
    with pytest.raises(ValidationError, match="multiple of 32"):
        ModelConfig.toy(100)


def test_head_strides_must_match_the_neck() -> None:
    with pytest.raises(AnchorConfigError):
        ModelConfig.toy(64, head={"strides": [8, 16, 32]})


def test_region_divisibility_is_checked_at_config_time() -> None:
    with pytest.raises(RegionDivisibilityError):
        ModelConfig.toy(96)
    assert ModelConfig.toy(96, attention={"kind": AttentionKind.SE}).input_size == 96


def test_neck_needs_exactly_one_source() -> None:
    with pytest.raises(ValidationError, match="exactly one"):
        NeckSpec(preset=None)


def test_forward_emits_one_row_per_anchor(toy_model: ModelConfig, rng: np.random.Generator) -> None:
    detector = Detector(toy_model, rng)
    out = detector.forward(rng.uniform(size=(2, 1, 64, 64)))
    anchors = 16**2 + 8**2 + 4**2 + 2**2
    assert out.cls.shape == (2, anchors, 1)
    assert out.reg.shape == (2, anchors, 4 * 9)
    assert detector.anchors.count == anchors


def test_forward_rejects_wrong_channel_count(toy_model: ModelConfig) -> None:
    with pytest.raises(ShapeMismatchError):
        Detector(toy_model).forward(np.zeros((1, 3, 64, 64)))


def test_predict_keeps_training_mode(toy_model: ModelConfig, rng: np.random.Generator) -> None:
    detector = Detector(toy_model, rng).train()
    detections = detector.predict(rng.uniform(size=(2, 1, 64, 64)), conf_thresh=0.0, max_det=5, image_ids=[7, 9])
    assert detector.training
    assert [len(image) for image in detections] == [5, 5]
    assert {det.image_id for det in detections[1]} == {9}
    for det in detections[0]:
        assert 0.0 <= det.box.x1 <= det.box.x2 <= 64.0


def test_checkpoint_state_restores_predictions(toy_model: ModelConfig, rng: np.random.Generator) -> None:
    images = rng.uniform(size=(1, 1, 64, 64))
    source = Detector(toy_model, np.random.default_rng(1))
    checkpoint = Checkpoint(model=toy_model.model_dump(mode="json"), step=0, tensors=source.model_state())
    restored = detector_from_checkpoint(checkpoint)
    np.testing.assert_allclose(
        restored.forward(images).cls.data, source.eval().forward(images).cls.data, rtol=1e-5, atol=1e-6
    )
