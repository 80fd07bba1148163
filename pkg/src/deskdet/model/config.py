"""Declarative model configuration, validated before anything is built."""

from __future__ import annotations

from pydantic import BaseModel, Field, model_validator

from deskdet.attention.factory import AttentionSpec
from deskdet.constants import DEFAULT_REG_MAX, AttentionKind, ClsLossKind, IoULossKind, NeckPreset, PyramidLevel
from deskdet.exceptions import AnchorConfigError
from deskdet.losses.detection import LossWeights
from deskdet.neck.graph import ChannelPlan, NeckGraph, NodeShape, infer_shapes
from deskdet.neck.presets import build_preset

INPUT_ALIGNMENT = 32
BACKBONE_LEVELS = (PyramidLevel.P2, PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5)


def _even(value: float) -> int:
    return max(2, 2 * round(value / 2))


class BackboneSpec(BaseModel):
    """Stem plus one stride-2 CBS and C2f stage per level from P2 to P5, SPPF at P5."""

    in_channels: int = Field(default=3, ge=1)
    stem_width: int = Field(default=16, ge=1)
    widths: dict[PyramidLevel, int] = Field(
        default_factory=lambda: {
            PyramidLevel.P2: 32,
            PyramidLevel.P3: 64,
            PyramidLevel.P4: 128,
            PyramidLevel.P5: 256,
        }
    )
    repeats: dict[PyramidLevel, int] = Field(
        default_factory=lambda: {
            PyramidLevel.P2: 1,
            PyramidLevel.P3: 2,
            PyramidLevel.P4: 2,
            PyramidLevel.P5: 1,
        }
    )
    width_multiple: float = Field(default=1.0, gt=0.0)
    depth_multiple: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def check_levels(self) -> BackboneSpec:
        for name, table in (("widths", self.widths), ("repeats", self.repeats)):
            missing = [level.value for level in BACKBONE_LEVELS if level not in table]
            if missing:
                msg = f"backbone {name} missing levels {', '.join(missing)}"
                raise ValueError(msg)
        return self

    def width(self, level: PyramidLevel) -> int:
        return _even(self.widths[level] * self.width_multiple)

    def depth(self, level: PyramidLevel) -> int:
        return max(1, round(self.repeats[level] * self.depth_multiple))

    @property
    def stem(self) -> int:
        return _even(self.stem_width * self.width_multiple)


class NeckSpec(BaseModel):
    """A preset name or an explicit graph. Neck widths default to the backbone widths."""

    preset: NeckPreset | None = NeckPreset.BGF
    graph: NeckGraph | None = None
    levels: list[PyramidLevel] | None = None
    widths: dict[PyramidLevel, int] | None = None
    fusion_width: int = Field(default=64, ge=1)

    @model_validator(mode="after")
    def check_source(self) -> NeckSpec:
        if (self.preset is None) == (self.graph is None):
            msg = "neck needs exactly one of 'preset' or 'graph'"
            raise ValueError(msg)
        return self

    def build_graph(self, attention: AttentionKind) -> NeckGraph:
        if self.graph is not None:
            return self.graph
        assert self.preset is not None
        return build_preset(self.preset, self.levels, attention, self.fusion_width)


class HeadSpec(BaseModel):
    """Strides default to those of the neck's output levels."""

    strides: list[int] | None = None
    reg_max: int = Field(default=DEFAULT_REG_MAX, ge=1)
    num_classes: int = Field(default=1, ge=1)
    reg_width: int | None = Field(default=None, ge=1)
    cls_width: int | None = Field(default=None, ge=1)


class LossSpec(BaseModel):
    reg_variant: IoULossKind = IoULossKind.CIOU
    cls_kind: ClsLossKind = ClsLossKind.BCE
    weights: LossWeights = Field(default_factory=LossWeights)
    top_k: int = Field(default=10, ge=1)
    align_alpha: float = Field(default=0.5, ge=0.0)
    align_beta: float = Field(default=6.0, ge=0.0)
    wiou_alpha: float = Field(default=1.9, gt=0.0)
    wiou_delta: float = Field(default=3.0, gt=0.0)
    wiou_momentum: float = Field(default=0.01, gt=0.0, le=1.0)


class ModelConfig(BaseModel):
    """Everything needed to build a detector.

    Construction runs the neck's symbolic shape pass at ``input_size``, so channel,
    spatial and region-divisibility errors surface here rather than in the first forward.
    """

    input_size: int = Field(default=640, gt=0)
    backbone: BackboneSpec = Field(default_factory=BackboneSpec)
    neck: NeckSpec = Field(default_factory=NeckSpec)
    attention: AttentionSpec = Field(default_factory=AttentionSpec)
    head: HeadSpec = Field(default_factory=HeadSpec)
    loss: LossSpec = Field(default_factory=LossSpec)

    @model_validator(mode="after")
    def check_consistency(self) -> ModelConfig:
        if self.input_size % INPUT_ALIGNMENT:
            msg = f"input_size must be a multiple of {INPUT_ALIGNMENT}, got {self.input_size}"
            raise ValueError(msg)
        expected = [level.stride for level in self.output_levels]
        if self.head.strides is not None and list(self.head.strides) != expected:
            msg = f"head strides {self.head.strides} do not match the neck outputs {expected}"
            raise AnchorConfigError(msg)
        self.neck_shapes()
        return self

    def neck_graph(self) -> NeckGraph:
        return self.neck.build_graph(self.attention.kind)

    @property
    def output_levels(self) -> list[PyramidLevel]:
        return sorted(self.neck_graph().output_levels, key=lambda level: level.index)

    @property
    def strides(self) -> list[int]:
        return [level.stride for level in self.output_levels]

    def channel_plan(self) -> ChannelPlan:
        taps = {level: self.backbone.width(level) for level in BACKBONE_LEVELS}
        neck = dict(taps)
        if self.neck.widths:
            neck.update(self.neck.widths)
        return ChannelPlan(taps=taps, neck=neck)

    def neck_shapes(self) -> dict[str, NodeShape]:
        return infer_shapes(self.neck_graph(), self.channel_plan(), self.input_size, self.attention)

    def at_size(self, input_size: int) -> ModelConfig:
        """The same model at another input resolution, revalidated."""
        return ModelConfig.model_validate({**self.model_dump(), "input_size": input_size})

    @classmethod
    def toy(cls, input_size: int = 128, **updates: object) -> ModelConfig:
        """Tiny widths for CPU training on synthetic data."""
        backbone = BackboneSpec(
            in_channels=1,
            stem_width=8,
            widths={PyramidLevel.P2: 16, PyramidLevel.P3: 32, PyramidLevel.P4: 32, PyramidLevel.P5: 64},
            repeats={PyramidLevel.P2: 1, PyramidLevel.P3: 1, PyramidLevel.P4: 1, PyramidLevel.P5: 1},
        )
        payload: dict[str, object] = {
            "input_size": input_size,
            "backbone": backbone,
            "neck": NeckSpec(fusion_width=32),
            "head": HeadSpec(reg_max=8),
        }
        payload.update(updates)
        return cls.model_validate(payload)
