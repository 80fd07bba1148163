from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field, model_validator

from deskdet.attention.bra import BraParams, bra_forward
from deskdet.attention.gates import (
    CAParams,
    CBAMParams,
    ECAParams,
    SEParams,
    ca_forward,
    cbam_forward,
    eca_forward,
    se_forward,
)
from deskdet.constants import AttentionKind
from deskdet.tensor import Tensor

AttentionParams = BraParams | SEParams | ECAParams | CBAMParams | CAParams


class AttentionSpec(BaseModel):
    """Hyperparameters of every attention kind; only the fields of ``kind`` are used."""

    kind: AttentionKind = AttentionKind.BRA
    regions: int = Field(default=2, ge=1)
    routed: int | None = Field(default=None, ge=1)
    heads: int = Field(default=4, ge=1)
    local_context: bool = True
    reduction: int = Field(default=16, ge=1)
    spatial_kernel: int = Field(default=7, ge=1)
    ca_reduction: int = Field(default=32, ge=1)
    eca_kernel: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def check_sizes(self) -> AttentionSpec:
        if self.routed is not None and self.routed > self.regions**2:
            msg = f"routed={self.routed} exceeds the {self.regions**2} available regions"
            raise ValueError(msg)
        if self.spatial_kernel % 2 == 0:
            msg = f"spatial_kernel must be odd, got {self.spatial_kernel}"
            raise ValueError(msg)
        if self.eca_kernel is not None and self.eca_kernel % 2 == 0:
            msg = f"eca_kernel must be odd, got {self.eca_kernel}"
            raise ValueError(msg)
        return self

    @property
    def routed_regions(self) -> int:
        return self.routed if self.routed is not None else math.ceil(self.regions**2 / 2)


def build_attention(
    kind: AttentionKind, channels: int, spec: AttentionSpec, rng: np.random.Generator
) -> AttentionParams | None:
    """Create the parameters of one attention block, or ``None`` for ``AttentionKind.NONE``."""
    if kind is AttentionKind.BRA:
        return BraParams(
            channels,
            rng,
            regions=spec.regions,
            routed=spec.routed_regions,
            heads=spec.heads,
            local_context=spec.local_context,
        )
    if kind is AttentionKind.SE:
        return SEParams(channels, rng, reduction=spec.reduction)
    if kind is AttentionKind.ECA:
        return ECAParams(channels, rng, kernel=spec.eca_kernel)
    if kind is AttentionKind.CBAM:
        return CBAMParams(channels, rng, reduction=spec.reduction, spatial_kernel=spec.spatial_kernel)
    if kind is AttentionKind.CA:
        return CAParams(channels, rng, reduction=spec.ca_reduction)
    return None


def attention_forward(x: Tensor, params: AttentionParams | None) -> Tensor:
    if params is None:
        return x
    if isinstance(params, BraParams):
        return bra_forward(x, params)
    if isinstance(params, SEParams):
        return se_forward(x, params)
    if isinstance(params, ECAParams):
        return eca_forward(x, params)
    if isinstance(params, CBAMParams):
        return cbam_forward(x, params)
    return ca_forward(x, params)
