"""Channel and spatial gating blocks: SE, ECA, CBAM and coordinate attention.

Every block maps [N,C,H,W] to the same shape by multiplying the input with sigmoid gates.
"""

from __future__ import annotations

import math

import numpy as np

from deskdet.constants import BN_EPS, BN_MOMENTUM
from deskdet.exceptions import BlockConfigError, ShapeMismatchError
from deskdet.nn.blocks import ConvParams
from deskdet.nn.module import Module, buffer, parameter, uniform_weight
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


def _check_channels(name: str, x: Tensor, channels: int) -> None:
    if x.ndim != 4 or x.shape[1] != channels:  # noqa: PLR2004
        msg = f"{name} built for {channels} channels got input of shape {x.shape}"
        raise ShapeMismatchError(msg)


class SEParams(Module):
    """Squeeze-excitation: GAP -> FC(C/r) -> ReLU -> FC(C) -> sigmoid."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 16) -> None:
        if reduction < 1:
            msg = f"SE reduction must be >= 1, got {reduction}"
            raise BlockConfigError(msg)
        hidden = max(1, channels // reduction)
        self.w1 = uniform_weight(rng, (channels, hidden), channels)
        self.b1 = parameter(np.zeros(hidden))
        self.w2 = uniform_weight(rng, (hidden, channels), hidden)
        self.b2 = parameter(np.zeros(channels))
        self.channels = channels
        self.reduction = reduction


def se_gate(x: Tensor, params: SEParams) -> Tensor:
    """Per-channel gate of shape [N,C]."""
    _check_channels("SE", x, params.channels)
    squeezed = x.mean(axis=(2, 3))
    hidden = F.relu(F.linear(squeezed, params.w1, params.b1))
    return F.sigmoid(F.linear(hidden, params.w2, params.b2))


def se_forward(x: Tensor, params: SEParams) -> Tensor:
    n, c, _, _ = x.shape
    return x * se_gate(x, params).reshape(n, c, 1, 1)


def eca_kernel_size(channels: int) -> int:
    """Adaptive 1-d kernel: |log2(C)/2 + 1/2| truncated, raised to the next odd size when even, at least 3."""
    k = int(abs((math.log2(channels) + 1) / 2))
    k = k if k % 2 else k + 1
    return max(k, 3)


class ECAParams(Module):
    def __init__(self, channels: int, rng: np.random.Generator, kernel: int | None = None) -> None:
        kernel = eca_kernel_size(channels) if kernel is None else kernel
        if kernel < 1 or kernel % 2 == 0:
            msg = f"ECA kernel must be a positive odd size, got {kernel}"
            raise BlockConfigError(msg)
        self.weight = uniform_weight(rng, (1, 1, 1, kernel), kernel)
        self.channels = channels
        self.kernel = kernel


def eca_gate(x: Tensor, params: ECAParams) -> Tensor:
    """Per-channel gate from a 1-d convolution across the pooled channel descriptor."""
    _check_channels("ECA", x, params.channels)
    n, c, _, _ = x.shape
    pooled = x.mean(axis=(2, 3)).reshape(n, 1, 1, c)
    mixed = F.conv2d(pooled, params.weight, None, 1, (0, (params.kernel - 1) // 2))
    return F.sigmoid(mixed.reshape(n, c))


def eca_forward(x: Tensor, params: ECAParams) -> Tensor:
    n, c, _, _ = x.shape
    return x * eca_gate(x, params).reshape(n, c, 1, 1)


class CBAMParams(Module):
    """Channel gate from a shared MLP over avg- and max-pooled descriptors, then a 2-channel spatial gate."""

    def __init__(
        self, channels: int, rng: np.random.Generator, reduction: int = 16, spatial_kernel: int = 7
    ) -> None:
        if spatial_kernel % 2 == 0:
            msg = f"CBAM spatial kernel must be odd, got {spatial_kernel}"
            raise BlockConfigError(msg)
        hidden = max(1, channels // reduction)
        self.w1 = uniform_weight(rng, (channels, hidden), channels)
        self.w2 = uniform_weight(rng, (hidden, channels), hidden)
        self.spatial = uniform_weight(rng, (1, 2, spatial_kernel, spatial_kernel), 2 * spatial_kernel**2)
        self.channels = channels
        self.spatial_kernel = spatial_kernel


def cbam_gates(x: Tensor, params: CBAMParams) -> tuple[Tensor, Tensor]:
    """Return the channel gate [N,C] and the spatial gate [N,1,H,W] computed on the channel-gated input."""
    _check_channels("CBAM", x, params.channels)
    n, c, h, w = x.shape

    def mlp(v: Tensor) -> Tensor:
        return F.linear(F.relu(F.linear(v, params.w1)), params.w2)

    flat = x.reshape(n, c, h * w)
    channel_gate = F.sigmoid(mlp(flat.mean(axis=2)) + mlp(F.amax(flat, axis=2)))
    gated = x * channel_gate.reshape(n, c, 1, 1)
    pooled = F.concat(
        [gated.mean(axis=1, keepdims=True), F.amax(gated, axis=1, keepdims=True)],
        axis=1,
    )
    spatial_gate = F.sigmoid(F.conv2d(pooled, params.spatial, None, 1, params.spatial_kernel // 2))
    return channel_gate, spatial_gate


def cbam_forward(x: Tensor, params: CBAMParams) -> Tensor:
    n, c, _, _ = x.shape
    channel_gate, spatial_gate = cbam_gates(x, params)
    return x * channel_gate.reshape(n, c, 1, 1) * spatial_gate


class CAParams(Module):
    """Coordinate attention: direction-aware pooling, a shared 1x1 bottleneck, one gate per axis."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 32) -> None:
        mip = max(8, channels // reduction)
        self.conv1 = ConvParams(channels, mip, rng, bias_init=0.0)
        self.gamma = parameter(np.ones(mip))
        self.beta = parameter(np.zeros(mip))
        self.running_mean = buffer(np.zeros(mip))
        self.running_var = buffer(np.ones(mip))
        self.conv_h = ConvParams(mip, channels, rng, bias_init=0.0)
        self.conv_w = ConvParams(mip, channels, rng, bias_init=0.0)
        self.channels = channels
        self.mip = mip


def ca_gates(x: Tensor, params: CAParams) -> tuple[Tensor, Tensor]:
    """Return the height gate [N,C,H,1] and the width gate [N,C,1,W]."""
    _check_channels("CA", x, params.channels)
    _, _, h, w = x.shape
    along_h = x.mean(axis=3, keepdims=True)
    along_w = x.mean(axis=2, keepdims=True).transpose(0, 1, 3, 2)
    joint = F.conv2d(F.concat([along_h, along_w], axis=2), params.conv1.weight, params.conv1.bias)
    joint = F.batchnorm2d(
        joint,
        params.gamma,
        params.beta,
        params.running_mean.data,
        params.running_var.data,
        training=params.training,
        momentum=BN_MOMENTUM,
        eps=BN_EPS,
    )
    joint = F.hardswish(joint)
    part_h, part_w = F.split(joint, [h, w], axis=2)
    gate_h = F.sigmoid(F.conv2d(part_h, params.conv_h.weight, params.conv_h.bias))
    gate_w = F.sigmoid(F.conv2d(part_w.transpose(0, 1, 3, 2), params.conv_w.weight, params.conv_w.bias))
    return gate_h, gate_w


def ca_forward(x: Tensor, params: CAParams) -> Tensor:
    gate_h, gate_w = ca_gates(x, params)
    return x * gate_h * gate_w
