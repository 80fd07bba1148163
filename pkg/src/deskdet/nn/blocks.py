"""YOLOv8 composite blocks: CBS, bottleneck, C2f, CSP and SPPF."""

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, Field, model_validator

from deskdet.constants import BN_EPS, BN_MOMENTUM, BlockKind
from deskdet.exceptions import BlockConfigError, ShapeMismatchError
from deskdet.nn.module import Module, buffer, parameter, uniform_weight
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


class ConvParams(Module):
    """Plain convolution with bias, used for prediction layers."""

    def __init__(
        self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 1, bias_init: float | None = None
    ) -> None:
        fan_in = c_in * kernel * kernel
        self.weight = uniform_weight(rng, (c_out, c_in, kernel, kernel), fan_in)
        if bias_init is None:
            self.bias = uniform_weight(rng, (c_out,), fan_in)
        else:
            self.bias = parameter(np.full(c_out, bias_init))
        self.padding = kernel // 2


def conv_forward(x: Tensor, params: ConvParams) -> Tensor:
    return F.conv2d(x, params.weight, params.bias, 1, params.padding)


class ConvBlockParams(Module):
    """Parameters of a Conv + BatchNorm + SiLU unit."""

    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        kernel: int = 1,
        stride: int = 1,
        padding: int | None = None,
        groups: int = 1,
        bias: bool = False,
    ) -> None:
        if c_in % groups or c_out % groups:
            msg = f"groups={groups} must divide {c_in} input and {c_out} output channels"
            raise BlockConfigError(msg)
        fan_in = (c_in // groups) * kernel * kernel
        self.weight = uniform_weight(rng, (c_out, c_in // groups, kernel, kernel), fan_in)
        self.bias = parameter(np.zeros(c_out)) if bias else None
        self.gamma = parameter(np.ones(c_out))
        self.beta = parameter(np.zeros(c_out))
        self.running_mean = buffer(np.zeros(c_out))
        self.running_var = buffer(np.ones(c_out))
        self.kernel = kernel
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.groups = groups
        self.eps = BN_EPS
        self.momentum = BN_MOMENTUM

    @property
    def c_in(self) -> int:
        return int(self.weight.shape[1]) * self.groups

    @property
    def c_out(self) -> int:
        return int(self.weight.shape[0])


def cbs_forward(x: Tensor, params: ConvBlockParams) -> Tensor:
    """SiLU(BN(Conv(x)))."""
    if x.ndim != 4 or x.shape[1] != params.c_in:  # noqa: PLR2004
        msg = f"CBS expects {params.c_in} input channels, got input of shape {x.shape}"
        raise ShapeMismatchError(msg)
    if np.any(params.running_var.data <= 0):
        msg = "BatchNorm running variance must be positive"
        raise BlockConfigError(msg)
    y = F.conv2d(x, params.weight, params.bias, params.stride, params.padding, params.groups)
    y = F.batchnorm2d(
        y,
        params.gamma,
        params.beta,
        params.running_mean.data,
        params.running_var.data,
        training=params.training,
        momentum=params.momentum,
        eps=params.eps,
    )
    return F.silu(y)


class BottleneckParams(Module):
    def __init__(self, channels: int, rng: np.random.Generator) -> None:
        self.cv1 = ConvBlockParams(channels, channels, rng, kernel=3)
        self.cv2 = ConvBlockParams(channels, channels, rng, kernel=3)


def bottleneck_forward(x: Tensor, params: BottleneckParams, shortcut: bool) -> Tensor:
    y = cbs_forward(cbs_forward(x, params.cv1), params.cv2)
    return x + y if shortcut else y


def _hidden_width(kind: str, c_out: int) -> int:
    if c_out % 2:
        msg = f"{kind} needs an even output width to split, got {c_out}"
        raise BlockConfigError(msg)
    return c_out // 2


class C2fParams(Module):
    """Entry 1x1 CBS to 2h channels, n bottlenecks on h channels, exit 1x1 CBS from (2+n)h channels."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, repeats: int = 1) -> None:
        hidden = _hidden_width("C2f", c_out)
        self.hidden = hidden
        self.cv1 = ConvBlockParams(c_in, 2 * hidden, rng)
        self.m = [BottleneckParams(hidden, rng) for _ in range(repeats)]
        self.cv2 = ConvBlockParams((2 + repeats) * hidden, c_out, rng)


def c2f_forward(x: Tensor, params: C2fParams, shortcut: bool) -> Tensor:
    parts = F.split(cbs_forward(x, params.cv1), [params.hidden, params.hidden], axis=1)
    for bottleneck in params.m:
        parts.append(bottleneck_forward(parts[-1], bottleneck, shortcut))
    return cbs_forward(F.concat(parts, axis=1), params.cv2)


class CSPParams(Module):
    """Two 1x1 branches of h channels; the second runs n residual bottlenecks; 1x1 exit over the concat."""

    def __init__(
        self, c_in: int, c_out: int, rng: np.random.Generator, repeats: int = 1, shortcut: bool = True
    ) -> None:
        hidden = _hidden_width("CSP", c_out)
        self.cv1 = ConvBlockParams(c_in, hidden, rng)
        self.cv2 = ConvBlockParams(c_in, hidden, rng)
        self.m = [BottleneckParams(hidden, rng) for _ in range(repeats)]
        self.cv3 = ConvBlockParams(2 * hidden, c_out, rng)
        self.shortcut = shortcut


def csp_forward(x: Tensor, params: CSPParams) -> Tensor:
    skip = cbs_forward(x, params.cv1)
    y = cbs_forward(x, params.cv2)
    for bottleneck in params.m:
        y = bottleneck_forward(y, bottleneck, params.shortcut)
    return cbs_forward(F.concat([skip, y], axis=1), params.cv3)


class SPPFParams(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 5) -> None:
        hidden = c_in // 2
        self.cv1 = ConvBlockParams(c_in, hidden, rng)
        self.cv2 = ConvBlockParams(4 * hidden, c_out, rng)
        self.kernel = kernel


def sppf_forward(x: Tensor, params: SPPFParams) -> Tensor:
    stages = [cbs_forward(x, params.cv1)]
    for _ in range(3):
        stages.append(F.max_pool2d(stages[-1], params.kernel, 1, params.kernel // 2))
    return cbs_forward(F.concat(stages, axis=1), params.cv2)


class BlockSpec(BaseModel):
    """Declarative description of one composite block."""

    kind: BlockKind
    channels_in: int = Field(gt=0)
    channels_out: int = Field(gt=0)
    repeats: int = Field(default=1, ge=1)
    shortcut: bool = False
    kernel: int = Field(default=1, ge=1)
    stride: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def check_widths(self) -> BlockSpec:
        if self.kind in (BlockKind.C2F, BlockKind.CSP) and self.channels_out % 2:
            msg = f"{self.kind.value} needs an even channels_out, got {self.channels_out}"
            raise ValueError(msg)
        return self


BlockParams = ConvBlockParams | C2fParams | CSPParams | SPPFParams


def build_block(spec: BlockSpec, rng: np.random.Generator) -> BlockParams:
    if spec.kind is BlockKind.CBS:
        return ConvBlockParams(spec.channels_in, spec.channels_out, rng, kernel=spec.kernel, stride=spec.stride)
    if spec.kind is BlockKind.C2F:
        return C2fParams(spec.channels_in, spec.channels_out, rng, repeats=spec.repeats)
    if spec.kind is BlockKind.CSP:
        return CSPParams(spec.channels_in, spec.channels_out, rng, repeats=spec.repeats)
    return SPPFParams(spec.channels_in, spec.channels_out, rng)


def block_forward(x: Tensor, params: BlockParams, shortcut: bool = False) -> Tensor:
    if isinstance(params, ConvBlockParams):
        return cbs_forward(x, params)
    if isinstance(params, C2fParams):
        return c2f_forward(x, params, shortcut)
    if isinstance(params, CSPParams):
        return csp_forward(x, params)
    return sppf_forward(x, params)


def _conv_bn_count(c_in: int, c_out: int, kernel: int) -> int:
    return c_out * c_in * kernel * kernel + 2 * c_out


def block_param_count(spec: BlockSpec) -> int:
    """Closed-form trainable parameter count of the block ``build_block(spec)`` creates."""
    c_in, c_out, n = spec.channels_in, spec.channels_out, spec.repeats
    if spec.kind is BlockKind.CBS:
        return _conv_bn_count(c_in, c_out, spec.kernel)
    if spec.kind is BlockKind.SPPF:
        hidden = c_in // 2
        return _conv_bn_count(c_in, hidden, 1) + _conv_bn_count(4 * hidden, c_out, 1)
    hidden = c_out // 2
    bottlenecks = n * 2 * _conv_bn_count(hidden, hidden, 3)
    if spec.kind is BlockKind.C2F:
        return _conv_bn_count(c_in, 2 * hidden, 1) + bottlenecks + _conv_bn_count((2 + n) * hidden, c_out, 1)
    return 2 * _conv_bn_count(c_in, hidden, 1) + bottlenecks + _conv_bn_count(2 * hidden, c_out, 1)
