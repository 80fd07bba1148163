from __future__ import annotations

from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from deskdet.constants import BN_EPS, BN_MOMENTUM
from deskdet.exceptions import ShapeMismatchError
from deskdet.tensor.tensor import Tensor, make_result

Operand = Tensor | float | int | np.ndarray
Axis = int | tuple[int, ...] | None


def _lift(value: Operand, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype), dtype=like.dtype)


def _operands(a: Operand, b: Operand) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    if isinstance(b, Tensor):
        return _lift(a, b), b
    return Tensor(a), Tensor(b)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _pair(value: int | tuple[int, int]) -> tuple[int, int]:
    return (value, value) if isinstance(value, int) else (int(value[0]), int(value[1]))


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else axis
    return tuple(sorted(a % ndim for a in axes))


def _expand_reduced(grad: np.ndarray, axes: tuple[int, ...], keepdims: bool, shape: tuple[int, ...]) -> np.ndarray:
    if not keepdims:
        grad = np.expand_dims(grad, axes)
    return np.broadcast_to(grad, shape)


def _sigmoid(values: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(values))
    return np.where(values >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# Elementwise arithmetic


def add(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g, ta.shape), unbroadcast(g, tb.shape)

    return make_result(ta.data + tb.data, (ta, tb), backward, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g, ta.shape), unbroadcast(-g, tb.shape)

    return make_result(ta.data - tb.data, (ta, tb), backward, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g * tb.data, ta.shape), unbroadcast(g * ta.data, tb.shape)

    return make_result(ta.data * tb.data, (ta, tb), backward, "mul")


def div(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)
    out = ta.data / tb.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g / tb.data, ta.shape), unbroadcast(-g * out / tb.data, tb.shape)

    return make_result(out, (ta, tb), backward, "div")


def neg(x: Tensor) -> Tensor:
    return make_result(-x.data, (x,), lambda g: (-g,), "neg")


def pow(x: Tensor, exponent: float) -> Tensor:  # noqa: A001
    out = x.data**exponent

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * exponent * x.data ** (exponent - 1),)

    return make_result(out, (x,), backward, "pow")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_result(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return make_result(out, (x,), lambda g: (g * 0.5 / out,), "sqrt")


def abs(x: Tensor) -> Tensor:  # noqa: A001
    return make_result(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def atan(x: Tensor) -> Tensor:
    return make_result(np.arctan(x.data), (x,), lambda g: (g / (1.0 + x.data * x.data),), "atan")


def maximum(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)
    take_a = ta.data >= tb.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g * take_a, ta.shape), unbroadcast(g * ~take_a, tb.shape)

    return make_result(np.maximum(ta.data, tb.data), (ta, tb), backward, "maximum")


def minimum(a: Operand, b: Operand) -> Tensor:
    ta, tb = _operands(a, b)
    take_a = ta.data <= tb.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return unbroadcast(g * take_a, ta.shape), unbroadcast(g * ~take_a, tb.shape)

    return make_result(np.minimum(ta.data, tb.data), (ta, tb), backward, "minimum")


def clamp(x: Tensor, low: float | None = None, high: float | None = None) -> Tensor:
    out = np.clip(x.data, low, high)
    inside = np.ones(x.shape, dtype=bool)
    if low is not None:
        inside &= x.data >= low
    if high is not None:
        inside &= x.data <= high
    return make_result(out, (x,), lambda g: (g * inside,), "clamp")


# Reductions


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _normalize_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_expand_reduced(g, axes, keepdims, x.shape),)

    return make_result(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = np.mean(x.data, axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (_expand_reduced(g / count, axes, keepdims, x.shape),)

    return make_result(np.asarray(out), (x,), backward, "mean")


def amax(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    ax = axis % x.ndim
    index = np.expand_dims(np.argmax(x.data, axis=ax), ax)
    out = np.take_along_axis(x.data, index, axis=ax)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        np.put_along_axis(grad, index, g if keepdims else np.expand_dims(g, ax), axis=ax)
        return (grad,)

    return make_result(out if keepdims else np.squeeze(out, ax), (x,), backward, "amax")


# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with numpy broadcasting of the batch axes."""
    if a.ndim < 2 or b.ndim < 2:  # noqa: PLR2004
        msg = f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}"
        raise ShapeMismatchError(msg)
    if a.shape[-1] != b.shape[-2]:
        msg = f"matmul inner extents differ: {a.shape} @ {b.shape}"
        raise ShapeMismatchError(msg)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_a = g @ np.swapaxes(b.data, -1, -2)
        grad_b = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)

    return make_result(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


# Activations


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return make_result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * s * (1.0 + x.data * (1.0 - s)),)

    return make_result(x.data * s, (x,), backward, "silu")


def relu(x: Tensor) -> Tensor:
    positive = x.data > 0
    return make_result(x.data * positive, (x,), lambda g: (g * positive,), "relu")


def hardswish(x: Tensor) -> Tensor:
    out = x.data * np.clip(x.data + 3.0, 0.0, 6.0) / 6.0

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        slope = np.where(x.data < -3.0, 0.0, np.where(x.data > 3.0, 1.0, (2.0 * x.data + 3.0) / 6.0))  # noqa: PLR2004
        return (g * slope,)

    return make_result(out, (x,), backward, "hardswish")


def softplus(x: Tensor) -> Tensor:
    return make_result(np.logaddexp(0.0, x.data), (x,), lambda g: (g * _sigmoid(x.data),), "softplus")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (x,), backward, "log_softmax")


# Structure


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = x.data.reshape(tuple(shape))
    return make_result(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    order = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(order))
    return make_result(x.data.transpose(order), (x,), lambda g: (g.transpose(inverse),), "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        msg = "concat needs at least one tensor"
        raise ShapeMismatchError(msg)
    ax = axis % tensors[0].ndim
    reference = tensors[0].shape
    for tensor in tensors[1:]:
        if tensor.ndim != len(reference) or any(
            tensor.shape[d] != reference[d] for d in range(len(reference)) if d != ax
        ):
            msg = f"concat along axis {ax}: shapes {reference} and {tensor.shape} disagree"
            raise ShapeMismatchError(msg)
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, offsets, axis=ax))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward, "concat")


def split(x: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    ax = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[ax]:
        msg = f"split sizes {list(sizes)} do not add up to extent {x.shape[ax]} of axis {ax}"
        raise ShapeMismatchError(msg)
    parts = []
    start = 0
    for size in sizes:
        index = [slice(None)] * x.ndim
        index[ax] = slice(start, start + size)
        parts.append(getitem(x, tuple(index)))
        start += size
    return parts


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return [np.take(g, i, axis=ax) for i in range(len(tensors))]

    return make_result(out, tuple(tensors), backward, "stack")


def _is_basic_index(index: Any) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(item, int | slice) or item is None or item is Ellipsis for item in items)


def getitem(x: Tensor, index: Any) -> Tensor:
    out = np.asarray(x.data[index])
    basic = _is_basic_index(index)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        if basic:
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return make_result(out.copy() if basic else out, (x,), backward, "getitem")


def take_along_axis(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    ax = axis % x.ndim
    out = np.take_along_axis(x.data, indices, axis=ax)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros_like(x.data)
        full = list(np.ix_(*[np.arange(n) for n in indices.shape]))
        full[ax] = indices
        np.add.at(grad, tuple(full), g)
        return (grad,)

    return make_result(out, (x,), backward, "take_along_axis")


# Detached values.  Inside ``grad_check`` the values are recorded at the base point and
# replayed during the finite-difference passes, so detached factors stay constant there too.


class DetachTape:
    def __init__(self) -> None:
        self.values: list[np.ndarray] = []
        self.replaying = False
        self.cursor = 0

    def visit(self, value: np.ndarray) -> np.ndarray:
        if not self.replaying:
            self.values.append(value.copy())
            return value
        recorded = self.values[self.cursor]
        self.cursor += 1
        return recorded


_DETACH_TAPE: ContextVar[DetachTape | None] = ContextVar("deskdet_detach_tape", default=None)


@contextmanager
def detach_tape(tape: DetachTape, replay: bool = False) -> Iterator[DetachTape]:
    tape.replaying = replay
    tape.cursor = 0
    token = _DETACH_TAPE.set(tape)
    try:
        yield tape
    finally:
        _DETACH_TAPE.reset(token)


def stop_gradient(x: Tensor) -> Tensor:
    tape = _DETACH_TAPE.get()
    value = x.data if tape is None else tape.visit(x.data)
    return Tensor(value, dtype=x.dtype)


# Convolution, pooling, resize, normalization


def _conv_windows(
    x: np.ndarray, kernel: tuple[int, int], stride: int, padding: tuple[int, int]
) -> tuple[np.ndarray, tuple[int, ...]]:
    ph, pw = padding
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = sliding_window_view(padded, kernel, axis=(2, 3))[:, :, ::stride, ::stride]
    return windows, padded.shape


def _conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check_conv(
    x: Tensor, weight: Tensor, bias: Tensor | None, stride: int, padding: tuple[int, int], groups: int
) -> tuple[int, int]:
    if x.ndim != 4 or weight.ndim != 4:  # noqa: PLR2004
        msg = f"conv2d expects 4-d input and weight, got {x.shape} and {weight.shape}"
        raise ShapeMismatchError(msg)
    if groups < 1 or x.shape[1] % groups or weight.shape[0] % groups:
        msg = f"groups={groups} must divide input channels {x.shape[1]} and output channels {weight.shape[0]}"
        raise ShapeMismatchError(msg)
    if weight.shape[1] * groups != x.shape[1]:
        msg = f"weight expects {weight.shape[1] * groups} input channels, input has {x.shape[1]}"
        raise ShapeMismatchError(msg)
    if bias is not None and bias.shape != (weight.shape[0],):
        msg = f"bias shape {bias.shape} does not match {weight.shape[0]} output channels"
        raise ShapeMismatchError(msg)
    if stride < 1 or min(padding) < 0:
        msg = f"stride must be >= 1 and padding >= 0, got stride={stride} padding={padding}"
        raise ShapeMismatchError(msg)
    out_h = _conv_output_extent(x.shape[2], weight.shape[2], stride, padding[0])
    out_w = _conv_output_extent(x.shape[3], weight.shape[3], stride, padding[1])
    if out_h <= 0 or out_w <= 0:
        msg = f"conv2d output extent {out_h}x{out_w} is not positive for input {x.shape}"
        raise ShapeMismatchError(msg)
    return out_h, out_w


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int | tuple[int, int] = 0,
    groups: int = 1,
) -> Tensor:
    """2-d cross-correlation over an N,C,H,W input.

    Args:
        x: Input of shape [N, C_in, H, W]
        weight: Kernel of shape [C_out, C_in / groups, kH, kW]
        bias: Optional bias of shape [C_out]
        stride: Step between windows
        padding: Zero padding, one value or (rows, cols)
        groups: Number of channel groups; groups == C_in gives a depthwise convolution

    Returns:
        Output of shape [N, C_out, H', W'].

    """
    pad = _pair(padding)
    out_h, out_w = _check_conv(x, weight, bias, stride, pad, groups)
    n, c_in = x.shape[:2]
    c_out, c_group, kh, kw = weight.shape
    o_group = c_out // groups

    windows, padded_shape = _conv_windows(x.data, (kh, kw), stride, pad)
    grouped = windows.reshape(n, groups, c_group, out_h, out_w, kh, kw)
    kernels = weight.data.reshape(groups, o_group, c_group, kh, kw)
    out = np.einsum("ngchwij,gocij->ngohw", grouped, kernels, optimize=True).reshape(n, c_out, out_h, out_w)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents: tuple[Tensor, ...] = (x, weight) if bias is None else (x, weight, bias)

    def backward(g: np.ndarray) -> list[np.ndarray]:
        g_grouped = g.reshape(n, groups, o_group, out_h, out_w)
        grad_w = np.einsum("ngohw,ngchwij->gocij", g_grouped, grouped, optimize=True).reshape(weight.shape)
        grad_windows = np.einsum("ngohw,gocij->ngchwij", g_grouped, kernels, optimize=True)
        grad_windows = grad_windows.reshape(n, c_in, out_h, out_w, kh, kw)
        grad_padded = np.zeros(padded_shape, dtype=x.dtype)
        rows_end = stride * (out_h - 1) + 1
        cols_end = stride * (out_w - 1) + 1
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i : i + rows_end : stride, j : j + cols_end : stride] += grad_windows[..., i, j]
        ph, pw = pad
        grad_x = grad_padded[:, :, ph : padded_shape[2] - ph, pw : padded_shape[3] - pw]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result(out, parents, backward, "conv2d")


def conv2d_reference(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    stride: int = 1,
    padding: int | tuple[int, int] = 0,
    groups: int = 1,
) -> np.ndarray:
    """Direct loop convolution used as the oracle for ``conv2d``."""
    ph, pw = _pair(padding)
    n, c_in, h, w = x.shape
    c_out, c_group, kh, kw = weight.shape
    o_group = c_out // groups
    out_h = _conv_output_extent(h, kh, stride, ph)
    out_w = _conv_output_extent(w, kw, stride, pw)
    padded = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((n, c_out, out_h, out_w), dtype=x.dtype)
    for b in range(n):
        for co in range(c_out):
            first_in = (co // o_group) * c_group
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0 if bias is None else float(bias[co])
                    for ci in range(c_group):
                        for ky in range(kh):
                            for kx in range(kw):
                                pixel = padded[b, first_in + ci, oy * stride + ky, ox * stride + kx]
                                acc += pixel * weight[co, ci, ky, kx]
                    out[b, co, oy, ox] = acc
    return out


def max_pool2d(x: Tensor, kernel: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Window maximum; ties send the gradient to the first maximum in row-major window order."""
    step = kernel if stride is None else stride
    if kernel < 1 or step < 1 or padding < 0 or padding > kernel // 2:
        msg = f"invalid pooling configuration kernel={kernel} stride={step} padding={padding}"
        raise ShapeMismatchError(msg)
    n, c, h, w = x.shape
    out_h = _conv_output_extent(h, kernel, step, padding)
    out_w = _conv_output_extent(w, kernel, step, padding)
    if out_h <= 0 or out_w <= 0:
        msg = f"max_pool2d output extent {out_h}x{out_w} is not positive for input {x.shape}"
        raise ShapeMismatchError(msg)

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
    windows = sliding_window_view(padded, (kernel, kernel), axis=(2, 3))[:, :, ::step, ::step]
    flat = windows[:, :, :out_h, :out_w].reshape(n, c, out_h, out_w, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        rows = np.arange(out_h)[None, None, :, None] * step + arg // kernel
        cols = np.arange(out_w)[None, None, None, :] * step + arg % kernel
        batch = np.arange(n)[:, None, None, None]
        chan = np.arange(c)[None, :, None, None]
        grad = np.zeros(padded.shape, dtype=x.dtype)
        np.add.at(grad, (batch, chan, rows, cols), g)
        return (grad[:, :, padding : padding + h, padding : padding + w],)

    return make_result(out, (x,), backward, "max_pool2d")


def upsample_nearest2x(x: Tensor) -> Tensor:
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return make_result(out, (x,), backward, "upsample_nearest2x")


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Batch normalization over N,H,W per channel.

    In training mode the batch statistics normalize the input and the running buffers are
    updated in place; in eval mode the running buffers are used.
    """
    axes = (0, 2, 3)
    scale = gamma.data[None, :, None, None]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        count = x.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (count / max(count - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = scale * xhat + beta.data[None, :, None, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_gamma = (g * xhat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        dxhat = g * scale
        if training:
            count = x.size // x.shape[1]
            grad_x = (
                inv_std[None, :, None, None]
                / count
                * (
                    count * dxhat
                    - dxhat.sum(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
                )
            )
        else:
            grad_x = dxhat * inv_std[None, :, None, None]
        return grad_x, grad_gamma, grad_beta

    return make_result(out, (x, gamma, beta), backward, "batchnorm2d")
