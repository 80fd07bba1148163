from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from typing import Self

import numpy as np

from deskdet.exceptions import StateDictMismatchError
from deskdet.tensor import Tensor, get_default_dtype


class Module:
    """Container of tensors and child modules.

    Public attributes holding a ``Tensor``, a ``Module``, or a list/dict of them are discovered
    by walking ``vars(self)`` in insertion order. Tensors with ``requires_grad`` are parameters,
    the rest are buffers.
    """

    training: bool = True

    def _children(self) -> Iterator[tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield name, value

    def named_tensors(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            yield from _walk(f"{prefix}{name}", value)

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        return ((name, t) for name, t in self.named_tensors() if t.requires_grad)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def named_buffers(self) -> Iterator[tuple[str, Tensor]]:
        return ((name, t) for name, t in self.named_tensors() if not t.requires_grad)

    def modules(self) -> Iterator[Module]:
        yield self
        for _, value in self._children():
            yield from _walk_modules(value)

    def train(self, mode: bool = True) -> Self:
        for module in self.modules():
            module.training = mode
        return self

    def eval(self) -> Self:
        return self.train(False)

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = dict(self.named_tensors())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        wrong_shape = sorted(k for k in set(own) & set(state) if tuple(state[k].shape) != own[k].shape)
        if missing or unexpected or wrong_shape:
            raise StateDictMismatchError(missing, unexpected, wrong_shape)
        for name, tensor in own.items():
            tensor.data[...] = state[name]


def _walk(prefix: str, value: object) -> Iterator[tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        yield prefix, value
    elif isinstance(value, Module):
        yield from value.named_tensors(f"{prefix}.")
    elif isinstance(value, list | tuple):
        for index, item in enumerate(value):
            yield from _walk(f"{prefix}.{index}", item)
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(f"{prefix}.{key}", item)


def _walk_modules(value: object) -> Iterator[Module]:
    if isinstance(value, Module):
        yield from value.modules()
    elif isinstance(value, list | tuple):
        for item in value:
            yield from _walk_modules(item)
    elif isinstance(value, dict):
        for item in value.values():
            yield from _walk_modules(item)


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=get_default_dtype())


def buffer(data: np.ndarray) -> Tensor:
    return Tensor(data, dtype=get_default_dtype())


def uniform_weight(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    """Parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return parameter(rng.uniform(-bound, bound, size=shape))
