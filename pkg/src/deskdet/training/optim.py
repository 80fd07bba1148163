from __future__ import annotations

from collections.abc import Iterable, Mapping

import numpy as np

from deskdet.exceptions import StateDictMismatchError
from deskdet.tensor import Tensor

OPTIM_PREFIX = "optim."


def linear_lr(step: int, total: int, lr0: float, lr_final: float) -> float:
    """Linear interpolation from lr0 at step 0 to lr_final at the last step; constant when they are equal."""
    if lr0 == lr_final or total <= 1:
        return lr0
    fraction = min(max(step / (total - 1), 0.0), 1.0)
    return lr0 + (lr_final - lr0) * fraction


class SGD:
    """SGD with (Nesterov) momentum; weight decay only on tensors with two or more dimensions."""

    def __init__(
        self,
        named_params: Iterable[tuple[str, Tensor]],
        momentum: float = 0.0,
        nesterov: bool = False,
        weight_decay: float = 0.0,
    ) -> None:
        self.params = dict(named_params)
        self.momentum = momentum
        self.nesterov = nesterov
        self.weight_decay = weight_decay
        self.buffers = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float) -> None:
        for name, param in self.params.items():
            if param.grad is None:
                continue
            grad = param.grad
            if self.weight_decay and param.ndim >= 2:  # noqa: PLR2004
                grad = grad + self.weight_decay * param.data
            buf = self.buffers[name]
            buf *= self.momentum
            buf += grad
            update = grad + self.momentum * buf if self.nesterov else buf
            param.data -= lr * update

    def state_dict(self) -> dict[str, np.ndarray]:
        return {f"{OPTIM_PREFIX}{name}": buf.copy() for name, buf in self.buffers.items()}

    def load_state_dict(self, tensors: Mapping[str, np.ndarray]) -> None:
        state = {name[len(OPTIM_PREFIX) :]: v for name, v in tensors.items() if name.startswith(OPTIM_PREFIX)}
        missing = sorted(set(self.buffers) - set(state))
        unexpected = sorted(set(state) - set(self.buffers))
        wrong_shape = sorted(k for k in set(state) & set(self.buffers) if state[k].shape != self.buffers[k].shape)
        if missing or unexpected or wrong_shape:
            raise StateDictMismatchError(missing, unexpected, wrong_shape)
        for name, buf in self.buffers.items():
            buf[...] = state[name]
