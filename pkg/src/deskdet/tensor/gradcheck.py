from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel

from deskdet.exceptions import NonDeterministicFunctionError, NonScalarLossError
from deskdet.tensor.functional import DetachTape, detach_tape
from deskdet.tensor.tensor import Tensor, no_grad

DEFAULT_FLOOR = 1e-2


class GradCheckReport(BaseModel):
    """Worst disagreement between analytic and central-difference gradients."""

    max_rel_err: float
    worst_coordinate: tuple[int, ...]
    worst_input: int
    analytic: float
    numeric: float
    coordinates_checked: int


def _scalar(out: Tensor) -> float:
    if out.size != 1:
        raise NonScalarLossError(out.shape)
    return float(out.data.reshape(-1)[0])


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    floor: float = DEFAULT_FLOOR,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central finite differences.

    Every coordinate of every input with ``requires_grad`` is perturbed by +/-eps. Values
    passed through ``stop_gradient`` are frozen at the unperturbed point, so the numeric
    derivative is taken of the same function the analytic pass differentiates.

    Args:
        fn: Function of the inputs returning a scalar tensor
        inputs: Tensors to differentiate with respect to
        eps: Perturbation size
        floor: Lower bound of the relative-error denominator

    Returns:
        The report for the worst coordinate.

    """
    with no_grad():
        first = _scalar(fn(*inputs))
        second = _scalar(fn(*inputs))
    if first != second:
        raise NonDeterministicFunctionError(first, second)

    tape = DetachTape()
    for tensor in inputs:
        tensor.zero_grad()
    with detach_tape(tape):
        out = fn(*inputs)
    _scalar(out)
    out.backward()

    worst = GradCheckReport(
        max_rel_err=0.0, worst_coordinate=(), worst_input=-1, analytic=0.0, numeric=0.0, coordinates_checked=0
    )
    checked = 0
    for position, tensor in enumerate(inputs):
        if not tensor.requires_grad:
            continue
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        for coordinate in np.ndindex(*tensor.shape):
            original = tensor.data[coordinate].item()
            with no_grad():
                tensor.data[coordinate] = original + eps
                with detach_tape(tape, replay=True):
                    plus = _scalar(fn(*inputs))
                tensor.data[coordinate] = original - eps
                with detach_tape(tape, replay=True):
                    minus = _scalar(fn(*inputs))
                tensor.data[coordinate] = original
            numeric = (plus - minus) / (2.0 * eps)
            exact = float(analytic[coordinate])
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            checked += 1
            if rel > worst.max_rel_err or worst.worst_input < 0:
                worst = GradCheckReport(
                    max_rel_err=rel,
                    worst_coordinate=tuple(int(i) for i in coordinate),
                    worst_input=position,
                    analytic=exact,
                    numeric=numeric,
                    coordinates_checked=0,
                )
    return worst.model_copy(update={"coordinates_checked": checked})
