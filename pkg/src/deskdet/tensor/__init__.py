from deskdet.tensor import functional
from deskdet.tensor.gradcheck import GradCheckReport, grad_check
from deskdet.tensor.tensor import (
    GradGraph,
    Tensor,
    backward,
    default_dtype,
    get_default_dtype,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "GradCheckReport",
    "GradGraph",
    "Tensor",
    "backward",
    "default_dtype",
    "functional",
    "get_default_dtype",
    "grad_check",
    "is_grad_enabled",
    "no_grad",
]
