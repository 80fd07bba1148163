"""Finite-difference gradient suites over the differentiable ops, blocks, attention modules and losses."""

from __future__ import annotations

import zlib
from collections.abc import Callable, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict

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
from deskdet.constants import ClsLossKind, IoULossKind
from deskdet.head.anchors import make_anchor_points
from deskdet.head.assigner import assign_targets
from deskdet.head.head import HeadOutput
from deskdet.losses.cls import cls_loss
from deskdet.losses.detection import detection_loss
from deskdet.losses.dfl import dfl_loss
from deskdet.losses.iou import WiouState, iou_loss
from deskdet.nn.blocks import (
    C2fParams,
    ConvBlockParams,
    CSPParams,
    SPPFParams,
    c2f_forward,
    cbs_forward,
    csp_forward,
    sppf_forward,
)
from deskdet.tensor import Tensor, default_dtype, grad_check
from deskdet.tensor import functional as F
from deskdet.types import BoxXYXY, GroundTruth

LOSS_TOLERANCE = 1e-4
ATTENTION_TOLERANCE = 1e-3
SUITES = ("ops", "blocks", "attention", "losses")

Case = tuple[Callable[..., Tensor], list[Tensor]]


class GradCase(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str
    suite: str
    tolerance: float
    build: Callable[[np.random.Generator], Case]


class GradCaseResult(BaseModel):
    name: str
    suite: str
    seeds: int
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _leaf(rng: np.random.Generator, *shape: int, scale: float = 1.0) -> Tensor:
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _boxes(rng: np.random.Generator, n: int, requires_grad: bool) -> Tensor:
    xy = rng.uniform(0.0, 10.0, size=(n, 2))
    wh = rng.uniform(1.0, 5.0, size=(n, 2))
    return Tensor(np.concatenate([xy, xy + wh], axis=1), requires_grad=requires_grad)


def _op_case(
    op: Callable[[Tensor], Tensor], *shape: int, positive: bool = False
) -> Callable[[np.random.Generator], Case]:
    def build(rng: np.random.Generator) -> Case:
        x = Tensor(rng.uniform(0.5, 2.0, size=shape), requires_grad=True) if positive else _leaf(rng, *shape)
        weights = Tensor(rng.normal(size=op(x.detach()).shape))
        return (lambda t: F.sum(op(t) * weights)), [x]

    return build


def _conv(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 2, 4, 5, 5)
    w = _leaf(rng, 4, 2, 3, 3)
    b = _leaf(rng, 4)
    weights = Tensor(rng.normal(size=(2, 4, 3, 3)))
    return (lambda x_, w_, b_: F.sum(F.conv2d(x_, w_, b_, 2, 1, 2) * weights)), [x, w, b]


def _matmul(rng: np.random.Generator) -> Case:
    a = _leaf(rng, 3, 4)
    b = _leaf(rng, 4, 2)
    weights = Tensor(rng.normal(size=(3, 2)))
    return (lambda a_, b_: F.sum(F.matmul(a_, b_) * weights)), [a, b]


def _batchnorm(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 3, 2, 3, 3)
    gamma = _leaf(rng, 2)
    beta = _leaf(rng, 2)
    mean, var = np.zeros(2), np.ones(2)
    weights = Tensor(rng.normal(size=x.shape))
    return (lambda x_, g_, b_: F.sum(F.batchnorm2d(x_, g_, b_, mean, var, training=True) * weights)), [
        x,
        gamma,
        beta,
    ]


def _gather(rng: np.random.Generator) -> Case:
    x = _leaf(rng, 3, 5)
    index = rng.integers(0, 5, size=(3, 2))
    weights = Tensor(rng.normal(size=(3, 2)))
    return (lambda x_: F.sum(F.take_along_axis(x_, index, axis=1) * weights)), [x]


def _module_case(
    make: Callable[[int, np.random.Generator], Callable[[Tensor], Tensor]], shape: tuple[int, ...]
) -> Callable[[np.random.Generator], Case]:
    def build(rng: np.random.Generator) -> Case:
        forward = make(shape[1], rng)
        x = _leaf(rng, *shape)
        weights = Tensor(rng.normal(size=forward(x.detach()).shape))
        return (lambda x_: F.sum(forward(x_) * weights)), [x]

    return build


def _cbs(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = ConvBlockParams(c, c, rng, kernel=3)
    return lambda x: cbs_forward(x, params)


def _c2f(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = C2fParams(c, c, rng, repeats=1)
    return lambda x: c2f_forward(x, params, shortcut=True)


def _csp(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = CSPParams(c, c, rng, repeats=1)
    return lambda x: csp_forward(x, params)


def _sppf(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = SPPFParams(c, c, rng, kernel=3)
    return lambda x: sppf_forward(x, params)


def _bra(routed: int) -> Callable[[int, np.random.Generator], Callable[[Tensor], Tensor]]:
    def make(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
        params = BraParams(c, rng, regions=2, routed=routed, heads=2)
        return lambda x: bra_forward(x, params)

    return make


def _se(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = SEParams(c, rng, reduction=2)
    return lambda x: se_forward(x, params)


def _eca(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = ECAParams(c, rng, kernel=3)
    return lambda x: eca_forward(x, params)


def _cbam(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = CBAMParams(c, rng, reduction=2, spatial_kernel=3)
    return lambda x: cbam_forward(x, params)


def _ca(c: int, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    params = CAParams(c, rng, reduction=2)
    return lambda x: ca_forward(x, params)


def _box_loss(variant: IoULossKind) -> Callable[[np.random.Generator], Case]:
    def build(rng: np.random.Generator) -> Case:
        pred = _boxes(rng, 4, requires_grad=True)
        target = _boxes(rng, 4, requires_grad=False)
        if variant is IoULossKind.WIOU:
            return (lambda p: F.sum(iou_loss(p, target, variant, WiouState(running_mean=0.7)))), [pred]
        return (lambda p: F.sum(iou_loss(p, target, variant))), [pred]

    return build


def _dfl(rng: np.random.Generator) -> Case:
    reg_max = 6
    logits = _leaf(rng, 3, 4, reg_max + 1)
    target = rng.uniform(0.0, reg_max - 0.01, size=(3, 4))
    return (lambda x: F.sum(dfl_loss(x, target))), [logits]


def _cls(kind: ClsLossKind) -> Callable[[np.random.Generator], Case]:
    def build(rng: np.random.Generator) -> Case:
        logits = _leaf(rng, 6, 3, scale=2.0)
        targets = np.where(rng.uniform(size=(6, 3)) < 0.3, rng.uniform(0.1, 1.0, size=(6, 3)), 0.0)
        return (lambda x: cls_loss(x, targets, kind)), [logits]

    return build


def _detection(rng: np.random.Generator) -> Case:
    reg_max = 4
    anchors = make_anchor_points(32, [8, 16])
    reg = _leaf(rng, 1, anchors.count, 4 * (reg_max + 1))
    cls = _leaf(rng, 1, anchors.count, 1)
    gt = GroundTruth(box=BoxXYXY(x1=4.0, y1=6.0, x2=22.0, y2=26.0), class_id=0)
    scores = rng.uniform(0.1, 0.9, size=(anchors.count, 1))
    centres = anchors.points
    pred_boxes = np.concatenate([centres - 6.0, centres + 6.0], axis=1)
    assignment = assign_targets(anchors, [gt], scores, pred_boxes, top_k=4)

    def loss(r: Tensor, c: Tensor) -> Tensor:
        out = HeadOutput(reg=r, cls=c, grids=anchors.grids, reg_max=reg_max)
        return detection_loss(out, [assignment], anchors)[0]

    return loss, [reg, cls]


CASES: list[GradCase] = [
    GradCase(name="matmul", suite="ops", tolerance=LOSS_TOLERANCE, build=_matmul),
    GradCase(name="conv2d", suite="ops", tolerance=LOSS_TOLERANCE, build=_conv),
    GradCase(name="batchnorm2d", suite="ops", tolerance=LOSS_TOLERANCE, build=_batchnorm),
    GradCase(name="take_along_axis", suite="ops", tolerance=LOSS_TOLERANCE, build=_gather),
    GradCase(name="softmax", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.softmax, 3, 5)),
    GradCase(name="log_softmax", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.log_softmax, 3, 5)),
    GradCase(name="silu", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.silu, 4, 3)),
    GradCase(name="hardswish", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.hardswish, 4, 3)),
    GradCase(name="atan", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.atan, 4, 3)),
    GradCase(name="sqrt", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.sqrt, 4, 3, positive=True)),
    GradCase(
        name="max_pool2d",
        suite="ops",
        tolerance=LOSS_TOLERANCE,
        build=_op_case(lambda t: F.max_pool2d(t, 3, 1, 1), 1, 2, 4, 4),
    ),
    GradCase(name="upsample", suite="ops", tolerance=LOSS_TOLERANCE, build=_op_case(F.upsample_nearest2x, 1, 2, 2, 2)),
    GradCase(name="cbs", suite="blocks", tolerance=ATTENTION_TOLERANCE, build=_module_case(_cbs, (2, 2, 4, 4))),
    GradCase(name="c2f", suite="blocks", tolerance=ATTENTION_TOLERANCE, build=_module_case(_c2f, (2, 4, 4, 4))),
    GradCase(name="csp", suite="blocks", tolerance=ATTENTION_TOLERANCE, build=_module_case(_csp, (2, 4, 4, 4))),
    GradCase(name="sppf", suite="blocks", tolerance=ATTENTION_TOLERANCE, build=_module_case(_sppf, (2, 4, 4, 4))),
    GradCase(name="bra", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_bra(4), (1, 4, 4, 4))),
    GradCase(
        name="bra_sparse", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_bra(2), (1, 4, 4, 4))
    ),
    GradCase(name="se", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_se, (2, 4, 3, 3))),
    GradCase(name="eca", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_eca, (2, 4, 3, 3))),
    GradCase(name="cbam", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_cbam, (2, 4, 3, 3))),
    GradCase(name="ca", suite="attention", tolerance=ATTENTION_TOLERANCE, build=_module_case(_ca, (2, 4, 3, 3))),
    *[
        GradCase(name=f"{variant.value}_loss", suite="losses", tolerance=LOSS_TOLERANCE, build=_box_loss(variant))
        for variant in IoULossKind
        if variant is not IoULossKind.IOU
    ],
    GradCase(name="dfl_loss", suite="losses", tolerance=LOSS_TOLERANCE, build=_dfl),
    GradCase(name="bce_loss", suite="losses", tolerance=LOSS_TOLERANCE, build=_cls(ClsLossKind.BCE)),
    GradCase(name="varifocal_loss", suite="losses", tolerance=LOSS_TOLERANCE, build=_cls(ClsLossKind.VARIFOCAL)),
    GradCase(name="detection_loss", suite="losses", tolerance=LOSS_TOLERANCE, build=_detection),
]


def run_case(case: GradCase, seeds: int) -> GradCaseResult:
    worst = 0.0
    with default_dtype(np.float64):
        for seed in range(seeds):
            fn, inputs = case.build(np.random.default_rng([seed, zlib.crc32(case.name.encode("utf-8"))]))
            worst = max(worst, grad_check(fn, inputs).max_rel_err)
    return GradCaseResult(name=case.name, suite=case.suite, seeds=seeds, max_rel_err=worst, tolerance=case.tolerance)


def run_suites(suites: Sequence[str] | None = None, seeds: int = 20) -> list[GradCaseResult]:
    """Results of every case in ``suites`` (all by default), worst relative to its tolerance first."""
    selected = set(suites or SUITES)
    unknown = selected - set(SUITES)
    if unknown:
        msg = f"unknown gradient suites {sorted(unknown)}; available: {', '.join(SUITES)}"
        raise ValueError(msg)
    results = [run_case(case, seeds) for case in CASES if case.suite in selected]
    return sorted(results, key=lambda r: r.max_rel_err / r.tolerance, reverse=True)
