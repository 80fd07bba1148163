"""Ablation sweeps: one short toy run per variant along a single axis, reported as a comparison table."""

from __future__ import annotations

from pathlib import Path
from typing import Any

from pydantic import BaseModel
from rich.table import Table

from deskdet.constants import AblationAxis, AttentionKind, IoULossKind, NeckPreset, PyramidLevel
from deskdet.data.dataset import DatasetDescriptor
from deskdet.evaluate import evaluate_detector
from deskdet.logging import logger
from deskdet.model.config import ModelConfig
from deskdet.model.detector import Detector, load_detector
from deskdet.training.config import TrainConfig
from deskdet.training.trainer import train_toy

ATTENTION_SWEEP = (AttentionKind.SE, AttentionKind.ECA, AttentionKind.CBAM, AttentionKind.CA, AttentionKind.BRA)
NECK_SWEEP = (NeckPreset.FPN_PANET, NeckPreset.BIFPN, NeckPreset.BGF)
LOSS_SWEEP = (
    IoULossKind.GIOU,
    IoULossKind.DIOU,
    IoULossKind.CIOU,
    IoULossKind.EIOU,
    IoULossKind.SIOU,
    IoULossKind.WIOU,
)
_THREE_LEVELS = [PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5]
_FOUR_LEVELS = [PyramidLevel.P2, *_THREE_LEVELS]


class AblationVariant(BaseModel):
    name: str
    code: str
    model: ModelConfig


class AblationRow(BaseModel):
    variant: str
    code: str
    params: int
    final_loss: float
    box: float
    cls: float
    dfl: float
    precision: float | None = None
    recall: float | None = None
    map50: float | None = None
    map50_95: float | None = None


class AblationTable(BaseModel):
    axis: AblationAxis
    rows: list[AblationRow]


def _merge(base: dict[str, Any], updates: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _variant(base: ModelConfig, name: str, code: str, updates: dict[str, Any]) -> AblationVariant:
    payload = _merge(base.model_dump(), updates)
    return AblationVariant(name=name, code=code, model=ModelConfig.model_validate(payload))


def ablation_variants(axis: AblationAxis | str, base: ModelConfig) -> list[AblationVariant]:
    """The model configs of one sweep, each differing from ``base`` along ``axis`` only."""
    axis = AblationAxis.from_string(axis)
    if axis is AblationAxis.ATTENTION:
        return [_variant(base, kind.value, kind.code, {"attention": {"kind": kind}}) for kind in ATTENTION_SWEEP]
    if axis is AblationAxis.NECK:
        return [
            _variant(
                base,
                preset.value,
                preset.value,
                {"neck": {"preset": preset, "graph": None, "levels": None}, "head": {"strides": None}},
            )
            for preset in NECK_SWEEP
        ]
    if axis is AblationAxis.LOSS:
        return [
            _variant(base, variant.value, variant.value[0].upper(), {"loss": {"reg_variant": variant}})
            for variant in LOSS_SWEEP
        ]
    steps: list[tuple[str, NeckPreset, AttentionKind, list[PyramidLevel]]] = [
        ("baseline", NeckPreset.FPN_PANET, AttentionKind.NONE, _THREE_LEVELS),
        ("+gfpn", NeckPreset.BGF, AttentionKind.NONE, _THREE_LEVELS),
        ("+bra", NeckPreset.BGF, AttentionKind.BRA, _THREE_LEVELS),
        ("+p2", NeckPreset.BGF, AttentionKind.BRA, _FOUR_LEVELS),
    ]
    return [
        _variant(
            base,
            name,
            name,
            {
                "neck": {"preset": preset, "graph": None, "levels": levels},
                "attention": {"kind": kind},
                "head": {"strides": None},
            },
        )
        for name, preset, kind, levels in steps
    ]


def run_ablation(
    axis: AblationAxis | str,
    base: ModelConfig,
    train_cfg: TrainConfig,
    dataset: DatasetDescriptor,
    out_dir: str | Path,
    workers: int = 1,
) -> AblationTable:
    """Train every variant of the sweep with ``train_cfg`` and score it on the validation split when present."""
    axis = AblationAxis.from_string(axis)
    out_dir = Path(out_dir)
    evaluate = bool(dataset.splits.get(train_cfg.val_split))
    rows = []
    for variant in ablation_variants(axis, base):
        logger.info(f"ablation {axis.value}: training variant {variant.name}")
        result = train_toy(variant.model, train_cfg, dataset, out_dir / variant.name.lstrip("+"), workers=workers)
        last = result.losses[-1] if result.losses else None
        row = AblationRow(
            variant=variant.name,
            code=variant.code,
            params=Detector(variant.model).num_parameters(),
            final_loss=last.total if last else 0.0,
            box=last.box if last else 0.0,
            cls=last.cls if last else 0.0,
            dfl=last.dfl if last else 0.0,
        )
        if evaluate:
            report = evaluate_detector(
                load_detector(result.checkpoint),
                dataset,
                train_cfg.val_split,
                train_cfg.eval_conf,
                train_cfg.eval_nms_iou,
                workers=workers,
            )
            row.precision = report.precision
            row.recall = report.recall
            row.map50 = report.map50
            row.map50_95 = report.map50_95
        rows.append(row)
    return AblationTable(axis=axis, rows=rows)


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_ablation(table: AblationTable) -> Table:
    rich_table = Table(title=f"Ablation over {table.axis.value}")
    for column in ("variant", "code", "params", "P", "R", "mAP50", "mAP50-95", "loss"):
        rich_table.add_column(column, justify="left" if column in ("variant", "code") else "right")
    for row in table.rows:
        rich_table.add_row(
            row.variant,
            row.code,
            f"{row.params:,}",
            _fmt(row.precision),
            _fmt(row.recall),
            _fmt(row.map50),
            _fmt(row.map50_95),
            f"{row.final_loss:.4f}",
        )
    return rich_table
