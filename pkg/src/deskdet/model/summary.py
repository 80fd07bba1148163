from __future__ import annotations

from pydantic import BaseModel
from rich.table import Table

from deskdet.model.backbone import backbone_shapes
from deskdet.model.config import ModelConfig
from deskdet.model.detector import Detector


class SummaryRow(BaseModel):
    section: str
    name: str
    op: str
    level: str
    shape: tuple[int, int, int]
    params: int


class ModelSummary(BaseModel):
    input_size: int
    rows: list[SummaryRow]
    total_params: int

    def section(self, name: str) -> list[SummaryRow]:
        return [row for row in self.rows if row.section == name]


def summarize(config: ModelConfig, input_size: int | None = None) -> ModelSummary:
    """Per-stage, per-node and per-scale shapes and parameter counts of the model at ``input_size``."""
    if input_size is not None and input_size != config.input_size:
        config = config.at_size(input_size)
    detector = Detector(config)
    rows: list[SummaryRow] = []

    backbone = detector.backbone
    stage_params = [backbone.stem.num_parameters()]
    stage_params += [stage.num_parameters() for stage in backbone.stages.values()]
    stage_params.append(backbone.sppf.num_parameters())
    for (name, shape), params in zip(backbone_shapes(config.backbone, config.input_size), stage_params, strict=True):
        level = name.removeprefix("stage_") if name.startswith("stage_") else "-"
        rows.append(SummaryRow(section="backbone", name=name, op="cbs+c2f", level=level, shape=shape, params=params))
    rows[0].op = "cbs"
    rows[-1].op = "sppf"
    rows[-1].level = "p5"

    graph = detector.neck.graph
    for node_id in detector.neck.order:
        node = graph.node(node_id)
        rows.append(
            SummaryRow(
                section="neck",
                name=node_id,
                op=node.op.value,
                level=node.level.value,
                shape=detector.neck.shapes[node_id],
                params=detector.neck.node_parameters(node_id),
            )
        )

    for level, stride, branch in zip(config.output_levels, config.strides, detector.head.branches, strict=True):
        side = config.input_size // stride
        outputs = 4 * (config.head.reg_max + 1) + config.head.num_classes
        rows.append(
            SummaryRow(
                section="head",
                name=f"grid {side}x{side}",
                op=f"stride {stride}",
                level=level.value,
                shape=(outputs, side, side),
                params=branch.num_parameters(),
            )
        )
    return ModelSummary(input_size=config.input_size, rows=rows, total_params=detector.num_parameters())


def render_summary(summary: ModelSummary) -> Table:
    table = Table(title=f"Model at {summary.input_size}x{summary.input_size}")
    for column in ("section", "name", "op", "level", "output", "params"):
        table.add_column(column, justify="right" if column == "params" else "left")
    for row in summary.rows:
        c, h, w = row.shape
        table.add_row(row.section, row.name, row.op, row.level, f"{c}x{h}x{w}", f"{row.params:,}")
    table.add_section()
    table.add_row("total", "", "", "", "", f"{summary.total_params:,}")
    return table
