from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from deskdet.attention.factory import AttentionParams, AttentionSpec, attention_forward, build_attention
from deskdet.constants import AttentionKind, NeckOp, PyramidLevel
from deskdet.exceptions import ShapeMismatchError
from deskdet.logging import logger
from deskdet.neck.fusion import FusionNodeParams, fuse_concat, fuse_weighted
from deskdet.neck.graph import ChannelPlan, NeckGraph, NodeShape, infer_shapes
from deskdet.nn.blocks import C2fParams, ConvBlockParams, CSPParams, c2f_forward, cbs_forward, csp_forward
from deskdet.nn.module import Module
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F

NodeParams = ConvBlockParams | CSPParams | C2fParams | FusionNodeParams | AttentionParams


class NeckExecutor(Module):
    """A validated neck graph with the parameters of every node, callable on backbone taps."""

    def __init__(
        self,
        graph: NeckGraph,
        plan: ChannelPlan,
        input_size: int,
        attention: AttentionSpec,
        rng: np.random.Generator,
    ) -> None:
        self.graph = graph
        self.input_size = input_size
        self.shapes: dict[str, NodeShape] = infer_shapes(graph, plan, input_size, attention)
        self.order = graph.topological_order()
        self.nodes: dict[str, NodeParams] = {}
        for node_id in self.order:
            params = self._build_node(node_id, attention, rng)
            if params is not None:
                self.nodes[node_id] = params

    def _build_node(self, node_id: str, attention: AttentionSpec, rng: np.random.Generator) -> NodeParams | None:
        node = self.graph.node(node_id)
        sources = self.graph.inputs_of(node_id)
        c_out = self.shapes[node_id][0]
        c_in = self.shapes[sources[0]][0] if sources else c_out
        if node.op is NeckOp.DOWNSAMPLE:
            return ConvBlockParams(c_in, c_out, rng, kernel=3, stride=2)
        if node.op is NeckOp.CBS:
            return ConvBlockParams(c_in, c_out, rng, kernel=node.kernel)
        if node.op is NeckOp.CSP:
            return CSPParams(c_in, c_out, rng, repeats=node.repeats, shortcut=False)
        if node.op is NeckOp.C2F:
            return C2fParams(c_in, c_out, rng, repeats=node.repeats)
        if node.op is NeckOp.WEIGHTED_SUM:
            return FusionNodeParams(len(sources))
        if node.op.is_attention:
            return build_attention(AttentionKind(node.op.value), c_out, attention, rng)
        return None

    def node_parameters(self, node_id: str) -> int:
        params = self.nodes.get(node_id)
        return 0 if params is None else params.num_parameters()

    def forward(self, taps: Mapping[PyramidLevel, Tensor]) -> dict[PyramidLevel, Tensor]:
        values: dict[str, Tensor] = {}
        for node_id in self.order:
            node = self.graph.node(node_id)
            inputs = [values[src] for src in self.graph.inputs_of(node_id)]
            if node.op is NeckOp.TAP:
                if node.level not in taps:
                    msg = f"neck expects a backbone tap at {node.level.value}"
                    raise ShapeMismatchError(msg)
                out = taps[node.level]
                if out.shape[1:] != self.shapes[node_id]:
                    msg = f"tap {node.level.value} has shape {out.shape[1:]}, graph expects {self.shapes[node_id]}"
                    raise ShapeMismatchError(msg)
            else:
                out = self._run_node(node.op, node_id, inputs)
            values[node_id] = out
        return {level: values[node_id] for level, node_id in self.graph.outputs.items()}

    def _run_node(self, op: NeckOp, node_id: str, inputs: list[Tensor]) -> Tensor:
        params = self.nodes.get(node_id)
        if op is NeckOp.CONCAT:
            return fuse_concat(inputs)
        if op is NeckOp.WEIGHTED_SUM and isinstance(params, FusionNodeParams):
            return fuse_weighted(inputs, params)
        x = inputs[0]
        if op is NeckOp.UPSAMPLE:
            return F.upsample_nearest2x(x)
        if isinstance(params, ConvBlockParams):
            return cbs_forward(x, params)
        if isinstance(params, CSPParams):
            return csp_forward(x, params)
        if isinstance(params, C2fParams):
            return c2f_forward(x, params, shortcut=False)
        if op.is_attention:
            return attention_forward(x, params)  # type: ignore[arg-type]
        return x


def build_neck(
    graph: NeckGraph,
    plan: ChannelPlan,
    *,
    input_size: int,
    attention: AttentionSpec | None = None,
    rng: np.random.Generator | None = None,
) -> NeckExecutor:
    """Validate ``graph`` with the symbolic shape pass and create its parameters."""
    executor = NeckExecutor(
        graph,
        plan,
        input_size,
        attention or AttentionSpec(),
        rng if rng is not None else np.random.default_rng(0),
    )
    logger.debug(f"built neck with {len(executor.order)} nodes and {executor.num_parameters()} parameters")
    return executor
