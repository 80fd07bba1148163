"""Declarative neck graphs and the symbolic shape pass that validates them."""

from __future__ import annotations

from collections import deque

from pydantic import BaseModel, Field

from deskdet.attention.factory import AttentionSpec
from deskdet.constants import NeckOp, PyramidLevel
from deskdet.exceptions import (
    ChannelMismatchError,
    CycleError,
    GraphStructureError,
    RegionDivisibilityError,
    SpatialMismatchError,
)
from deskdet.logging import logger

NodeShape = tuple[int, int, int]

_RESIZING_OPS = {NeckOp.DOWNSAMPLE, NeckOp.CBS, NeckOp.CSP, NeckOp.C2F}


class NeckNode(BaseModel):
    id: str = Field(min_length=1)
    op: NeckOp
    level: PyramidLevel
    channels: int | None = Field(default=None, gt=0)
    kernel: int = Field(default=1, ge=1)
    repeats: int = Field(default=1, ge=1)


class NeckGraph(BaseModel):
    """Nodes, directed edges (source id, destination id) and the node feeding each output level.

    The inputs of a node are its incoming edges in declaration order; fusion nodes
    concatenate or weight them in that order.
    """

    nodes: list[NeckNode]
    edges: list[tuple[str, str]]
    outputs: dict[PyramidLevel, str]

    def node(self, node_id: str) -> NeckNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        msg = f"unknown neck node '{node_id}'"
        raise GraphStructureError(msg)

    def inputs_of(self, node_id: str) -> list[str]:
        return [src for src, dst in self.edges if dst == node_id]

    def count(self, op: NeckOp) -> int:
        return sum(node.op is op for node in self.nodes)

    @property
    def output_levels(self) -> list[PyramidLevel]:
        return sorted(self.outputs, key=lambda level: level.index)

    @property
    def tap_levels(self) -> list[PyramidLevel]:
        return sorted({node.level for node in self.nodes if node.op is NeckOp.TAP}, key=lambda level: level.index)

    def check_structure(self) -> None:
        ids = [node.id for node in self.nodes]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            msg = f"duplicate neck node ids: {', '.join(duplicates)}"
            raise GraphStructureError(msg)
        known = set(ids)
        for src, dst in self.edges:
            if src not in known or dst not in known:
                msg = f"edge ({src} -> {dst}) references an unknown node"
                raise GraphStructureError(msg)
        for level, node_id in self.outputs.items():
            if node_id not in known:
                msg = f"output {level.value} references unknown node '{node_id}'"
                raise GraphStructureError(msg)
        if not self.outputs:
            msg = "neck graph declares no outputs"
            raise GraphStructureError(msg)

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; ready nodes are released in declaration order."""
        self.check_structure()
        indegree = {node.id: 0 for node in self.nodes}
        successors: dict[str, list[str]] = {node.id: [] for node in self.nodes}
        for src, dst in self.edges:
            indegree[dst] += 1
            successors[src].append(dst)
        position = {node.id: i for i, node in enumerate(self.nodes)}
        ready = deque(node.id for node in self.nodes if indegree[node.id] == 0)
        order: list[str] = []
        while ready:
            current = ready.popleft()
            order.append(current)
            released = []
            for nxt in successors[current]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    released.append(nxt)
            ready.extend(sorted(released, key=position.__getitem__))
        if len(order) != len(self.nodes):
            raise CycleError([node.id for node in self.nodes if indegree[node.id] > 0])
        return order


class ChannelPlan(BaseModel):
    """Channel widths of the backbone taps and of the neck's resizing nodes, per pyramid level."""

    taps: dict[PyramidLevel, int]
    neck: dict[PyramidLevel, int]


def _expected_extent(input_size: int, level: PyramidLevel) -> tuple[int, int]:
    side = input_size // level.stride
    return side, side


def _node_width(node: NeckNode, plan: ChannelPlan) -> int:
    if node.channels is not None:
        return node.channels
    if node.level not in plan.neck:
        raise ChannelMismatchError(node.id, f"no neck width planned for level {node.level.value}")
    return plan.neck[node.level]


def _require_inputs(node: NeckNode, inputs: list[NodeShape], low: int, high: int | None) -> None:
    if len(inputs) < low or (high is not None and len(inputs) > high):
        expected = f"at least {low}" if high is None else str(high)
        msg = f"node '{node.id}' ({node.op.value}) takes {expected} inputs, got {len(inputs)}"
        raise GraphStructureError(msg)


def _node_shape(node: NeckNode, inputs: list[NodeShape], plan: ChannelPlan, attention: AttentionSpec) -> NodeShape:
    op = node.op
    if op is NeckOp.TAP:
        _require_inputs(node, inputs, 0, 0)
        if node.level not in plan.taps:
            raise ChannelMismatchError(node.id, f"no backbone tap at level {node.level.value}")
        return plan.taps[node.level], 0, 0

    if op in (NeckOp.CONCAT, NeckOp.WEIGHTED_SUM):
        _require_inputs(node, inputs, 2, None)
        first = inputs[0]
        for shape in inputs[1:]:
            if shape[1:] != first[1:]:
                raise SpatialMismatchError(node.id, first[1:], shape[1:])
        if op is NeckOp.CONCAT:
            return sum(shape[0] for shape in inputs), first[1], first[2]
        if any(shape[0] != first[0] for shape in inputs):
            raise ChannelMismatchError(node.id, f"weighted sum inputs have widths {[s[0] for s in inputs]}")
        return first

    _require_inputs(node, inputs, 1, 1)
    c, h, w = inputs[0]
    if op is NeckOp.UPSAMPLE:
        return c, 2 * h, 2 * w
    if op in _RESIZING_OPS:
        width = _node_width(node, plan)
        if op in (NeckOp.CSP, NeckOp.C2F) and width % 2:
            raise ChannelMismatchError(node.id, f"{op.value} needs an even width, got {width}")
        if op is NeckOp.DOWNSAMPLE:
            return width, (h + 1) // 2, (w + 1) // 2
        return width, h, w
    if op is NeckOp.BRA:
        if h % attention.regions or w % attention.regions:
            raise RegionDivisibilityError(h, w, attention.regions, node.id)
        if c % attention.heads:
            raise ChannelMismatchError(node.id, f"{c} channels are not divisible by {attention.heads} heads")
    return c, h, w


def infer_shapes(
    graph: NeckGraph, plan: ChannelPlan, input_size: int, attention: AttentionSpec | None = None
) -> dict[str, NodeShape]:
    """Symbolic (channels, height, width) of every node at ``input_size``, without numeric work.

    Raises:
        CycleError: If the graph is not acyclic.
        GraphStructureError: For unknown ids or wrong input arity.
        SpatialMismatchError: If fusion inputs disagree or a node does not match its level's stride.
        ChannelMismatchError: For inconsistent or missing channel widths.
        RegionDivisibilityError: If a BRA node's map is not divisible into S x S regions.

    """
    attention = attention or AttentionSpec()
    shapes: dict[str, NodeShape] = {}
    for node_id in graph.topological_order():
        node = graph.node(node_id)
        inputs = [shapes[src] for src in graph.inputs_of(node_id)]
        shape = _node_shape(node, inputs, plan, attention)
        expected = _expected_extent(input_size, node.level)
        if node.op is NeckOp.TAP:
            shape = (shape[0], *expected)
        elif shape[1:] != expected:
            raise SpatialMismatchError(node_id, expected, shape[1:])
        shapes[node_id] = shape
        logger.debug(f"neck node {node_id} ({node.op.value}, {node.level.value}) -> {shape}")

    for level, node_id in graph.outputs.items():
        if shapes[node_id][1:] != _expected_extent(input_size, level):
            raise SpatialMismatchError(node_id, _expected_extent(input_size, level), shapes[node_id][1:])
    return shapes
