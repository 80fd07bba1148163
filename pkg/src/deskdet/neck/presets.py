"""Built-in neck topologies.

Node ids follow ``<role>_<level>``: ``t`` backbone taps, ``td``/``n`` top-down nodes,
``out``/``m`` bottom-up nodes. See docs/neck_topologies.md for diagrams.
"""

from __future__ import annotations

from collections.abc import Sequence

from deskdet.constants import AttentionKind, NeckOp, NeckPreset, PyramidLevel
from deskdet.neck.graph import NeckGraph, NeckNode

DEFAULT_LEVELS = (PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5)
BGF_LEVELS = (PyramidLevel.P2, PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5)


class _GraphBuilder:
    def __init__(self) -> None:
        self.nodes: list[NeckNode] = []
        self.edges: list[tuple[str, str]] = []

    def add(
        self,
        node_id: str,
        op: NeckOp,
        level: PyramidLevel,
        inputs: Sequence[str] = (),
        channels: int | None = None,
        kernel: int = 1,
    ) -> str:
        self.nodes.append(NeckNode(id=node_id, op=op, level=level, channels=channels, kernel=kernel))
        self.edges.extend((src, node_id) for src in inputs)
        return node_id

    def attend(self, node_id: str, source: str, level: PyramidLevel, attention: AttentionKind) -> str:
        """Place an attention node behind ``source``; no node when attention is off."""
        if attention is AttentionKind.NONE:
            return source
        return self.add(node_id, NeckOp.for_attention(attention), level, [source])

    def taps(self, levels: Sequence[PyramidLevel]) -> dict[PyramidLevel, str]:
        return {level: self.add(f"t_{level.value}", NeckOp.TAP, level) for level in levels}

    def build(self, outputs: dict[PyramidLevel, str]) -> NeckGraph:
        return NeckGraph(nodes=self.nodes, edges=self.edges, outputs=outputs)


def _sorted(levels: Sequence[PyramidLevel]) -> list[PyramidLevel]:
    ordered = sorted(set(levels), key=lambda level: level.index)
    if len(ordered) < 2:  # noqa: PLR2004
        msg = "a neck needs at least two pyramid levels"
        raise ValueError(msg)
    return ordered


def preset_fpn_panet(
    levels: Sequence[PyramidLevel] = DEFAULT_LEVELS, attention: AttentionKind = AttentionKind.NONE
) -> NeckGraph:
    """YOLOv8 neck: top-down upsample + concat + C2f, then bottom-up stride-2 CBS + concat + C2f."""
    levels = _sorted(levels)
    g = _GraphBuilder()
    taps = g.taps(levels)

    top_down = {levels[-1]: taps[levels[-1]]}
    for upper, level in zip(reversed(levels), reversed(levels[:-1]), strict=False):
        up = g.add(f"up_{level.value}", NeckOp.UPSAMPLE, level, [top_down[upper]])
        up = g.attend(f"att_up_{level.value}", up, level, attention)
        cat = g.add(f"cat_td_{level.value}", NeckOp.CONCAT, level, [up, taps[level]])
        top_down[level] = g.add(f"td_{level.value}", NeckOp.C2F, level, [cat])

    outputs = {levels[0]: top_down[levels[0]]}
    for lower, level in zip(levels, levels[1:], strict=False):
        down = g.add(f"down_{level.value}", NeckOp.DOWNSAMPLE, level, [outputs[lower]])
        down = g.attend(f"att_down_{level.value}", down, level, attention)
        cat = g.add(f"cat_bu_{level.value}", NeckOp.CONCAT, level, [down, top_down[level]])
        outputs[level] = g.add(f"out_{level.value}", NeckOp.C2F, level, [cat])
    return g.build(outputs)


def preset_bifpn(
    levels: Sequence[PyramidLevel] = DEFAULT_LEVELS,
    attention: AttentionKind = AttentionKind.NONE,
    width: int = 64,
) -> NeckGraph:
    """BiFPN: 1x1 laterals to a shared width, weighted top-down and bottom-up fusion, 3x3 CBS after each."""
    levels = _sorted(levels)
    g = _GraphBuilder()
    taps = g.taps(levels)
    lateral = {
        level: g.add(f"lat_{level.value}", NeckOp.CBS, level, [taps[level]], channels=width) for level in levels
    }

    top_down = {levels[-1]: lateral[levels[-1]]}
    for upper, level in zip(reversed(levels), reversed(levels[:-1]), strict=False):
        up = g.add(f"up_{level.value}", NeckOp.UPSAMPLE, level, [top_down[upper]])
        up = g.attend(f"att_up_{level.value}", up, level, attention)
        fused = g.add(f"ws_td_{level.value}", NeckOp.WEIGHTED_SUM, level, [lateral[level], up])
        top_down[level] = g.add(f"td_{level.value}", NeckOp.CBS, level, [fused], channels=width, kernel=3)

    outputs = {levels[0]: top_down[levels[0]]}
    for lower, level in zip(levels, levels[1:], strict=False):
        down = g.add(f"down_{level.value}", NeckOp.DOWNSAMPLE, level, [outputs[lower]], channels=width)
        down = g.attend(f"att_down_{level.value}", down, level, attention)
        sources = [lateral[level], down] if level is levels[-1] else [lateral[level], top_down[level], down]
        fused = g.add(f"ws_bu_{level.value}", NeckOp.WEIGHTED_SUM, level, sources)
        outputs[level] = g.add(f"out_{level.value}", NeckOp.CBS, level, [fused], channels=width, kernel=3)
    return g.build(outputs)


def preset_bgf(
    levels: Sequence[PyramidLevel] = BGF_LEVELS, attention: AttentionKind = AttentionKind.BRA
) -> NeckGraph:
    """Dense-link neck with concat fusion, CSP blocks and attention behind every upsample and downsample.

    Top-down node ``n_l`` fuses attention(upsample(n_{l+1})), the tap ``t_l`` and, when a
    lower level exists, downsample(t_{l-1}). Bottom-up node ``m_l`` fuses
    attention(downsample(m_{l-1})), ``n_l``, ``t_l`` and, when a higher level exists,
    upsample(n_{l+1}). The lowest output is ``n`` of the lowest level.
    """
    levels = _sorted(levels)
    g = _GraphBuilder()
    taps = g.taps(levels)
    top = levels[-1]

    stage1 = {top: g.add(f"n_{top.value}", NeckOp.CBS, top, [taps[top]])}
    for index in range(len(levels) - 2, -1, -1):
        level = levels[index]
        up = g.add(f"up_n_{level.value}", NeckOp.UPSAMPLE, level, [stage1[levels[index + 1]]])
        sources = [g.attend(f"att_n_{level.value}", up, level, attention), taps[level]]
        if index > 0:
            sources.append(g.add(f"qdown_t_{level.value}", NeckOp.DOWNSAMPLE, level, [taps[levels[index - 1]]]))
        cat = g.add(f"cat_n_{level.value}", NeckOp.CONCAT, level, sources)
        stage1[level] = g.add(f"csp_n_{level.value}", NeckOp.CSP, level, [cat])

    stage2 = {levels[0]: stage1[levels[0]]}
    for index in range(1, len(levels)):
        level = levels[index]
        down = g.add(f"down_m_{level.value}", NeckOp.DOWNSAMPLE, level, [stage2[levels[index - 1]]])
        sources = [g.attend(f"att_m_{level.value}", down, level, attention), stage1[level], taps[level]]
        if index < len(levels) - 1:
            sources.append(g.add(f"qup_n_{level.value}", NeckOp.UPSAMPLE, level, [stage1[levels[index + 1]]]))
        cat = g.add(f"cat_m_{level.value}", NeckOp.CONCAT, level, sources)
        stage2[level] = g.add(f"csp_m_{level.value}", NeckOp.CSP, level, [cat])
    return g.build(stage2)


def build_preset(
    name: NeckPreset | str,
    levels: Sequence[PyramidLevel] | None = None,
    attention: AttentionKind = AttentionKind.NONE,
    width: int = 64,
) -> NeckGraph:
    preset = NeckPreset.from_string(name)
    if preset is NeckPreset.FPN_PANET:
        return preset_fpn_panet(levels or DEFAULT_LEVELS, attention)
    if preset is NeckPreset.BIFPN:
        return preset_bifpn(levels or DEFAULT_LEVELS, attention, width)
    return preset_bgf(levels or BGF_LEVELS, attention)
