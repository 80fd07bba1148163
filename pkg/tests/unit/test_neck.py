import numpy as np
import pytest

from deskdet.attention import AttentionSpec
from deskdet.constants import AttentionKind, NeckOp, NeckPreset, PyramidLevel
from deskdet.exceptions import (
    ChannelMismatchError,
    CycleError,
    GraphStructureError,
    RegionDivisibilityError,
    ShapeMismatchError,
    SpatialMismatchError,
)
from deskdet.neck.executor import build_neck
from deskdet.neck.fusion import FusionNodeParams, fuse_concat, fuse_weighted
from deskdet.neck.graph import ChannelPlan, NeckGraph, NeckNode, infer_shapes
from deskdet.neck.presets import build_preset, preset_bgf, preset_bifpn, preset_fpn_panet
from deskdet.tensor import Tensor

P2, P3, P4, P5 = PyramidLevel.P2, PyramidLevel.P3, PyramidLevel.P4, PyramidLevel.P5

PLAN = ChannelPlan(taps={P2: 16, P3: 32, P4: 64, P5: 128}, neck={P2: 16, P3: 32, P4: 64, P5: 128})
SMALL_PLAN = ChannelPlan(taps={P3: 8, P4: 8, P5: 8}, neck={P3: 8, P4: 8, P5: 8})


def test_identity_graph_passes_tap_through(rng: np.random.Generator) -> None:
    graph = NeckGraph(
        nodes=[NeckNode(id="t", op=NeckOp.TAP, level=P3), NeckNode(id="i", op=NeckOp.IDENTITY, level=P3)],
        edges=[("t", "i")],
        outputs={P3: "i"},
    )
    executor = build_neck(graph, PLAN, input_size=64)
    x = Tensor(rng.normal(size=(1, 32, 8, 8)))
    assert executor.forward({P3: x})[P3] is x
    assert executor.num_parameters() == 0


def test_fpn_panet_outputs_at_standard_strides() -> None:
    graph = preset_fpn_panet()
    shapes = infer_shapes(graph, PLAN, 640)
    assert graph.output_levels == [P3, P4, P5]
    assert [shapes[graph.outputs[level]][1:] for level in graph.output_levels] == [(80, 80), (40, 40), (20, 20)]


def test_bgf_four_level_grids_at_640() -> None:
    graph = preset_bgf()
    shapes = infer_shapes(graph, PLAN, 640, AttentionSpec(regions=2, heads=4))
    grids = [shapes[graph.outputs[level]][1:] for level in graph.output_levels]
    assert grids == [(160, 160), (80, 80), (40, 40), (20, 20)]
    assert [shapes[graph.outputs[level]][0] for level in graph.output_levels] == [16, 32, 64, 128]


def test_bgf_is_denser_than_fpn_panet() -> None:
    bgf = preset_bgf([P3, P4, P5], AttentionKind.BRA)
    fpn = preset_fpn_panet([P3, P4, P5])
    assert len(bgf.edges) == 27
    assert len(fpn.edges) == 16
    assert len(preset_bgf(attention=AttentionKind.BRA).edges) == 42


def test_bgf_attention_sits_behind_resampling() -> None:
    graph = preset_bgf(attention=AttentionKind.BRA)
    attention_nodes = [node.id for node in graph.nodes if node.op is NeckOp.BRA]
    assert attention_nodes
    for node_id in attention_nodes:
        (source,) = graph.inputs_of(node_id)
        assert graph.node(source).op in (NeckOp.UPSAMPLE, NeckOp.DOWNSAMPLE)


def test_preset_without_attention_has_no_attention_nodes() -> None:
    graph = preset_bgf(attention=AttentionKind.NONE)
    assert graph.count(NeckOp.BRA) == 0


def test_build_preset_by_name() -> None:
    assert build_preset("bifpn").count(NeckOp.WEIGHTED_SUM) == preset_bifpn().count(NeckOp.WEIGHTED_SUM)
    assert build_preset(NeckPreset.BGF).tap_levels == [P2, P3, P4, P5]


def test_cycle_is_rejected() -> None:
    graph = NeckGraph(
        nodes=[
            NeckNode(id="t", op=NeckOp.TAP, level=P3),
            NeckNode(id="a", op=NeckOp.CBS, level=P3),
            NeckNode(id="b", op=NeckOp.CBS, level=P3),
        ],
        edges=[("t", "a"), ("a", "b"), ("b", "a")],
        outputs={P3: "b"},
    )
    with pytest.raises(CycleError):
        infer_shapes(graph, PLAN, 64)


def test_unknown_edge_endpoint_is_rejected() -> None:
    graph = NeckGraph(nodes=[NeckNode(id="t", op=NeckOp.TAP, level=P3)], edges=[("t", "x")], outputs={P3: "t"})
    with pytest.raises(GraphStructureError):
        infer_shapes(graph, PLAN, 64)


def test_concat_of_different_levels_is_a_spatial_mismatch() -> None:
    graph = NeckGraph(
        nodes=[
            NeckNode(id="t3", op=NeckOp.TAP, level=P3),
            NeckNode(id="t4", op=NeckOp.TAP, level=P4),
            NeckNode(id="cat", op=NeckOp.CONCAT, level=P3),
        ],
        edges=[("t3", "cat"), ("t4", "cat")],
        outputs={P3: "cat"},
    )
    with pytest.raises(SpatialMismatchError):
        infer_shapes(graph, PLAN, 64)


def test_weighted_sum_of_different_widths_is_a_channel_mismatch() -> None:
    graph = NeckGraph(
        nodes=[
            NeckNode(id="t3", op=NeckOp.TAP, level=P3),
            NeckNode(id="up", op=NeckOp.UPSAMPLE, level=P3),
            NeckNode(id="t4", op=NeckOp.TAP, level=P4),
            NeckNode(id="ws", op=NeckOp.WEIGHTED_SUM, level=P3),
        ],
        edges=[("t4", "up"), ("t3", "ws"), ("up", "ws")],
        outputs={P3: "ws"},
    )
    with pytest.raises(ChannelMismatchError):
        infer_shapes(graph, PLAN, 64)


def test_attention_on_indivisible_map_is_rejected() -> None:
    """At 96 px the P5 map is 3x3 and cannot be cut into 2x2 regions."""
    with pytest.raises(RegionDivisibilityError):
        infer_shapes(preset_bgf([P3, P4, P5], AttentionKind.BRA), PLAN, 96, AttentionSpec(regions=2))


def test_fuse_concat_keeps_input_order(rng: np.random.Generator) -> None:
    a, b = rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 1, 3, 3))
    out = fuse_concat([Tensor(a), Tensor(b)])
    np.testing.assert_array_equal(out.data, np.concatenate([a, b], axis=1))


def test_fuse_concat_rejects_spatial_mismatch() -> None:
    with pytest.raises(ShapeMismatchError):
        fuse_concat([Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 4, 4)))])


def test_fuse_weighted_normalizes_rectified_weights(rng: np.random.Generator) -> None:
    params = FusionNodeParams(3, eps=1e-4)
    params.weights.data[:] = [2.0, -1.0, 1.0]
    xs = [rng.normal(size=(1, 2, 3, 3)) for _ in range(3)]
    out = fuse_weighted([Tensor(x) for x in xs], params)
    expected = (2.0 * xs[0] + 1.0 * xs[2]) / (3.0 + 1e-4)
    np.testing.assert_allclose(out.data, expected)
    np.testing.assert_allclose(params.normalized(), [2.0 / 3.0001, 0.0, 1.0 / 3.0001])


def test_fusion_eps_must_be_positive() -> None:
    with pytest.raises(ValueError, match="eps"):
        FusionNodeParams(2, eps=0.0)


@pytest.mark.parametrize("preset", list(NeckPreset))
def test_gradient_reaches_every_tap(preset: NeckPreset, rng: np.random.Generator) -> None:
    graph = build_preset(preset, [P3, P4, P5], AttentionKind.BRA, width=8)
    executor = build_neck(graph, SMALL_PLAN, input_size=64, attention=AttentionSpec(regions=2, heads=2), rng=rng)
    taps = {}
    for level in graph.tap_levels:
        side = 64 // level.stride
        taps[level] = Tensor(rng.normal(size=(2, 8, side, side)), requires_grad=True)
    outputs = executor.forward(taps)
    loss = None
    for out in outputs.values():
        term = (out * Tensor(rng.normal(size=out.shape))).sum()
        loss = term if loss is None else loss + term
    assert loss is not None
    loss.backward()
    for level, tap in taps.items():
        assert tap.grad is not None, level
        assert np.abs(tap.grad).sum() > 0, level


def test_executor_reports_per_node_parameters(rng: np.random.Generator) -> None:
    executor = build_neck(preset_fpn_panet(), PLAN, input_size=64, rng=rng)
    total = sum(executor.node_parameters(node_id) for node_id in executor.order)
    assert total == executor.num_parameters()
    assert executor.node_parameters("t_p3") == 0
