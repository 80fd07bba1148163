import numpy as np
import pytest
from pydantic import ValidationError

from deskdet.attention import (
    AttentionSpec,
    BraParams,
    CAParams,
    CBAMParams,
    ECAParams,
    SEParams,
    attention_forward,
    bra_forward,
    build_attention,
    ca_gates,
    cbam_gates,
    eca_gate,
    eca_kernel_size,
    region_merge,
    region_partition,
    se_gate,
    topk_routing,
)
from deskdet.constants import AttentionKind
from deskdet.exceptions import BlockConfigError, RegionDivisibilityError, RoutingError
from deskdet.tensor import Tensor, grad_check
from deskdet.tensor import functional as F


def _dense_attention(x: np.ndarray, params: BraParams) -> np.ndarray:
    """Plain multi-head self-attention over every token of the map, plus the residual."""
    n, c, h, w = x.shape
    heads, dim = params.heads, c // params.heads
    tokens = x.transpose(0, 2, 3, 1).reshape(n, h * w, c)
    q = tokens @ params.w_q.data + params.b_q.data
    k = tokens @ params.w_k.data + params.b_k.data
    v = tokens @ params.w_v.data + params.b_v.data

    def split_heads(t: np.ndarray) -> np.ndarray:
        return t.reshape(n, h * w, heads, dim).transpose(0, 2, 1, 3)

    scores = split_heads(q) @ split_heads(k).transpose(0, 1, 3, 2) * params.scale
    scores = scores - scores.max(axis=-1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=-1, keepdims=True)
    out = (weights @ split_heads(v)).transpose(0, 2, 1, 3).reshape(n, h * w, c)
    out = out @ params.w_o.data + params.b_o.data
    return x + out.reshape(n, h, w, c).transpose(0, 3, 1, 2)


@pytest.mark.parametrize("regions", [1, 2, 4])
@pytest.mark.parametrize("heads", [1, 4])
def test_routing_to_every_region_equals_dense_attention(regions: int, heads: int) -> None:
    rng = np.random.default_rng(regions * 10 + heads)
    params = BraParams(8, rng, regions=regions, routed=regions * regions, heads=heads, local_context=False)
    for bias in (params.b_q, params.b_k, params.b_v, params.b_o):
        bias.data[:] = rng.normal(size=bias.shape)
    x = rng.normal(size=(2, 8, 8, 8))
    out = bra_forward(Tensor(x), params)
    np.testing.assert_allclose(out.data, _dense_attention(x, params), atol=1e-5)


def test_zero_input_passes_through(rng: np.random.Generator) -> None:
    params = BraParams(8, rng, regions=2, heads=2)
    x = Tensor(np.zeros((1, 8, 4, 4)))
    np.testing.assert_array_equal(bra_forward(x, params).data, x.data)


def test_region_partition_index_map(rng: np.random.Generator) -> None:
    """Token (i, j) of region (r, s) is pixel (r*H/S + i, s*W/S + j)."""
    regions, h, w = 2, 6, 4
    x = rng.normal(size=(1, 3, h, w))
    tokens = region_partition(Tensor(x), regions).data
    rh, rw = h // regions, w // regions
    assert tokens.shape == (1, regions * regions, rh * rw, 3)
    for r in range(regions):
        for s in range(regions):
            for i in range(rh):
                for j in range(rw):
                    token = tokens[0, r * regions + s, i * rw + j]
                    np.testing.assert_array_equal(token, x[0, :, r * rh + i, s * rw + j])


def test_region_merge_inverts_partition(rng: np.random.Generator) -> None:
    x = rng.normal(size=(2, 3, 8, 4))
    merged = region_merge(region_partition(Tensor(x), 4), 4, 8, 4)
    np.testing.assert_array_equal(merged.data, x)


def test_region_partition_rejects_indivisible_map() -> None:
    with pytest.raises(RegionDivisibilityError):
        region_partition(Tensor(np.zeros((1, 2, 6, 6))), 4)


def test_routing_ties_prefer_lower_region_id() -> None:
    q = np.zeros((1, 4, 3))
    routing = topk_routing(q, q, 2)
    np.testing.assert_array_equal(routing.indices, np.tile([0, 1], (1, 4, 1)))


def test_routing_matches_brute_force(rng: np.random.Generator) -> None:
    q = rng.normal(size=(2, 9, 5))
    k = rng.normal(size=(2, 9, 5))
    routing = topk_routing(q, k, 4)
    for b in range(2):
        for r in range(9):
            affinity = [(-(q[b, r] @ k[b, j]), j) for j in range(9)]
            expected = [j for _, j in sorted(affinity)[:4]]
            assert list(routing.indices[b, r]) == expected


def test_routing_rejects_k_above_region_count() -> None:
    with pytest.raises(RoutingError):
        topk_routing(np.zeros((1, 4, 2)), np.zeros((1, 4, 2)), 5)


def test_bra_rejects_indivisible_heads(rng: np.random.Generator) -> None:
    with pytest.raises(BlockConfigError):
        BraParams(6, rng, heads=4)


def test_bra_gradient_matches_finite_differences(rng: np.random.Generator) -> None:
    params = BraParams(4, rng, regions=2, routed=4, heads=2)
    x = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)
    weights = Tensor(rng.normal(size=(1, 4, 4, 4)))
    report = grad_check(lambda a, w: F.sum(bra_forward(a, params) * w), [x, weights])
    assert report.max_rel_err < 1e-4


@pytest.mark.parametrize(
    "params",
    [
        SEParams(16, np.random.default_rng(1), reduction=4),
        ECAParams(16, np.random.default_rng(2)),
        CBAMParams(16, np.random.default_rng(3), reduction=4),
        CAParams(16, np.random.default_rng(4)),
    ],
    ids=["se", "eca", "cbam", "ca"],
)
def test_gating_blocks_keep_shape(params: SEParams | ECAParams | CBAMParams | CAParams) -> None:
    x = Tensor(np.random.default_rng(5).normal(size=(2, 16, 6, 4)))
    assert attention_forward(x, params).shape == x.shape


def test_gates_lie_strictly_between_zero_and_one(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(scale=3.0, size=(2, 16, 5, 5)))
    gates = [
        se_gate(x, SEParams(16, rng, reduction=4)),
        eca_gate(x, ECAParams(16, rng)),
        *cbam_gates(x, CBAMParams(16, rng, reduction=4)),
        *ca_gates(x, CAParams(16, rng)),
    ]
    for gate in gates:
        assert np.all(gate.data > 0.0)
        assert np.all(gate.data < 1.0)


def test_zero_input_gives_half_gates(rng: np.random.Generator) -> None:
    x = Tensor(np.zeros((1, 16, 4, 4)))
    gates = [
        se_gate(x, SEParams(16, rng)),
        eca_gate(x, ECAParams(16, rng)),
        *cbam_gates(x, CBAMParams(16, rng)),
        *ca_gates(x, CAParams(16, rng)),
    ]
    for gate in gates:
        np.testing.assert_allclose(gate.data, 0.5)


def test_gate_shapes(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(2, 16, 6, 4)))
    channel, spatial = cbam_gates(x, CBAMParams(16, rng))
    assert channel.shape == (2, 16)
    assert spatial.shape == (2, 1, 6, 4)
    gate_h, gate_w = ca_gates(x, CAParams(16, rng))
    assert gate_h.shape == (2, 16, 6, 1)
    assert gate_w.shape == (2, 16, 1, 4)


@pytest.mark.parametrize(("channels", "kernel"), [(16, 3), (64, 3), (256, 5), (512, 5), (2048, 7)])
def test_eca_adaptive_kernel(channels: int, kernel: int) -> None:
    assert eca_kernel_size(channels) == kernel


def test_factory_builds_each_kind(rng: np.random.Generator) -> None:
    spec = AttentionSpec(regions=2, heads=2, reduction=4)
    assert build_attention(AttentionKind.NONE, 8, spec, rng) is None
    assert isinstance(build_attention(AttentionKind.BRA, 8, spec, rng), BraParams)
    assert isinstance(build_attention(AttentionKind.CA, 8, spec, rng), CAParams)
    assert spec.routed_regions == 2


def test_attention_spec_rejects_excess_routing() -> None:
    with pytest.raises(ValidationError):
        AttentionSpec(regions=2, routed=5)
