"""Bi-level routing attention: region-to-region routing followed by token attention inside routed regions."""

from __future__ import annotations

import math

import numpy as np
from einops import rearrange
from pydantic import BaseModel, ConfigDict, model_validator

from deskdet.exceptions import BlockConfigError, RegionDivisibilityError, RoutingError, ShapeMismatchError
from deskdet.nn.module import Module, parameter, uniform_weight
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F
from deskdet.tensor.tensor import make_result


def region_partition(x: Tensor, regions: int) -> Tensor:
    """Re-lay [N,C,H,W] as [N, S*S, (H/S)*(W/S), C].

    Region id is ``row * S + col``; tokens inside a region are row-major.
    """
    _, _, height, width = x.shape
    if height % regions or width % regions:
        raise RegionDivisibilityError(height, width, regions)
    rh = height // regions
    out = rearrange(x.data, "n c (sr h) (sc w) -> n (sr sc) (h w) c", sr=regions, sc=regions)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (rearrange(g, "n (sr sc) (h w) c -> n c (sr h) (sc w)", sr=regions, sc=regions, h=rh),)

    return make_result(np.ascontiguousarray(out), (x,), backward, "region_partition")


def region_merge(tokens: Tensor, regions: int, height: int, width: int) -> Tensor:
    """Inverse of ``region_partition``."""
    rh = height // regions
    rw = width // regions
    out = rearrange(tokens.data, "n (sr sc) (h w) c -> n c (sr h) (sc w)", sr=regions, sc=regions, h=rh, w=rw)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (rearrange(g, "n c (sr h) (sc w) -> n (sr sc) (h w) c", sr=regions, sc=regions),)

    return make_result(np.ascontiguousarray(out), (tokens,), backward, "region_merge")


class RoutingIndex(BaseModel):
    """Per-region ids of the routed partner regions, most affine first."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    indices: np.ndarray
    num_regions: int

    @model_validator(mode="after")
    def check_ids(self) -> RoutingIndex:
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= self.num_regions):
            msg = f"routing ids must lie in [0, {self.num_regions})"
            raise ValueError(msg)
        ordered = np.sort(self.indices, axis=-1)
        if np.any(np.diff(ordered, axis=-1) == 0):
            msg = "routing ids must be unique per region"
            raise ValueError(msg)
        return self

    @property
    def routed(self) -> int:
        return int(self.indices.shape[-1])


def topk_routing(q_region: Tensor | np.ndarray, k_region: Tensor | np.ndarray, k: int) -> RoutingIndex:
    """Select, per query region, the k key regions with the largest affinity q_r . k_r.

    Ties are broken by the lower region id.
    """
    q = q_region.data if isinstance(q_region, Tensor) else np.asarray(q_region)
    keys = k_region.data if isinstance(k_region, Tensor) else np.asarray(k_region)
    num_regions = q.shape[-2]
    if not 1 <= k <= num_regions:
        msg = f"cannot route to {k} of {num_regions} regions"
        raise RoutingError(msg)
    affinity = q @ np.swapaxes(keys, -1, -2)
    order = np.argsort(-affinity, axis=-1, kind="stable")[..., :k]
    return RoutingIndex(indices=order, num_regions=num_regions)


class BraParams(Module):
    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        regions: int = 2,
        routed: int | None = None,
        heads: int = 4,
        local_context: bool = True,
    ) -> None:
        routed = math.ceil(regions * regions / 2) if routed is None else routed
        if channels % heads:
            msg = f"BRA channels {channels} are not divisible by {heads} heads"
            raise BlockConfigError(msg)
        if not 1 <= routed <= regions * regions:
            msg = f"BRA routed regions must lie in [1, {regions * regions}], got {routed}"
            raise BlockConfigError(msg)
        self.w_q = uniform_weight(rng, (channels, channels), channels)
        self.w_k = uniform_weight(rng, (channels, channels), channels)
        self.w_v = uniform_weight(rng, (channels, channels), channels)
        self.w_o = uniform_weight(rng, (channels, channels), channels)
        self.b_q = parameter(np.zeros(channels))
        self.b_k = parameter(np.zeros(channels))
        self.b_v = parameter(np.zeros(channels))
        self.b_o = parameter(np.zeros(channels))
        self.lce_weight = uniform_weight(rng, (channels, 1, 3, 3), 9) if local_context else None
        self.lce_bias = parameter(np.zeros(channels)) if local_context else None
        self.channels = channels
        self.regions = regions
        self.routed = routed
        self.heads = heads

    @property
    def scale(self) -> float:
        return float((self.channels / self.heads) ** -0.5)


def bra_forward(x: Tensor, params: BraParams) -> Tensor:
    n, c, height, width = x.shape
    if c != params.channels:
        msg = f"BRA built for {params.channels} channels got input of shape {x.shape}"
        raise ShapeMismatchError(msg)
    regions = params.regions
    heads = params.heads
    head_dim = c // heads

    tokens = region_partition(x, regions)
    per_region = tokens.shape[2]
    q = F.linear(tokens, params.w_q, params.b_q)
    k = F.linear(tokens, params.w_k, params.b_k)
    v = F.linear(tokens, params.w_v, params.b_v)

    routing = topk_routing(q.mean(axis=2), k.mean(axis=2), params.routed)
    batch = np.arange(n)[:, None, None]
    gathered = params.routed * per_region
    k_sel = k[batch, routing.indices].reshape(n, regions * regions, gathered, heads, head_dim)
    v_sel = v[batch, routing.indices].reshape(n, regions * regions, gathered, heads, head_dim)
    q_heads = q.reshape(n, regions * regions, per_region, heads, head_dim).transpose(0, 1, 3, 2, 4)

    scores = F.matmul(q_heads, k_sel.transpose(0, 1, 3, 4, 2)) * params.scale
    attended = F.matmul(F.softmax(scores, axis=-1), v_sel.transpose(0, 1, 3, 2, 4))
    out = attended.transpose(0, 1, 3, 2, 4).reshape(n, regions * regions, per_region, c)

    if params.lce_weight is not None:
        v_map = region_merge(v, regions, height, width)
        local = F.conv2d(v_map, params.lce_weight, params.lce_bias, 1, 1, groups=c)
        out = out + region_partition(local, regions)

    out = F.linear(out, params.w_o, params.b_o)
    return x + region_merge(out, regions, height, width)
