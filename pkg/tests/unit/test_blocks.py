import numpy as np
import pytest
from pydantic import ValidationError

from deskdet.constants import BlockKind
from deskdet.exceptions import BlockConfigError, ShapeMismatchError, StateDictMismatchError
from deskdet.nn import (
    BlockSpec,
    BottleneckParams,
    ConvBlockParams,
    CSPParams,
    SPPFParams,
    block_forward,
    block_param_count,
    bottleneck_forward,
    build_block,
    cbs_forward,
    csp_forward,
)
from deskdet.tensor import Tensor
from deskdet.tensor import functional as F


@pytest.mark.parametrize(
    ("spec", "expected"),
    [
        (BlockSpec(kind=BlockKind.C2F, channels_in=64, channels_out=64, repeats=2), 49664),
        (BlockSpec(kind=BlockKind.SPPF, channels_in=64, channels_out=64), 10432),
        (BlockSpec(kind=BlockKind.CSP, channels_in=64, channels_out=64, repeats=1), 27008),
        (BlockSpec(kind=BlockKind.CBS, channels_in=3, channels_out=16, kernel=3), 464),
    ],
)
def test_parameter_counts(spec: BlockSpec, expected: int, rng: np.random.Generator) -> None:
    """Closed-form and instantiated counts agree with the reference values."""
    assert block_param_count(spec) == expected
    assert build_block(spec, rng).num_parameters() == expected


@pytest.mark.parametrize("kind", list(BlockKind))
def test_blocks_preserve_spatial_extent(kind: BlockKind, rng: np.random.Generator) -> None:
    spec = BlockSpec(kind=kind, channels_in=8, channels_out=12, kernel=3)
    out = block_forward(Tensor(rng.normal(size=(2, 8, 6, 6))), build_block(spec, rng), shortcut=True)
    assert out.shape == (2, 12, 6, 6)


def test_strided_cbs_halves_extent(rng: np.random.Generator) -> None:
    params = ConvBlockParams(4, 8, rng, kernel=3, stride=2)
    assert cbs_forward(Tensor(rng.normal(size=(1, 4, 8, 8))), params).shape == (1, 8, 4, 4)


def test_bottleneck_with_zero_branch_is_identity(rng: np.random.Generator) -> None:
    """A residual bottleneck whose branch outputs zero returns its input unchanged."""
    params = BottleneckParams(4, rng).eval()
    params.cv2.gamma.data[:] = 0.0
    params.cv2.beta.data[:] = 0.0
    x = Tensor(rng.normal(size=(1, 4, 5, 5)))
    np.testing.assert_allclose(bottleneck_forward(x, params, shortcut=True).data, x.data)


def test_csp_backpropagates_into_both_branches(rng: np.random.Generator) -> None:
    params = CSPParams(4, 8, rng, repeats=1)
    x = Tensor(rng.normal(size=(2, 4, 4, 4)))
    weights = Tensor(rng.normal(size=(2, 8, 4, 4)))
    (csp_forward(x, params) * weights).sum().backward()
    assert params.cv1.weight.grad is not None
    assert params.cv2.weight.grad is not None
    assert np.abs(params.cv1.weight.grad).sum() > 0
    assert np.abs(params.cv2.weight.grad).sum() > 0


def test_chained_5x5_pools_match_9_and_13(rng: np.random.Generator) -> None:
    """Pooling three times with k=5 covers the same windows as one pool of 9 and one of 13."""
    y = Tensor(rng.normal(size=(1, 3, 12, 12)))
    once = F.max_pool2d(y, 5, 1, 2)
    twice = F.max_pool2d(once, 5, 1, 2)
    thrice = F.max_pool2d(twice, 5, 1, 2)
    np.testing.assert_array_equal(twice.data, F.max_pool2d(y, 9, 1, 4).data)
    np.testing.assert_array_equal(thrice.data, F.max_pool2d(y, 13, 1, 6).data)


def test_sppf_keeps_extent(rng: np.random.Generator) -> None:
    out = block_forward(Tensor(rng.normal(size=(1, 8, 7, 7))), SPPFParams(8, 16, rng))
    assert out.shape == (1, 16, 7, 7)


def test_odd_width_is_rejected() -> None:
    with pytest.raises(ValidationError):
        BlockSpec(kind=BlockKind.C2F, channels_in=8, channels_out=7)
    with pytest.raises(BlockConfigError):
        CSPParams(8, 7, np.random.default_rng(0))


def test_groups_must_divide_channels(rng: np.random.Generator) -> None:
    with pytest.raises(BlockConfigError):
        ConvBlockParams(6, 8, rng, groups=4)


def test_cbs_rejects_wrong_input_channels(rng: np.random.Generator) -> None:
    with pytest.raises(ShapeMismatchError):
        cbs_forward(Tensor(np.zeros((1, 3, 4, 4))), ConvBlockParams(4, 4, rng))


def test_training_mode_updates_running_statistics(rng: np.random.Generator) -> None:
    params = ConvBlockParams(2, 2, rng)
    cbs_forward(Tensor(rng.normal(loc=5.0, size=(2, 2, 3, 3))), params)
    assert not np.allclose(params.running_mean.data, 0.0)
    before = params.running_mean.data.copy()
    cbs_forward(Tensor(rng.normal(size=(2, 2, 3, 3))), params.eval())
    np.testing.assert_array_equal(params.running_mean.data, before)


def test_state_dict_round_trip(rng: np.random.Generator) -> None:
    source = CSPParams(4, 8, rng)
    target = CSPParams(4, 8, np.random.default_rng(99))
    target.load_state_dict(source.state_dict())
    for (name, a), (_, b) in zip(source.named_tensors(), target.named_tensors(), strict=True):
        np.testing.assert_array_equal(a.data, b.data, err_msg=name)


def test_state_dict_mismatch_names_the_keys(rng: np.random.Generator) -> None:
    params = ConvBlockParams(2, 4, rng)
    state = params.state_dict()
    del state["gamma"]
    state["extra"] = np.zeros(1)
    with pytest.raises(StateDictMismatchError):
        params.load_state_dict(state)


def test_buffers_are_not_parameters(rng: np.random.Generator) -> None:
    params = ConvBlockParams(2, 4, rng)
    assert {name for name, _ in params.named_buffers()} == {"running_mean", "running_var"}
    assert {name for name, _ in params.named_parameters()} == {"weight", "gamma", "beta"}
