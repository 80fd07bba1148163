import numpy as np
import pytest

from deskdet.exceptions import (
    GraphConsumedError,
    NonDeterministicFunctionError,
    NonFiniteError,
    NonScalarLossError,
    ShapeMismatchError,
)
from deskdet.tensor import GradGraph, Tensor, backward, default_dtype, get_default_dtype, grad_check, no_grad
from deskdet.tensor import functional as F


def test_conv2d_ones_kernel_sums_window() -> None:
    x = Tensor(np.ones((1, 1, 3, 3)))
    w = Tensor(np.ones((1, 1, 3, 3)))
    out = F.conv2d(x, w)
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == pytest.approx(9.0)


def test_conv2d_identity_kernel_with_padding() -> None:
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    kernel = np.zeros((1, 1, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    out = F.conv2d(x, Tensor(kernel), padding=1)
    np.testing.assert_allclose(out.data, x.data)


@pytest.mark.parametrize(
    ("stride", "padding", "groups"),
    [(1, 0, 1), (2, 1, 1), (1, (1, 0), 1), (2, 1, 2), (1, 1, 4)],
)
def test_conv2d_matches_loop_reference(rng: np.random.Generator, stride: int, padding: int, groups: int) -> None:
    x = rng.normal(size=(2, 4, 7, 6))
    w = rng.normal(size=(4, 4 // groups, 3, 3))
    b = rng.normal(size=(4,))
    out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding, groups=groups)
    expected = F.conv2d_reference(x, w, b, stride=stride, padding=padding, groups=groups)
    np.testing.assert_allclose(out.data, expected, rtol=1e-10, atol=1e-10)


def test_depthwise_conv_is_per_channel(rng: np.random.Generator) -> None:
    """groups == channels convolves every channel with its own kernel."""
    x = rng.normal(size=(1, 3, 5, 5))
    w = rng.normal(size=(3, 1, 3, 3))
    out = F.conv2d(Tensor(x), Tensor(w), padding=1, groups=3)
    for c in range(3):
        single = F.conv2d(Tensor(x[:, c : c + 1]), Tensor(w[c : c + 1]), padding=1)
        np.testing.assert_allclose(out.data[:, c : c + 1], single.data, atol=1e-12)


def test_conv2d_rejects_channel_mismatch() -> None:
    with pytest.raises(ShapeMismatchError):
        F.conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 2, 1, 1))))


def test_upsample_nearest2x_repeats_pixels() -> None:
    x = Tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = F.upsample_nearest2x(x)
    expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    np.testing.assert_array_equal(out.data[0, 0], expected)


def test_upsample_then_average_pool_restores_input(rng: np.random.Generator) -> None:
    x = rng.normal(size=(2, 3, 4, 5))
    up = F.upsample_nearest2x(Tensor(x)).data
    pooled = up.reshape(2, 3, 4, 2, 5, 2).mean(axis=(3, 5))
    np.testing.assert_allclose(pooled, x)


def test_max_pool_picks_window_maximum() -> None:
    x = Tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
    out = F.max_pool2d(x, 2)
    np.testing.assert_array_equal(out.data, [[[[4.0]]]])


def test_max_pool_tie_sends_gradient_to_first_maximum() -> None:
    x = Tensor(np.full((1, 1, 2, 2), 5.0), requires_grad=True)
    F.max_pool2d(x, 2).sum().backward()
    assert x.grad is not None
    np.testing.assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])


def test_max_pool_same_padding_keeps_extent(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(1, 2, 8, 8)))
    for kernel in (5, 9, 13):
        assert F.max_pool2d(x, kernel, stride=1, padding=kernel // 2).shape == (1, 2, 8, 8)


def test_max_pool_rejects_oversized_padding() -> None:
    with pytest.raises(ShapeMismatchError):
        F.max_pool2d(Tensor(np.zeros((1, 1, 4, 4))), 3, stride=1, padding=2)


def test_softmax_is_stable_for_large_logits() -> None:
    out = F.softmax(Tensor([1000.0, 0.0]))
    np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)
    assert np.all(np.isfinite(F.log_softmax(Tensor([1000.0, 0.0])).data))


def test_backward_of_sum_is_ones() -> None:
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    assert x.grad is not None
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_of_square_is_twice_input() -> None:
    x = Tensor([1.0, -2.0, 3.5], requires_grad=True)
    (x * x).sum().backward()
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


def test_gradients_accumulate_when_input_is_reused() -> None:
    x = Tensor([2.0], requires_grad=True)
    (x * 3.0 + x * x).sum().backward()
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, [7.0])


def test_graph_can_only_be_consumed_once() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    graph = GradGraph.from_loss(loss)
    backward(graph, loss)
    with pytest.raises(GraphConsumedError):
        backward(graph, loss)


def test_second_backward_on_same_loss_raises() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    with pytest.raises(GraphConsumedError):
        loss.backward()
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, [2.0, 4.0])


def test_reset_graph_allows_a_second_pass() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    loss = (x * x).sum()
    loss.backward()
    loss.grad_graph.reset()
    loss.backward()
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, [4.0, 8.0])


def test_backward_requires_scalar_loss() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    out = x * 2.0
    with pytest.raises(NonScalarLossError):
        backward(GradGraph.from_loss(out), out)


def test_non_finite_values_are_rejected() -> None:
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        F.log(Tensor([0.0]))


def test_no_grad_records_nothing() -> None:
    x = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = x * 2.0
    assert out.is_leaf
    assert not out.requires_grad


def test_default_dtype_context_restores_previous() -> None:
    before = get_default_dtype()
    with default_dtype(np.float32):
        assert Tensor([1.0]).dtype == np.float32
    assert get_default_dtype() == before


def test_concat_then_split_is_identity(rng: np.random.Generator) -> None:
    a, b = rng.normal(size=(1, 2, 3, 3)), rng.normal(size=(1, 5, 3, 3))
    joined = F.concat([Tensor(a), Tensor(b)], axis=1)
    first, second = F.split(joined, [2, 5], axis=1)
    np.testing.assert_array_equal(first.data, a)
    np.testing.assert_array_equal(second.data, b)


def test_concat_rejects_mismatched_extent() -> None:
    with pytest.raises(ShapeMismatchError):
        F.concat([Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 4, 3)))], axis=1)


def test_split_sizes_must_cover_axis() -> None:
    with pytest.raises(ShapeMismatchError):
        F.split(Tensor(np.zeros((1, 4, 2, 2))), [1, 2], axis=1)


def test_batchnorm_eval_uses_running_statistics(rng: np.random.Generator) -> None:
    x = rng.normal(size=(2, 3, 4, 4))
    gamma, beta = Tensor(np.array([1.0, 2.0, 0.5])), Tensor(np.array([0.0, 1.0, -1.0]))
    mean, var = np.array([0.1, -0.2, 0.3]), np.array([1.0, 4.0, 0.25])
    out = F.batchnorm2d(Tensor(x), gamma, beta, mean.copy(), var.copy(), training=False, eps=0.0)
    expected = (x - mean[None, :, None, None]) / np.sqrt(var)[None, :, None, None]
    expected = expected * gamma.data[None, :, None, None] + beta.data[None, :, None, None]
    np.testing.assert_allclose(out.data, expected)


def test_batchnorm_training_updates_running_buffers(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(loc=3.0, size=(4, 2, 3, 3)))
    mean, var = np.zeros(2), np.ones(2)
    F.batchnorm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), mean, var, training=True, momentum=0.5)
    np.testing.assert_allclose(mean, 0.5 * x.data.mean(axis=(0, 2, 3)))


def test_grad_check_agrees_on_smooth_function(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    report = grad_check(lambda a, b: F.sum(F.silu(F.matmul(a, b))), [x, w])
    assert report.max_rel_err < 1e-6
    assert report.coordinates_checked == 12 + 8


def test_grad_check_conv_and_pool(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(1, 2, 5, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    report = grad_check(lambda a, b: F.sum(F.max_pool2d(F.conv2d(a, b, padding=1), 3, stride=1, padding=1)), [x, w])
    assert report.max_rel_err < 1e-5


def test_grad_check_rejects_nondeterministic_function(rng: np.random.Generator) -> None:
    x = Tensor(rng.normal(size=(2,)), requires_grad=True)
    noise = np.random.default_rng(1)
    with pytest.raises(NonDeterministicFunctionError):
        grad_check(lambda a: F.sum(a * float(noise.normal())), [x])
