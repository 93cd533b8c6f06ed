"""Tensor value type, tape mechanics, and elementwise ops."""

import numpy as np
import pytest

from lpnet.errors import NumericalError, ShapeError
from lpnet.gradcheck import gradcheck
from lpnet import tensor as T
from lpnet.tensor import GradTape, Tensor


def rand(shape, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)


class TestTensorBasics:
    def test_shape_and_flat_length_agree(self):
        t = Tensor(np.zeros((2, 3, 4)))
        assert int(np.prod(t.shape)) == t.data.ravel().size

    def test_data_is_float64(self):
        t = Tensor(np.ones((2, 2), dtype=np.float32))
        assert t.data.dtype == np.float64

    def test_nan_result_raises(self):
        a = Tensor([1.0, 0.0])
        b = Tensor([0.0, 0.0])
        with pytest.raises(NumericalError):
            T.div(a, b)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))


class TestTape:
    def test_backward_visits_each_node_once_in_reverse_order(self):
        x = rand((4,), seed=1)
        visited = []
        with GradTape() as tape:
            y = T.mul(x, x)
            z = T.sigmoid(y)
            out = T.tsum(z)
            order = list(tape.nodes)
            for node in tape.nodes:
                orig = node.backward
                def wrapped(g, node=node, orig=orig):
                    visited.append(node)
                    return orig(g)
                node.backward = wrapped
            tape.backward(out)
        assert visited == list(reversed(order))
        assert len(visited) == len(set(map(id, visited)))

    def test_grad_shape_matches_tensor_shape(self):
        x = rand((2, 3), seed=2)
        with GradTape() as tape:
            tape.backward(T.tsum(T.square(x)))
        assert tape.grad(x).shape == x.shape

    def test_grad_accumulates_over_reuse(self):
        x = Tensor([3.0], requires_grad=True)
        with GradTape() as tape:
            y = T.add(x, x)
            tape.backward(T.tsum(y))
        np.testing.assert_allclose(tape.grad(x), [2.0])

    def test_no_tape_records_nothing(self):
        x = rand((3,), seed=3)
        y = T.square(x)
        assert y.requires_grad
        tape = GradTape()
        assert tape.nodes == []

    def test_constant_inputs_get_no_gradient(self):
        x = rand((3,), seed=4)
        c = Tensor(np.ones(3))
        with GradTape() as tape:
            tape.backward(T.tsum(T.mul(x, c)))
        assert tape.grad(c) is None
        assert tape.grad(x) is not None

    def test_non_scalar_root_requires_seed(self):
        x = rand((3,), seed=5)
        with GradTape() as tape:
            y = T.square(x)
            with pytest.raises(ShapeError):
                tape.backward(y)


class TestElementwise:
    def test_sigmoid_tanh_at_zero(self):
        z = Tensor([0.0])
        assert T.sigmoid(z).item() == 0.5
        assert T.tanh(z).item() == 0.0

    def test_exp_of_one(self):
        assert abs(T.exp(Tensor([1.0])).item() - np.e) < 1e-15

    def test_exp_clamped_above_threshold(self):
        y = T.exp(Tensor([1000.0]))
        assert y.item() == np.exp(40.0)

    def test_leaky_relu_negative_side(self):
        y = T.leaky_relu(Tensor([-1.0]), slope=0.1)
        assert y.item() == pytest.approx(-0.1)

    def test_softplus_zero_is_ln2(self):
        assert T.softplus(Tensor([0.0])).item() == pytest.approx(np.log(2.0), abs=1e-15)

    def test_softplus_large_inputs_do_not_overflow(self):
        y = T.softplus(Tensor([800.0, -800.0]))
        np.testing.assert_allclose(y.data, [800.0, 0.0], atol=1e-12)

    def test_sum_of_squares_gradient_is_2x(self):
        x = rand((5,), seed=6)
        with GradTape() as tape:
            tape.backward(T.tsum(T.square(x)))
        np.testing.assert_allclose(tape.grad(x), 2.0 * x.data, rtol=1e-12)

    def test_sigmoid_sum_gradient_analytic(self):
        x = rand((7,), seed=7)
        with GradTape() as tape:
            tape.backward(T.tsum(T.sigmoid(x)))
        s = 1.0 / (1.0 + np.exp(-x.data))
        np.testing.assert_allclose(tape.grad(x), s * (1.0 - s), rtol=1e-12)


class TestChannelOps:
    def test_concat_channel_count(self):
        a = Tensor(np.zeros((1, 2, 4, 4)))
        b = Tensor(np.zeros((1, 3, 4, 4)))
        assert T.concat_channels([a, b]).shape == (1, 5, 4, 4)

    def test_split_concat_roundtrip_bitwise(self):
        rng = np.random.default_rng(8)
        a = Tensor(rng.normal(size=(2, 2, 3, 3)))
        b = Tensor(rng.normal(size=(2, 4, 3, 3)))
        ra, rb = T.split_channels(T.concat_channels([a, b]), [2, 4])
        np.testing.assert_array_equal(ra.data, a.data)
        np.testing.assert_array_equal(rb.data, b.data)

    def test_concat_gradient_routes_to_parts(self):
        a = rand((1, 2, 2, 2), seed=9)
        b = rand((1, 3, 2, 2), seed=10)
        with GradTape() as tape:
            tape.backward(T.tsum(T.concat_channels([a, b])))
        np.testing.assert_array_equal(tape.grad(a), np.ones(a.shape))
        np.testing.assert_array_equal(tape.grad(b), np.ones(b.shape))

    def test_concat_spatial_mismatch_raises(self):
        with pytest.raises(ShapeError):
            T.concat_channels([Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 2)))])

    def test_sub_channel_mean_zero_sum(self):
        x = rand((2, 9, 4, 4), seed=11)
        y = T.sub_channel_mean(x)
        np.testing.assert_allclose(y.data.sum(axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize("shape", [(3,), (2, 5), (1, 2, 4, 4)])
def test_elementwise_gradcheck(shape):
    def build(fn, seed):
        x = rand(shape, seed=seed)
        return x, lambda ps: T.tsum(fn(ps[0]))

    for seed, fn in enumerate([
        T.sigmoid,
        T.tanh,
        lambda t: T.exp(T.mul_scalar(t, 0.5)),
        lambda t: T.leaky_relu(t, 0.2),
        T.softplus,
        T.square,
        T.absolute,
        lambda t: T.div(T.square(t), T.add_scalar(T.square(t), 1.5)),
    ]):
        x, f = build(fn, seed + 20)
        report = gradcheck(f, [x])
        assert report.passed, report.summary()
