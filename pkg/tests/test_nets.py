import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nfsip import nets
from nfsip.nets import (
    ParameterSet,
    backward,
    finite_difference_gradient,
    forward,
    init_params,
    layer_norm,
    load_params,
    max_relative_error,
    optimizer_step,
    params_from_tensors,
    save_params,
    softmax,
    zeros_like_params,
)


def zero_net(inp=2, out=2, hidden=(3,)):
    p = init_params(inp, out, hidden, np.random.default_rng(0))
    for w in p.weights:
        w[:] = 0.0
    for b in p.biases:
        b[:] = 0.0
    return p


class TestForward:
    def test_zero_network_outputs_zero(self):
        p = zero_net()
        out, _ = forward(p, np.array([1.3, -0.7]))
        assert np.allclose(out, 0.0)

    def test_hand_computed_toy_net(self):
        # One hidden layer of 2 units, hand arithmetic as the oracle.
        rng = np.random.default_rng(5)
        p = init_params(2, 2, (2,), rng)
        x = np.array([1.0, -1.0])
        z = x @ p.weights[0] + p.biases[0]
        mu, var = z.mean(), z.var()
        xhat = (z - mu) / np.sqrt(var + nets.LAYER_NORM_EPS)
        h = np.maximum(p.gains[0] * xhat + p.offsets[0], 0.0)
        expected = h @ p.weights[1] + p.biases[1]
        out, _ = forward(p, x)
        assert np.allclose(out, expected, atol=1e-12)

    def test_deterministic(self):
        p = init_params(4, 3, (8, 8), np.random.default_rng(1))
        x = np.random.default_rng(2).normal(size=4)
        a, _ = forward(p, x)
        b, _ = forward(p, x)
        assert np.array_equal(a, b)

    def test_dimension_mismatch_rejected(self):
        p = init_params(4, 3, (8,), np.random.default_rng(1))
        with pytest.raises(ValueError, match="input length"):
            forward(p, np.zeros(5))

    def test_bad_head_rejected(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        with pytest.raises(ValueError, match="head"):
            forward(p, np.zeros(2), head="value")

    def test_batch_matches_single(self):
        p = init_params(3, 2, (4,), np.random.default_rng(3))
        xs = np.random.default_rng(4).normal(size=(5, 3))
        batch_out, _ = forward(p, xs)
        for i in range(5):
            single, _ = forward(p, xs[i])
            assert np.allclose(single, batch_out[i], atol=1e-14)


class TestLayerNorm:
    def test_constant_input_normalizes_to_zero(self):
        out = layer_norm(np.array([1.0, 1.0]), np.ones(2), np.zeros(2))
        assert np.allclose(out, 0.0)

    def test_unit_variance_pair(self):
        out = layer_norm(np.array([0.0, 2.0]), np.ones(2), np.zeros(2), eps=1e-12)
        assert np.allclose(out, [-1.0, 1.0], atol=1e-5)

    def test_output_moments(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=64)
        out = layer_norm(x, np.ones(64), np.zeros(64), eps=1e-12)
        assert abs(out.mean()) < 1e-10
        assert abs(out.var() - 1.0) < 1e-6

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            layer_norm(np.zeros(3), np.ones(2), np.zeros(2))

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(ValueError):
            layer_norm(np.zeros(2), np.ones(2), np.zeros(2), eps=0.0)


class TestSoftmax:
    def test_symmetric_pairs(self):
        assert np.allclose(softmax(np.zeros(2)), [0.5, 0.5])
        assert np.allclose(softmax(np.full(4, 3.7)), 0.25)

    def test_large_logits_no_overflow(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(out))
        assert out[0] > 0.999

    @given(
        st.lists(st.floats(-50, 50), min_size=2, max_size=8),
        st.floats(-100, 100),
    )
    @settings(max_examples=50, deadline=None)
    def test_shift_invariance_and_normalization(self, logits, shift):
        a = softmax(np.array(logits))
        b = softmax(np.array(logits) + shift)
        assert abs(a.sum() - 1.0) < 1e-6
        assert np.all(a >= 0)
        assert np.allclose(a, b, atol=1e-9)
        assert np.argmax(a) == np.argmax(b)


class TestBackward:
    def test_zero_output_grad(self):
        p = init_params(3, 2, (4,), np.random.default_rng(0))
        x = np.ones(3)
        _, trace = forward(p, x)
        g = backward(p, trace, np.zeros(2))
        assert all(np.allclose(a, 0.0) for _, a in g.tensors())

    def test_linearity(self):
        p = init_params(3, 2, (4,), np.random.default_rng(0))
        _, trace = forward(p, np.array([0.3, -1.1, 0.4]))
        og = np.array([0.7, -0.2])
        g1 = backward(p, trace, og)
        g2 = backward(p, trace, 2.0 * og)
        for (_, a), (_, b) in zip(g1.tensors(), g2.tensors()):
            assert np.allclose(2.0 * a, b, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            p = init_params(2, 2, (2,), rng)
            x = rng.normal(size=2)
            og = rng.normal(size=2)

            def loss(params):
                out, _ = forward(params, x)
                return float(out @ og)

            _, trace = forward(p, x)
            analytic = backward(p, trace, og)
            fd = finite_difference_gradient(loss, p)
            assert max_relative_error(analytic, fd) < 1e-4

    def test_trace_mismatch_rejected(self):
        p1 = init_params(3, 2, (4,), np.random.default_rng(0))
        p2 = init_params(3, 2, (4, 4), np.random.default_rng(1))
        _, trace = forward(p1, np.zeros(3))
        with pytest.raises(ValueError):
            backward(p2, trace, np.zeros(2))


class TestOptimizer:
    def test_zero_gradient_identity_sgd(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        before = p.copy()
        state = nets.OptimizerState(mode="sgd")
        optimizer_step(p, zeros_like_params(p), 0.1, state)
        for (_, a), (_, b) in zip(p.tensors(), before.tensors()):
            assert np.array_equal(a, b)

    def test_zero_lr_identity(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        g = zeros_like_params(p)
        g.weights[0][:] = 1.0
        before = p.copy()
        optimizer_step(p, g, 0.0, nets.OptimizerState(mode="sgd"))
        for (_, a), (_, b) in zip(p.tensors(), before.tensors()):
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("mode", ["sgd", "adam"])
    def test_quadratic_converges_to_minimizer(self, mode):
        # Single-parameter quadratic (w - 3)^2, gradient 2(w - 3).
        p = ParameterSet([np.array([[5.0]])], [np.array([0.0])], [], [])
        state = nets.OptimizerState(mode=mode)
        for _ in range(2000):
            g = ParameterSet(
                [2.0 * (p.weights[0] - 3.0)], [np.zeros(1)], [], []
            )
            optimizer_step(p, g, 0.05, state)
        assert abs(p.weights[0][0, 0] - 3.0) < 1e-3

    def test_nonfinite_gradient_rejected(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        g = zeros_like_params(p)
        g.weights[0][0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            optimizer_step(p, g, 0.1, nets.OptimizerState())


class TestFiniteDifference:
    def test_quadratic_derivative(self):
        p = ParameterSet([np.array([[3.0]])], [np.array([0.0])], [], [])
        fd = finite_difference_gradient(
            lambda q: float(q.weights[0][0, 0] ** 2), p, h=1e-5
        )
        assert abs(fd.weights[0][0, 0] - 6.0) < 1e-6

    def test_zero_loss_zero_gradient(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        fd = finite_difference_gradient(lambda q: 0.0, p)
        assert all(np.allclose(a, 0.0) for _, a in fd.tensors())

    def test_bad_h_rejected(self):
        p = init_params(2, 2, (2,), np.random.default_rng(0))
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda q: 0.0, p, h=0.0)


class TestCheckpoint:
    def test_round_trip_reproduces_forward(self, tmp_path):
        p = init_params(5, 3, (8, 8), np.random.default_rng(7))
        path = tmp_path / "ckpt.txt"
        save_params(path, {"q": p})
        restored = params_from_tensors(load_params(path)["q"])
        x = np.random.default_rng(8).normal(size=5)
        a, _ = forward(p, x)
        b, _ = forward(restored, x)
        assert np.allclose(a, b, atol=1e-7)

    def test_magic_line_checked(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-checkpoint\n")
        with pytest.raises(ValueError, match="header"):
            load_params(path)
