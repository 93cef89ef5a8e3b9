import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtd3 import nn


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def lstm_step_scalar(layer, x, h, c):
    """Scalar-loop oracle for one LSTM step, independent of the vectorised path."""
    H = layer.hidden
    h_new = np.zeros(H)
    c_new = np.zeros(H)
    for k in range(H):
        zi = layer.b_ih[k] + layer.b_hh[k]
        zf = layer.b_ih[H + k] + layer.b_hh[H + k]
        zg = layer.b_ih[2 * H + k] + layer.b_hh[2 * H + k]
        zo = layer.b_ih[3 * H + k] + layer.b_hh[3 * H + k]
        for j in range(layer.in_dim):
            zi += layer.w_ih[k, j] * x[j]
            zf += layer.w_ih[H + k, j] * x[j]
            zg += layer.w_ih[2 * H + k, j] * x[j]
            zo += layer.w_ih[3 * H + k, j] * x[j]
        for j in range(H):
            zi += layer.w_hh[k, j] * h[j]
            zf += layer.w_hh[H + k, j] * h[j]
            zg += layer.w_hh[2 * H + k, j] * h[j]
            zo += layer.w_hh[3 * H + k, j] * h[j]
        i, f, g, o = sigmoid(zi), sigmoid(zf), np.tanh(zg), sigmoid(zo)
        c_new[k] = f * c[k] + i * g
        h_new[k] = o * np.tanh(c_new[k])
    return h_new, c_new


class TestLinear:
    def test_identity_weights(self):
        lin = nn.Linear(2, 2, np.random.default_rng(0))
        lin.w[...] = np.eye(2)
        lin.b[...] = 0.0
        y, _ = lin.forward(np.array([[3.0, -1.0]]))
        np.testing.assert_array_equal(y, [[3.0, -1.0]])

    def test_zero_weights_return_bias(self):
        lin = nn.Linear(2, 2, np.random.default_rng(0))
        lin.w[...] = 0.0
        lin.b[...] = [1.0, 2.0]
        y, _ = lin.forward(np.array([[17.0, -4.0], [0.5, 0.5]]))
        np.testing.assert_array_equal(y, [[1.0, 2.0], [1.0, 2.0]])

    def test_param_count(self):
        lin = nn.Linear(4, 128, np.random.default_rng(0))
        assert nn.param_count(lin.params) == 4 * 128 + 128 == 640

    def test_dim_mismatch_raises(self):
        lin = nn.Linear(3, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            lin.forward(np.zeros((1, 4)))

    def test_backward_matches_analytic_product(self):
        rng = np.random.default_rng(1)
        lin = nn.Linear(3, 2, rng)
        x = rng.standard_normal((5, 3))
        _, cache = lin.forward(x)
        dy = rng.standard_normal((5, 2))
        dx = lin.backward(cache, dy)
        np.testing.assert_allclose(dx, dy @ lin.w, rtol=0, atol=0)
        np.testing.assert_allclose(lin.dw, dy.T @ x, rtol=0, atol=0)
        np.testing.assert_allclose(lin.db, dy.sum(0), rtol=0, atol=0)

    def test_init_range(self):
        lin = nn.Linear(16, 64, np.random.default_rng(2))
        lim = 1.0 / 4.0
        assert np.all(np.abs(lin.w) <= lim) and np.all(np.abs(lin.b) <= lim)


class TestLSTMForward:
    def test_zero_weights_zero_output(self):
        rng = np.random.default_rng(0)
        layer = nn.LSTM(3, 5, rng)
        for p in layer.params:
            p[...] = 0.0
        x = rng.standard_normal((2, 3))
        h, state = layer.step(x, nn.LSTMState.zeros(2, 5))
        np.testing.assert_array_equal(h, np.zeros((2, 5)))
        np.testing.assert_array_equal(state.c, np.zeros((2, 5)))

    def test_param_count_128(self):
        layer = nn.LSTM(128, 128, np.random.default_rng(0))
        assert nn.param_count(layer.params) == 4 * (128 * 128 + 128 * 128 + 2 * 128)
        assert nn.param_count(layer.params) == 132096

    def test_step_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        layer = nn.LSTM(4, 6, rng)
        x = rng.standard_normal(4)
        h0 = rng.standard_normal(6)
        c0 = rng.standard_normal(6)
        h_ref, c_ref = lstm_step_scalar(layer, x, h0, c0)
        h_vec, state = layer.step(x[None], nn.LSTMState(h0[None].copy(), c0[None].copy()))
        np.testing.assert_allclose(h_vec[0], h_ref, atol=1e-12, rtol=0)
        np.testing.assert_allclose(state.c[0], c_ref, atol=1e-12, rtol=0)

    def test_length_one_sequence_equals_step(self):
        rng = np.random.default_rng(3)
        layer = nn.LSTM(3, 4, rng)
        x = rng.standard_normal((2, 1, 3))
        hs, last, _ = layer.forward_seq(x)
        h_step, state = layer.step(x[:, 0], nn.LSTMState.zeros(2, 4))
        np.testing.assert_allclose(hs[:, 0], h_step, atol=1e-12, rtol=0)
        np.testing.assert_allclose(last.c, state.c, atol=1e-12, rtol=0)

    def test_empty_sequence_rejected(self):
        layer = nn.LSTM(3, 4, np.random.default_rng(0))
        with pytest.raises(ValueError):
            layer.forward_seq(np.zeros((2, 0, 3)))

    def test_forward_deterministic(self):
        rng = np.random.default_rng(11)
        layer = nn.LSTM(5, 8, rng)
        xs = rng.standard_normal((4, 6, 5))
        hs1, last1, _ = layer.forward_seq(xs)
        hs2, last2, _ = layer.forward_seq(xs)
        assert np.array_equal(hs1, hs2) and np.array_equal(last1.c, last2.c)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        length=st.integers(2, 12),
        split=st.integers(1, 11),
    )
    def test_carry_state_identity(self, seed, length, split):
        split = min(split, length - 1)
        rng = np.random.default_rng(seed)
        layer = nn.LSTM(3, 6, rng)
        xs = rng.standard_normal((2, length, 3))
        _, last_full, _ = layer.forward_seq(xs)
        _, mid, _ = layer.forward_seq(xs[:, :split])
        _, last_split, _ = layer.forward_seq(xs[:, split:], state0=mid)
        np.testing.assert_allclose(last_full.h, last_split.h, atol=1e-12, rtol=0)
        np.testing.assert_allclose(last_full.c, last_split.c, atol=1e-12, rtol=0)


class TestLSTMBackward:
    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(5)
        layer = nn.LSTM(3, 4, rng)
        xs = rng.standard_normal((2, 5, 3))
        hs, _, cache = layer.forward_seq(xs)
        dxs, dh0, dc0 = layer.backward_seq(cache, np.zeros_like(hs))
        for g in layer.grads:
            np.testing.assert_array_equal(g, np.zeros_like(g))
        np.testing.assert_array_equal(dxs, np.zeros_like(xs))
        np.testing.assert_array_equal(dh0, np.zeros((2, 4)))
        np.testing.assert_array_equal(dc0, np.zeros((2, 4)))

    def test_shape_mismatch_fatal(self):
        rng = np.random.default_rng(5)
        layer = nn.LSTM(3, 4, rng)
        xs = rng.standard_normal((2, 5, 3))
        _, _, cache = layer.forward_seq(xs)
        with pytest.raises(ValueError):
            layer.backward_seq(cache, np.zeros((2, 4, 4)))

    def test_gradcheck_lstm_params_and_inputs(self):
        rng = np.random.default_rng(9)
        layer = nn.LSTM(3, 8, rng)
        xs = rng.standard_normal((2, 4, 3))
        w_loss = rng.standard_normal((2, 4, 8))

        def loss_fn():
            for g in layer.grads:
                g[...] = 0.0
            hs, _, cache = layer.forward_seq(xs)
            loss = float((w_loss * hs).sum())
            layer.backward_seq(cache, w_loss.copy())
            return loss, layer.grads

        err, _ = nn.grad_check(layer.params, loss_fn, eps=1e-5)
        assert err < 1e-6

    def test_gradcheck_initial_state(self):
        # finite differences on h0/c0 against the returned state gradients
        rng = np.random.default_rng(13)
        layer = nn.LSTM(2, 4, rng)
        xs = rng.standard_normal((1, 3, 2))
        h0 = rng.standard_normal((1, 4))
        c0 = rng.standard_normal((1, 4))
        w_loss = rng.standard_normal((1, 3, 4))

        def loss_at(h0v, c0v):
            hs, _, _ = layer.forward_seq(xs, state0=nn.LSTMState(h0v, c0v))
            return float((w_loss * hs).sum())

        hs, _, cache = layer.forward_seq(xs, state0=nn.LSTMState(h0, c0))
        _, dh0, dc0 = layer.backward_seq(cache, w_loss.copy())
        eps = 1e-6
        for arr, analytic in ((h0, dh0), (c0, dc0)):
            for k in range(4):
                orig = arr[0, k]
                arr[0, k] = orig + eps
                lp = loss_at(h0, c0)
                arr[0, k] = orig - eps
                lm = loss_at(h0, c0)
                arr[0, k] = orig
                fd = (lp - lm) / (2 * eps)
                assert abs(fd - analytic[0, k]) / max(abs(fd) + abs(analytic[0, k]), 1e-8) < 1e-6


class TestGradCheckHarness:
    def test_linear_net(self):
        rng = np.random.default_rng(21)
        lin = nn.Linear(4, 3, rng)
        x = rng.standard_normal((5, 4))
        w_loss = rng.standard_normal((5, 3))

        def loss_fn():
            lin.dw[...] = 0.0
            lin.db[...] = 0.0
            y, cache = lin.forward(x)
            lin.backward(cache, w_loss.copy())
            return float((w_loss * y).sum()), lin.grads

        err, _ = nn.grad_check(lin.params, loss_fn, eps=1e-5)
        assert err < 1e-8

    def test_corrupted_gradient_detected(self):
        rng = np.random.default_rng(22)
        lin = nn.Linear(3, 2, rng)
        x = rng.standard_normal((4, 3))
        w_loss = rng.standard_normal((4, 2))

        def loss_fn():
            lin.dw[...] = 0.0
            lin.db[...] = 0.0
            y, cache = lin.forward(x)
            lin.backward(cache, w_loss.copy())
            lin.dw[0, 0] *= 2.0  # deliberate corruption
            return float((w_loss * y).sum()), lin.grads

        err, (pi, k) = nn.grad_check(lin.params, loss_fn, eps=1e-5)
        assert err > 0.3
        assert (pi, k) == (0, 0)


class TestAdam:
    def test_zero_grad_no_change(self):
        p = np.ones((3, 3))
        opt = nn.Adam([p], lr=0.1)
        opt.step([np.zeros_like(p)])
        np.testing.assert_array_equal(p, np.ones((3, 3)))

    def test_single_step_hand_value(self):
        p = np.zeros(1)
        opt = nn.Adam([p], lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8)
        opt.step([np.ones(1)])
        expected = -0.001 * 1.0 / (1.0 + 1e-8)
        np.testing.assert_allclose(p[0], expected, rtol=1e-12)

    def test_constant_gradient_steps_shrink(self):
        p = np.zeros(1)
        opt = nn.Adam([p], lr=0.001)
        opt.step([np.ones(1)])
        d1 = abs(p[0])
        prev = p[0]
        opt.step([np.ones(1)])
        d2 = abs(p[0] - prev)
        assert d2 < d1

    def test_shape_mismatch(self):
        p = np.zeros((2, 2))
        opt = nn.Adam([p])
        with pytest.raises(ValueError):
            opt.step([np.zeros(3)])


class TestPolyak:
    def test_tau_zero_keeps_target(self):
        t = np.full((2, 2), 7.0)
        nn.polyak_update([t], [np.zeros((2, 2))], 0.0)
        np.testing.assert_array_equal(t, np.full((2, 2), 7.0))

    def test_tau_one_copies_source(self):
        t = np.zeros(3)
        nn.polyak_update([t], [np.arange(3.0)], 1.0)
        np.testing.assert_array_equal(t, np.arange(3.0))

    def test_tau_half(self):
        t = np.zeros(1)
        nn.polyak_update([t], [np.full(1, 2.0)], 0.5)
        np.testing.assert_array_equal(t, [1.0])

    def test_geometric_decay(self):
        rng = np.random.default_rng(31)
        t = rng.standard_normal(50)
        s = rng.standard_normal(50)
        tau = 0.005
        gap = np.linalg.norm(t - s)
        for _ in range(20):
            nn.polyak_update([t], [s], tau)
            new_gap = np.linalg.norm(t - s)
            np.testing.assert_allclose(new_gap, (1 - tau) * gap, rtol=1e-9)
            gap = new_gap

    def test_tau_out_of_range(self):
        with pytest.raises(ValueError):
            nn.polyak_update([np.zeros(1)], [np.zeros(1)], 1.5)
