"""Minimal float64 network substrate: linear layers, activations, an LSTM
cell with exact backpropagation through time, Adam, polyak averaging and a
finite-difference gradient checker.

All arrays are float64, batch-first.  Sequences have shape (B, T, dim).
Layers hold parameters and gradient accumulators; forward passes return an
explicit cache object that the matching backward pass consumes.  Backward
passes accumulate into the layer's gradient buffers (call ``zero_grads``
before starting a fresh gradient computation) and return the gradient with
respect to their inputs.

LSTM gate order is fixed as [input, forget, cell-candidate, output] and the
cell uses two bias vectors per gate block (``b_ih`` and ``b_hh``).
"""

import numpy as np


class NumericFault(RuntimeError):
    """A forward or backward pass produced a non-finite value."""


def _sigmoid(x):
    # tanh-based form: numpy's tanh is SIMD-vectorised and beats expit here
    return 0.5 * np.tanh(0.5 * x) + 0.5


def uniform_init(rng, shape, fan_in):
    """Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], used for every tensor."""
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Linear:
    """y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, in_dim, out_dim, rng):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = uniform_init(rng, (out_dim, in_dim), in_dim)
        self.b = uniform_init(rng, (out_dim,), in_dim)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    @property
    def params(self):
        return [self.w, self.b]

    @property
    def grads(self):
        return [self.dw, self.db]

    def forward(self, x):
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"linear layer expects input dim {self.in_dim}, got {x.shape[-1]}"
            )
        return x @ self.w.T + self.b, x

    def backward(self, cache, dy):
        x = cache
        if dy.shape != (x.shape[0], self.out_dim):
            raise ValueError(
                f"upstream gradient shape {dy.shape} does not match "
                f"({x.shape[0]}, {self.out_dim})"
            )
        self.dw += dy.T @ x
        self.db += dy.sum(axis=0)
        return dy @ self.w


def relu(x):
    mask = x > 0.0
    return x * mask, mask


def relu_backward(mask, dy):
    return dy * mask


class LSTMState:
    """Hidden/cell pair carried across time steps.  Both have shape (B, H)."""

    __slots__ = ("h", "c")

    def __init__(self, h, c):
        self.h = h
        self.c = c

    @classmethod
    def zeros(cls, batch, hidden):
        return cls(np.zeros((batch, hidden)), np.zeros((batch, hidden)))

    def copy(self):
        return LSTMState(self.h.copy(), self.c.copy())


class _SeqCache:
    """Per-step activations retained by ``LSTM.forward_seq`` for exact BPTT.

    ``gates`` stacks the activated gate values [i, f, g, o] along the last
    axis, shape (B, T, 4H)."""

    __slots__ = ("xs", "hs", "gates", "c", "tanh_c", "h0", "c0")

    def __init__(self, xs, hs, gates, c, tanh_c, h0, c0):
        self.xs = xs
        self.hs = hs
        self.gates = gates
        self.c = c
        self.tanh_c = tanh_c
        self.h0 = h0
        self.c0 = c0


class LSTM:
    """Single LSTM layer.  Parameter count is 4*(H*in + H*H + 2H)."""

    def __init__(self, in_dim, hidden, rng, name="lstm"):
        self.in_dim = in_dim
        self.hidden = hidden
        self.name = name
        h = hidden
        self.w_ih = uniform_init(rng, (4 * h, in_dim), in_dim)
        self.b_ih = uniform_init(rng, (4 * h,), in_dim)
        self.w_hh = uniform_init(rng, (4 * h, h), h)
        self.b_hh = uniform_init(rng, (4 * h,), h)
        self.dw_ih = np.zeros_like(self.w_ih)
        self.db_ih = np.zeros_like(self.b_ih)
        self.dw_hh = np.zeros_like(self.w_hh)
        self.db_hh = np.zeros_like(self.b_hh)

    @property
    def params(self):
        return [self.w_ih, self.b_ih, self.w_hh, self.b_hh]

    @property
    def grads(self):
        return [self.dw_ih, self.db_ih, self.dw_hh, self.db_hh]

    def step(self, x, state):
        """One cell step without caching; used on the rollout path."""
        h = self.hidden
        z = x @ self.w_ih.T + self.b_ih + state.h @ self.w_hh.T + self.b_hh
        ifo = _sigmoid(np.concatenate([z[:, : 2 * h], z[:, 3 * h :]], axis=1))
        i, f, o = ifo[:, :h], ifo[:, h : 2 * h], ifo[:, 2 * h :]
        g = np.tanh(z[:, 2 * h : 3 * h])
        c_new = f * state.c + i * g
        h_new = o * np.tanh(c_new)
        if not np.all(np.isfinite(h_new)):
            raise NumericFault(f"{self.name}: non-finite output in single step")
        return h_new, LSTMState(h_new, c_new)

    def forward_seq(self, xs, state0=None):
        """Run the cell over xs of shape (B, T, in_dim).

        Returns (hs, last_state, cache) where hs is (B, T, H).  The cache
        retains every per-step activation needed for exact BPTT.
        """
        B, T, in_dim = xs.shape
        if T < 1:
            raise ValueError("forward_seq requires a sequence of length >= 1")
        if in_dim != self.in_dim:
            raise ValueError(
                f"{self.name}: expected input dim {self.in_dim}, got {in_dim}"
            )
        H = self.hidden
        if state0 is None:
            h = np.zeros((B, H))
            c = np.zeros((B, H))
        else:
            h = state0.h
            c = state0.c
        h0, c0 = h, c

        # Input projection for the whole sequence in one gemm; both biases
        # are folded in here so the step loop only adds the recurrent term.
        xproj = (xs.reshape(B * T, in_dim) @ self.w_ih.T).reshape(B, T, 4 * H)
        xproj += self.b_ih + self.b_hh

        hs = np.empty((B, T, H))
        gates = np.empty((B, T, 4 * H))
        cs = np.empty((B, T, H))
        tcs = np.empty((B, T, H))
        z = np.empty((B, 4 * H))
        for t in range(T):
            np.matmul(h, self.w_hh.T, out=z)
            z += xproj[:, t, :]
            # single contiguous tanh: sigmoid(x) = 0.5*tanh(0.5x) + 0.5 on
            # the i, f, o blocks; the candidate block keeps plain tanh
            z[:, : 2 * H] *= 0.5
            z[:, 3 * H :] *= 0.5
            g_t = gates[:, t]
            np.tanh(z, out=g_t)
            g_t[:, : 2 * H] *= 0.5
            g_t[:, : 2 * H] += 0.5
            g_t[:, 3 * H :] *= 0.5
            g_t[:, 3 * H :] += 0.5
            c_t = cs[:, t]
            np.multiply(g_t[:, H : 2 * H], c, out=c_t)
            c_t += g_t[:, :H] * g_t[:, 2 * H : 3 * H]
            c = c_t
            tc = np.tanh(c_t, out=tcs[:, t])
            h = np.multiply(g_t[:, 3 * H :], tc, out=hs[:, t])
        if not np.all(np.isfinite(h)):
            bad = [t for t in range(T) if not np.all(np.isfinite(hs[:, t]))]
            raise NumericFault(
                f"{self.name}: non-finite output at step {bad[0] if bad else T - 1}"
            )
        cache = _SeqCache(xs, hs, gates, cs, tcs, h0, c0)
        return hs, LSTMState(h.copy(), c.copy()), cache

    def backward_seq(self, cache, dhs, dh_last=None, dc_last=None):
        """Exact BPTT for a matching ``forward_seq`` call.

        dhs is the upstream gradient on every step's output, shape (B, T, H);
        dh_last/dc_last optionally add gradient on the final state.  Returns
        (dxs, dh0, dc0) and accumulates parameter gradients.
        """
        B, T, H = cache.hs.shape
        if dhs.shape != (B, T, H):
            raise ValueError(
                f"{self.name}: upstream gradient shape {dhs.shape} does not "
                f"match cached forward shape {(B, T, H)}"
            )
        dh = np.zeros((B, H)) if dh_last is None else dh_last.copy()
        dc = np.zeros((B, H)) if dc_last is None else dc_last.copy()
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.empty((B, H))
        for t in range(T - 1, -1, -1):
            g_t = cache.gates[:, t]
            i = g_t[:, :H]
            f = g_t[:, H : 2 * H]
            g = g_t[:, 2 * H : 3 * H]
            o = g_t[:, 3 * H :]
            tc = cache.tanh_c[:, t]
            c_prev = cache.c[:, t - 1] if t > 0 else cache.c0
            dh += dhs[:, t]
            dc += dh * o * (1.0 - tc * tc)
            dz = dz_all[:, t]
            np.multiply(dc * g, i - i * i, out=dz[:, :H])
            np.multiply(dc * c_prev, f - f * f, out=dz[:, H : 2 * H])
            np.multiply(dc * i, 1.0 - g * g, out=dz[:, 2 * H : 3 * H])
            np.multiply(dh * tc, o - o * o, out=dz[:, 3 * H :])
            np.matmul(dz, self.w_hh, out=dh_next)
            dh, dh_next = dh_next, dh
            dc *= f
        dz_flat = dz_all.reshape(B * T, 4 * H)
        h_prev = np.concatenate([cache.h0[:, None, :], cache.hs[:, :-1, :]], axis=1)
        self.dw_ih += dz_flat.T @ cache.xs.reshape(B * T, self.in_dim)
        self.dw_hh += dz_flat.T @ h_prev.reshape(B * T, H)
        dbias = dz_flat.sum(axis=0)
        self.db_ih += dbias
        self.db_hh += dbias
        dxs = (dz_flat @ self.w_ih).reshape(B, T, self.in_dim)
        return dxs, dh, dc


class Adam:
    """Bias-corrected Adam over a flat list of parameter arrays (in place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1 ** self.t)
        inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - b2 ** self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter {p.shape}"
                )
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            denom = np.sqrt(v)
            denom *= inv_sqrt_c2
            denom += self.eps
            denom /= step_size     # p -= step_size * m / denom, two passes
            p -= m / denom


def polyak_update(target_params, source_params, tau):
    """theta_target <- tau*theta_source + (1-tau)*theta_target, elementwise."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if len(target_params) != len(source_params):
        raise ValueError("parameter lists differ in length")
    for t, s in zip(target_params, source_params):
        if t.shape != s.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {s.shape}")
        t *= 1.0 - tau
        t += tau * s


def param_count(params):
    return int(sum(p.size for p in params))


def copy_params(dst_params, src_params):
    """Hard copy src into dst (used to initialise target networks)."""
    for d, s in zip(dst_params, src_params):
        d[...] = s


def grad_check(params, loss_fn, eps=1e-5):
    """Compare analytic gradients against central finite differences.

    ``loss_fn()`` must return (scalar loss, list of gradient arrays aligned
    with ``params``) evaluated at the current parameter values.  Every scalar
    parameter is perturbed by +-eps.  Returns (max_rel_err, where) with
    ``where`` identifying the worst (param index, flat offset).

    Relative error is |fd - analytic| / max(|fd| + |analytic|, floor) where
    the floor is 1e-3 times the largest analytic gradient magnitude (at
    least 1e-8).  Without the floor, components whose true gradient is many
    orders below the gradient scale would be dominated by the cancellation
    noise of the finite differences themselves rather than by any defect in
    the backward pass.
    """
    _, grads = loss_fn()
    analytic = [g.copy() for g in grads]
    scale = max(float(np.abs(g).max()) for g in analytic) if analytic else 0.0
    floor = max(1e-3 * scale, 1e-8)
    worst = 0.0
    where = (0, 0)
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            lo_plus, _ = loss_fn()
            flat[k] = orig - eps
            lo_minus, _ = loss_fn()
            flat[k] = orig
            if not (np.isfinite(lo_plus) and np.isfinite(lo_minus)):
                raise NumericFault(
                    f"non-finite loss while perturbing param {pi} offset {k}"
                )
            fd = (lo_plus - lo_minus) / (2.0 * eps)
            an = analytic[pi].reshape(-1)[k]
            rel = abs(fd - an) / max(abs(fd) + abs(an), floor)
            if rel > worst:
                worst = rel
                where = (pi, k)
    return worst, where
