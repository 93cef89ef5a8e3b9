"""The five agent variants: shared twin-critic machinery with delayed actor
updates and target-policy smoothing, parameterised by network structure and
update pathway.

Variant kinds and their networks (hidden width 128 throughout):

  td3           feed-forward actor/critic on the current observation only
  lstm_td3      double input channel: a recurrent channel over the past
                window of (observation, action-at-step) pairs (observations
                only when ``include_action`` is off) plus a feed-forward
                channel on the current input, concatenated into the head
  lstm_1ha1hc   one recurrent channel over the full window including the
                current step; the actor consumes (o_k, a_{k-1}) pairs, the
                critic the realigned (o_k, a_k) pairs
  lstm_1ha2hc   actor as 1ha1hc; critic keeps the recurrent channel on the
                actor-aligned window and feeds the current action through a
                second feed-forward channel
  h_td3         networks as 1ha1hc; critics and targets never replay
                windows - each consumes exactly one step with the LSTM
                seeded from hidden/cell states recorded from the behaviour
                actor during rollout (the saving applies to the critics;
                the delayed actor step still replays its own window)

History windows are front-aligned with ``valid`` live rows (see replay);
an empty window degenerates to one all-zero input row, whose output the
two-channel nets read in place of history.  Episode cutoffs are a time
horizon, so TD targets bootstrap through the done flag.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .nn import (
    LSTM,
    Adam,
    Linear,
    LSTMState,
    copy_params,
    polyak_update,
    relu,
    relu_backward,
)

VARIANT_KINDS = ("td3", "lstm_td3", "lstm_1ha1hc", "lstm_1ha2hc", "h_td3")
ACT_LIMIT = 2.0


@dataclass
class VariantSpec:
    kind: str
    include_action: bool = True
    l: int = 3
    obs_dim: int = 3
    act_dim: int = 1
    hidden: int = 128

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ValueError(f"unknown variant kind {self.kind!r}")
        if self.recurrent and self.l < 1:
            raise ValueError("history length l must be >= 1 for recurrent variants")

    @property
    def recurrent(self):
        return self.kind != "td3"

    @property
    def label(self):
        if self.kind == "lstm_td3":
            return "lstm_td3" if self.include_action else "lstm_td3_noact"
        return self.kind

    def to_dict(self):
        d = {"kind": self.kind, "l": self.l,
             "obs_dim": self.obs_dim, "act_dim": self.act_dim}
        if self.kind == "lstm_td3":
            d["include_action"] = self.include_action
        return d

    def config_dict(self):
        """Serialisation for run configs: derived dims stripped."""
        d = self.to_dict()
        d.pop("obs_dim")
        d.pop("act_dim")
        return d


@dataclass
class Hyperparams:
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    exploration_noise_sigma: float = 0.1
    batch_size: int = 64
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    start_steps: int = 1000
    updates_per_step: int = 1
    buffer_capacity: int = 100000

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# network building blocks


class SeqChannel:
    """Per-step Linear+ReLU feeding an LSTM; emits one hidden state per
    sample, selected by a per-sample step index."""

    def __init__(self, in_dim, hidden, rng, name="seq"):
        self.in_dim = in_dim
        self.hidden = hidden
        self.lin = Linear(in_dim, hidden, rng)
        self.lstm = LSTM(hidden, hidden, rng, name=name)

    @property
    def layers(self):
        return [self.lin, self.lstm]

    def forward(self, xs, idx, state0=None):
        B, T, d = xs.shape
        u, lin_cache = self.lin.forward(xs.reshape(B * T, d))
        a, mask = relu(u)
        hs, last, lstm_cache = self.lstm.forward_seq(
            a.reshape(B, T, self.hidden), state0
        )
        feat = hs[np.arange(B), idx]
        return feat, (lin_cache, mask, lstm_cache, idx, (B, T, d)), last

    def backward(self, cache, dfeat):
        lin_cache, mask, lstm_cache, idx, (B, T, d) = cache
        dhs = np.zeros((B, T, self.hidden))
        dhs[np.arange(B), idx] = dfeat
        dxs, dh0, dc0 = self.lstm.backward_seq(lstm_cache, dhs)
        du = relu_backward(mask, dxs.reshape(B * T, self.hidden))
        dflat = self.lin.backward(lin_cache, du)
        return dflat.reshape(B, T, d), dh0, dc0


class CurChannel:
    """Linear+ReLU feature extractor for the current-step input."""

    def __init__(self, in_dim, hidden, rng):
        self.lin = Linear(in_dim, hidden, rng)

    @property
    def layers(self):
        return [self.lin]

    def forward(self, x):
        u, lin_cache = self.lin.forward(x)
        a, mask = relu(u)
        return a, (lin_cache, mask)

    def backward(self, cache, dfeat):
        lin_cache, mask = cache
        return self.lin.backward(lin_cache, relu_backward(mask, dfeat))


class Head:
    """Linear+ReLU+Linear head; actors append tanh scaled to the torque
    bound, critics emit the raw scalar."""

    def __init__(self, in_dim, hidden, rng, tanh_limit=None):
        self.l1 = Linear(in_dim, hidden, rng)
        self.l2 = Linear(hidden, 1, rng)
        self.tanh_limit = tanh_limit

    @property
    def layers(self):
        return [self.l1, self.l2]

    def forward(self, x):
        u, c1 = self.l1.forward(x)
        a, mask = relu(u)
        y, c2 = self.l2.forward(a)
        t = None
        if self.tanh_limit is not None:
            t = np.tanh(y)
            y = self.tanh_limit * t
        return y, (c1, mask, c2, t)

    def backward(self, cache, dy):
        c1, mask, c2, t = cache
        if self.tanh_limit is not None:
            dy = dy * self.tanh_limit * (1.0 - t * t)
        da = self.l2.backward(c2, dy)
        return self.l1.backward(c1, relu_backward(mask, da))


def _collect(parts):
    layers = []
    for part in parts:
        layers.extend(part.layers)
    return layers


class _NetBase:
    parts = ()
    part_names = ()

    @property
    def layers(self):
        return _collect(self.parts)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0

    def named_params(self):
        out = []
        for part_name, part in zip(self.part_names, self.parts):
            for li, layer in enumerate(part.layers):
                names = (
                    ("w", "b") if isinstance(layer, Linear)
                    else ("w_ih", "b_ih", "w_hh", "b_hh")
                )
                out.extend(
                    (f"{part_name}.{li}.{n}", p)
                    for n, p in zip(names, layer.params)
                )
        return out

    def param_count(self):
        return sum(p.size for p in self.params)


class MlpNet(_NetBase):
    """Feed-forward Lin-ReLU-Lin-ReLU-Lin stack for the td3 variant."""

    part_names = ("cur", "head")

    def __init__(self, in_dim, hidden, rng, tanh_limit=None):
        self.cur = CurChannel(in_dim, hidden, rng)
        self.head = Head(hidden, hidden, rng, tanh_limit)
        self.parts = (self.cur, self.head)

    def forward(self, x):
        a, c1 = self.cur.forward(x)
        y, ch = self.head.forward(a)
        return y, (c1, ch)

    def backward(self, cache, dy):
        c1, ch = cache
        da = self.head.backward(ch, dy)
        return self.cur.backward(c1, da)


class TwoChannelNet(_NetBase):
    """Recurrent window channel + current-input channel, concatenated."""

    part_names = ("seq", "cur", "head")

    def __init__(self, seq_in, cur_in, hidden, rng, tanh_limit=None):
        self.seq = SeqChannel(seq_in, hidden, rng)
        self.cur = CurChannel(cur_in, hidden, rng)
        self.head = Head(2 * hidden, hidden, rng, tanh_limit)
        self.hidden = hidden
        self.parts = (self.seq, self.cur, self.head)

    def forward(self, win, idx, cur_x):
        f_seq, c_seq, _ = self.seq.forward(win, idx)
        f_cur, c_cur = self.cur.forward(cur_x)
        y, c_head = self.head.forward(np.concatenate([f_seq, f_cur], axis=1))
        return y, (c_seq, c_cur, c_head)

    def backward(self, cache, dy):
        c_seq, c_cur, c_head = cache
        dfeat = self.head.backward(c_head, dy)
        dwin, _, _ = self.seq.backward(c_seq, dfeat[:, : self.hidden])
        dcur = self.cur.backward(c_cur, dfeat[:, self.hidden :])
        return dwin, dcur


class SingleChannelNet(_NetBase):
    """One recurrent channel over the window including the current step.

    ``forward`` also supports the one-step pathway used by h_td3: a length-1
    sequence with the LSTM seeded from a stored state.
    """

    part_names = ("seq", "head")

    def __init__(self, in_dim, hidden, rng, tanh_limit=None):
        self.seq = SeqChannel(in_dim, hidden, rng)
        self.head = Head(hidden, hidden, rng, tanh_limit)
        self.parts = (self.seq, self.head)

    def forward(self, xs, idx, state0=None):
        feat, c_seq, last = self.seq.forward(xs, idx, state0)
        y, c_head = self.head.forward(feat)
        return y, (c_seq, c_head), last

    def backward(self, cache, dy):
        c_seq, c_head = cache
        dfeat = self.head.backward(c_head, dy)
        return self.seq.backward(c_seq, dfeat)


def build_actor(spec, rng):
    h = spec.hidden
    if spec.kind == "td3":
        return MlpNet(spec.obs_dim, h, rng, tanh_limit=ACT_LIMIT)
    if spec.kind == "lstm_td3":
        seq_in = spec.obs_dim + (spec.act_dim if spec.include_action else 0)
        return TwoChannelNet(seq_in, spec.obs_dim, h, rng, tanh_limit=ACT_LIMIT)
    return SingleChannelNet(spec.obs_dim + spec.act_dim, h, rng,
                            tanh_limit=ACT_LIMIT)


def build_critic(spec, rng):
    h = spec.hidden
    io = spec.obs_dim + spec.act_dim
    if spec.kind == "td3":
        return MlpNet(io, h, rng)
    if spec.kind == "lstm_td3":
        seq_in = spec.obs_dim + (spec.act_dim if spec.include_action else 0)
        return TwoChannelNet(seq_in, io, h, rng)
    if spec.kind == "lstm_1ha2hc":
        return TwoChannelNet(io, spec.act_dim, h, rng)
    return SingleChannelNet(io, h, rng)


def count_params(spec):
    """(actor, critic) learnable parameter totals for the variant."""
    rng = np.random.default_rng(0)
    return build_actor(spec, rng).param_count(), build_critic(spec, rng).param_count()


# ---------------------------------------------------------------------------
# batch assembly helpers


def _insert_current(win, valid, cur):
    """Extend front-aligned windows by the current row at position valid."""
    B, l, d = win.shape
    out = np.zeros((B, l + 1, d))
    out[:, :l] = win
    out[np.arange(B), valid] = cur
    return out


def _cat(*arrs):
    return np.concatenate(arrs, axis=-1)


def _gather_idx(valid):
    # empty windows degenerate to the single all-zero row at position 0
    return np.maximum(valid, 1) - 1


class Agent:
    """Behaviour/target actor, twin critics, their targets and Adam states,
    plus the per-episode rollout context."""

    def __init__(self, spec, hyper, rng):
        self.spec = spec
        self.hyper = hyper
        self.actor = build_actor(spec, rng)
        self.q1 = build_critic(spec, rng)
        self.q2 = build_critic(spec, rng)
        scratch = np.random.default_rng(0)
        self.actor_targ = build_actor(spec, scratch)
        self.q1_targ = build_critic(spec, scratch)
        self.q2_targ = build_critic(spec, scratch)
        copy_params(self.actor_targ.params, self.actor.params)
        copy_params(self.q1_targ.params, self.q1.params)
        copy_params(self.q2_targ.params, self.q2.params)
        self.adam_actor = Adam(self.actor.params, lr=hyper.actor_lr)
        self.adam_q1 = Adam(self.q1.params, lr=hyper.critic_lr)
        self.adam_q2 = Adam(self.q2.params, lr=hyper.critic_lr)
        self.update_count = 0
        self._past = None
        self._prev_act = None
        self._live = None
        self.begin_episode()

    # -- rollout context ----------------------------------------------------

    def begin_episode(self):
        """Reset the episode window and the live LSTM state to zero."""
        self._past = deque(maxlen=self.spec.l)
        self._prev_act = np.zeros(self.spec.act_dim)
        if self.spec.kind == "h_td3":
            self._live = LSTMState.zeros(1, self.spec.hidden)

    @property
    def prev_act(self):
        """Action executed one step earlier in the open episode."""
        return self._prev_act.copy()

    def save_context(self):
        """Snapshot the rollout context (for evaluation mid-episode)."""
        live = self._live.copy() if self._live is not None else None
        return (deque(self._past, maxlen=self.spec.l),
                self._prev_act.copy(), live)

    def restore_context(self, ctx):
        self._past, self._prev_act, self._live = ctx

    def act(self, obs, compute_action=True):
        """Deterministic policy action for the current episode step.

        For h_td3 this also advances the live LSTM state by consuming
        (obs, prev_act) and returns the (state-before, state-after) pair to
        be stored with the transition; it must therefore be called exactly
        once per environment step.  Other variants return states=None and
        the call is side-effect free.
        """
        spec = self.spec
        if spec.kind == "h_td3":
            lstm_in = self._live.copy()
            x = _cat(obs, self._prev_act)[None, None, :]
            y, _, self._live = self.actor.forward(
                x, np.zeros(1, dtype=int), state0=self._live
            )
            return y[0].copy(), (lstm_in, self._live.copy())
        if not compute_action:
            return None, None
        if spec.kind == "td3":
            y, _ = self.actor.forward(obs[None, :])
            return y[0].copy(), None
        win, valid, seq, vcur = self._context_windows(obs)
        if spec.kind == "lstm_td3":
            y, _ = self.actor.forward(win, _gather_idx(valid), obs[None, :])
        else:
            y, _, _ = self.actor.forward(seq, vcur)
        return y[0].copy(), None

    def _context_windows(self, obs):
        """Window tensors for a single rollout step, mirroring the replay
        batch construction."""
        spec = self.spec
        l = spec.l
        n = len(self._past)
        win_dim = spec.obs_dim + (spec.act_dim if spec.include_action else 0)
        win = np.zeros((1, l, win_dim))
        seq = np.zeros((1, l + 1, spec.obs_dim + spec.act_dim))
        for slot, (o, prev_a, a) in enumerate(self._past):
            if spec.kind == "lstm_td3":
                win[0, slot] = _cat(o, a) if spec.include_action else o
            else:
                seq[0, slot] = _cat(o, prev_a)
        seq[0, n] = _cat(obs, self._prev_act)
        valid = np.array([n], dtype=int)
        return win, valid, seq, valid

    def record_step(self, obs, executed_act):
        """Append the executed step to the episode window."""
        self._past.append((obs.copy(), self._prev_act.copy(),
                           executed_act.copy()))
        self._prev_act = executed_act.copy()

    # -- updates ------------------------------------------------------------

    def sample_batch(self, buffer, rng):
        h = self.hyper
        if self.spec.kind == "td3":
            return buffer.sample(h.batch_size, rng)
        if self.spec.kind == "h_td3":
            # the history view is only consumed by the delayed actor step;
            # critic-only updates stay window-free (the variant's point)
            if (self.update_count + 1) % h.policy_delay == 0:
                return buffer.sample_hidden_history(h.batch_size,
                                                    self.spec.l, rng)
            return buffer.sample_hidden(h.batch_size, rng)
        return buffer.sample_history(h.batch_size, self.spec.l, rng)

    def _smooth(self, a, rng):
        h = self.hyper
        eps = rng.normal(0.0, h.target_noise_sigma, size=a.shape)
        eps = np.clip(eps, -h.target_noise_clip, h.target_noise_clip)
        return np.clip(a + eps, -ACT_LIMIT, ACT_LIMIT)

    def _critic_regression(self, forwards, y):
        """MSE-fit both critics to the target; forwards yields
        (net, adam, args) triples."""
        losses = []
        B = len(y)
        for net, adam, args in forwards:
            net.zero_grads()
            out = net.forward(*args)
            pred, cache = out[0], out[1]
            diff = pred - y
            losses.append(float((diff * diff).mean()))
            net.backward(cache, (2.0 / (B * pred.shape[1])) * diff)
            adam.step(net.grads)
        return losses

    def _actor_step(self, actor_forward, critic_forward_for, dact_from):
        """Delayed policy update: ascend Q1 w.r.t. the actor parameters."""
        self.actor.zero_grads()
        out = actor_forward()
        a, a_cache = out[0], out[1]
        B = a.shape[0]
        self.q1.zero_grads()
        q_out = critic_forward_for(a)
        q, q_cache = q_out[0], q_out[1]
        dq = np.full_like(q, -1.0 / q.size)
        dact = dact_from(self.q1.backward(q_cache, dq))
        self.actor.backward(a_cache, dact)
        self.adam_actor.step(self.actor.grads)
        self.q1.zero_grads()
        polyak_update(self.actor_targ.params, self.actor.params, self.hyper.tau)
        polyak_update(self.q1_targ.params, self.q1.params, self.hyper.tau)
        polyak_update(self.q2_targ.params, self.q2.params, self.hyper.tau)
        return float(-q.mean())

    def update(self, batch, rng):
        """One TD3 update on a sampled batch; returns loss diagnostics."""
        kind = self.spec.kind
        if kind == "td3":
            diag = self._update_td3(batch, rng)
        elif kind == "lstm_td3":
            diag = self._update_lstm_td3(batch, rng)
        elif kind == "h_td3":
            diag = self._update_h_td3(batch, rng)
        else:
            diag = self._update_single_channel(batch, rng)
        if not all(np.isfinite(v) for v in diag.values() if v is not None):
            raise FloatingPointError(
                f"non-finite loss in update {self.update_count}: {diag}"
            )
        return diag

    def _target_y(self, q1t, q2t, reward):
        # time-limit cutoffs bootstrap through: no terminal masking here
        return reward[:, None] + self.hyper.gamma * np.minimum(q1t, q2t)

    def _update_td3(self, batch, rng):
        obs, act = batch["obs"], batch["act"]
        a2, _ = self.actor_targ.forward(batch["next_obs"])
        a2 = self._smooth(a2, rng)
        x2 = _cat(batch["next_obs"], a2)
        q1t, _ = self.q1_targ.forward(x2)
        q2t, _ = self.q2_targ.forward(x2)
        y = self._target_y(q1t, q2t, batch["reward"])
        x = _cat(obs, act)
        losses = self._critic_regression(
            [(self.q1, self.adam_q1, (x,)), (self.q2, self.adam_q2, (x,))], y
        )
        self.update_count += 1
        actor_loss = None
        if self.update_count % self.hyper.policy_delay == 0:
            od = self.spec.obs_dim
            actor_loss = self._actor_step(
                lambda: self.actor.forward(obs),
                lambda a: self.q1.forward(_cat(obs, a)),
                lambda dx: dx[:, od:],
            )
        return {"q1_loss": losses[0], "q2_loss": losses[1],
                "actor_loss": actor_loss, "y_mean": float(y.mean())}

    def _update_lstm_td3(self, batch, rng):
        spec = self.spec
        if spec.include_action:
            win = _cat(batch.obs_hist, batch.act_hist_cur)
            win2 = _cat(batch.obs_hist2, batch.act_hist2_cur)
        else:
            win = batch.obs_hist
            win2 = batch.obs_hist2
        idx = _gather_idx(batch.valid)
        idx2 = _gather_idx(batch.valid2)
        a2, _ = self.actor_targ.forward(win2, idx2, batch.next_obs)
        a2 = self._smooth(a2, rng)
        x2 = _cat(batch.next_obs, a2)
        q1t, _ = self.q1_targ.forward(win2, idx2, x2)
        q2t, _ = self.q2_targ.forward(win2, idx2, x2)
        y = self._target_y(q1t, q2t, batch.reward)
        x = _cat(batch.obs, batch.act)
        losses = self._critic_regression(
            [(self.q1, self.adam_q1, (win, idx, x)),
             (self.q2, self.adam_q2, (win, idx, x))], y
        )
        self.update_count += 1
        actor_loss = None
        if self.update_count % self.hyper.policy_delay == 0:
            od = spec.obs_dim
            actor_loss = self._actor_step(
                lambda: self.actor.forward(win, idx, batch.obs),
                lambda a: self.q1.forward(win, idx, _cat(batch.obs, a)),
                lambda dx: dx[1][:, od:],   # current-channel grad, action slice
            )
        return {"q1_loss": losses[0], "q2_loss": losses[1],
                "actor_loss": actor_loss, "y_mean": float(y.mean())}

    def _update_single_channel(self, batch, rng):
        """lstm_1ha1hc and lstm_1ha2hc: full-window updates."""
        spec = self.spec
        seq_a = _insert_current(
            _cat(batch.obs_hist, batch.act_hist), batch.valid,
            _cat(batch.obs, batch.prev_act),
        )
        seq_a2 = _insert_current(
            _cat(batch.obs_hist2, batch.act_hist2), batch.valid2,
            _cat(batch.next_obs, batch.act),
        )
        a2, _, _ = self.actor_targ.forward(seq_a2, batch.valid2)
        a2 = self._smooth(a2, rng)
        B = len(batch.valid)
        if spec.kind == "lstm_1ha1hc":
            # critic realigns to at-step pairs and carries the current action
            # inside the sequence
            def critic_seq(cur_act, shifted=False):
                if shifted:
                    return _insert_current(
                        _cat(batch.obs_hist2, batch.act_hist2_cur),
                        batch.valid2, _cat(batch.next_obs, cur_act))
                return _insert_current(
                    _cat(batch.obs_hist, batch.act_hist_cur),
                    batch.valid, _cat(batch.obs, cur_act))

            sq2 = critic_seq(a2, shifted=True)
            q1t, _, _ = self.q1_targ.forward(sq2, batch.valid2)
            q2t, _, _ = self.q2_targ.forward(sq2, batch.valid2)
            y = self._target_y(q1t, q2t, batch.reward)
            sq = critic_seq(batch.act)
            losses = self._critic_regression(
                [(self.q1, self.adam_q1, (sq, batch.valid)),
                 (self.q2, self.adam_q2, (sq, batch.valid))], y
            )
            critic_fwd = lambda a: self.q1.forward(critic_seq(a), batch.valid)
            od = spec.obs_dim
            dact_from = lambda dx: dx[0][np.arange(B), batch.valid, od:]
        else:  # lstm_1ha2hc: actor-aligned sequence channel + action channel
            q1t, _ = self.q1_targ.forward(seq_a2, batch.valid2, a2)
            q2t, _ = self.q2_targ.forward(seq_a2, batch.valid2, a2)
            y = self._target_y(q1t, q2t, batch.reward)
            losses = self._critic_regression(
                [(self.q1, self.adam_q1, (seq_a, batch.valid, batch.act)),
                 (self.q2, self.adam_q2, (seq_a, batch.valid, batch.act))], y
            )
            critic_fwd = lambda a: self.q1.forward(seq_a, batch.valid, a)
            dact_from = lambda dx: dx[1]
        self.update_count += 1
        actor_loss = None
        if self.update_count % self.hyper.policy_delay == 0:
            actor_loss = self._actor_step(
                lambda: self.actor.forward(seq_a, batch.valid),
                critic_fwd, dact_from,
            )
        return {"q1_loss": losses[0], "q2_loss": losses[1],
                "actor_loss": actor_loss, "y_mean": float(y.mean())}

    def _update_h_td3(self, batches, rng):
        """Critics train from one seeded LSTM step each (no window replay;
        the stored states are constants).  The delayed actor step replays
        its window exactly like the single-channel actor, with the Q
        gradient flowing through the one-step-seeded critic."""
        spec = self.spec
        if isinstance(batches, tuple):
            batch, hist = batches
        else:
            batch, hist = batches, None
        B = len(batch.reward)
        idx0 = np.zeros(B, dtype=int)

        def one(net, x, state):
            return net.forward(x[:, None, :], idx0, state0=state)

        a2, _, _ = one(self.actor_targ, _cat(batch.next_obs, batch.act),
                       batch.lstm_out)
        a2 = self._smooth(a2, rng)
        q1t, _, _ = one(self.q1_targ, _cat(batch.next_obs, a2), batch.lstm_out)
        q2t, _, _ = one(self.q2_targ, _cat(batch.next_obs, a2), batch.lstm_out)
        y = self._target_y(q1t, q2t, batch.reward)
        x = _cat(batch.obs, batch.act)[:, None, :]
        losses = self._critic_regression(
            [(self.q1, self.adam_q1, (x, idx0, batch.lstm_in)),
             (self.q2, self.adam_q2, (x, idx0, batch.lstm_in))], y
        )
        self.update_count += 1
        actor_loss = None
        if self.update_count % self.hyper.policy_delay == 0:
            if hist is None:
                raise ValueError(
                    "h_td3 actor step needs the history view; sample with "
                    "sample_hidden_history on actor-update iterations"
                )
            od = spec.obs_dim
            seq_a = _insert_current(
                _cat(hist.obs_hist, hist.act_hist), hist.valid,
                _cat(hist.obs, hist.prev_act),
            )
            actor_loss = self._actor_step(
                lambda: self.actor.forward(seq_a, hist.valid),
                lambda a: one(self.q1, _cat(batch.obs, a), batch.lstm_in),
                lambda dx: dx[0][:, 0, od:],
            )
        return {"q1_loss": losses[0], "q2_loss": losses[1],
                "actor_loss": actor_loss, "y_mean": float(y.mean())}
