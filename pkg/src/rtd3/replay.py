"""Ring-buffer experience storage with episode-aware history sampling.

Histories are fixed-length windows over the steps immediately preceding a
sampled transition, front-aligned and zero-padded at the back: positions
``0..valid-1`` hold data in chronological order, positions ``>= valid`` are
exactly zero.  Windows never cross an episode start, nor the eviction
boundary of the ring.

Two action alignments are provided for every window because the agent
variants consume both: ``act_hist`` pairs each historical observation o_k
with the action taken one step earlier (a_{k-1}), ``act_hist_cur`` pairs it
with the action taken at that step (a_k).  The same applies to the
next-step windows (suffix ``2``), which are shifted forward by one and
therefore include the sampled step itself as their last valid row.

For the hidden-state variant the buffer can also record, per transition,
the behaviour actor's LSTM state before (``lstm_in``) and after
(``lstm_out``) it consumed the step's input; consecutive transitions of one
episode then satisfy lstm_out(t) == lstm_in(t+1).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import binio
from .nn import LSTMState

SNAPSHOT_MAGIC = b"RTD3RBUF"
SNAPSHOT_VERSION = 1


@dataclass
class Transition:
    obs: np.ndarray
    act: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: bool
    prev_act: np.ndarray
    lstm_in: Optional[LSTMState] = None
    lstm_out: Optional[LSTMState] = None


@dataclass
class HistoryBatch:
    obs_hist: np.ndarray       # (B, l, obs_dim)
    act_hist: np.ndarray       # (B, l, act_dim), row k holds a_{k-1}
    act_hist_cur: np.ndarray   # (B, l, act_dim), row k holds a_k
    valid: np.ndarray          # (B,) number of non-padded rows
    obs_hist2: np.ndarray
    act_hist2: np.ndarray
    act_hist2_cur: np.ndarray
    valid2: np.ndarray
    obs: np.ndarray            # (B, obs_dim) current observation
    act: np.ndarray            # (B, act_dim) current action
    prev_act: np.ndarray       # (B, act_dim) action one step before
    reward: np.ndarray         # (B,)
    next_obs: np.ndarray
    done: np.ndarray           # (B,) episode-cutoff flags


@dataclass
class HiddenBatch:
    obs: np.ndarray
    act: np.ndarray
    prev_act: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    lstm_in: LSTMState         # batch state before the step's input
    lstm_out: LSTMState        # batch state after the step's input


class ReplayBuffer:
    """FIFO transition store with history and stored-state sampling."""

    def __init__(self, capacity, obs_dim, act_dim=1, store_states=False, hidden=128):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.store_states = store_states
        self.hidden = hidden
        self.total = 0          # transitions ever pushed
        self._ep_len = 0        # steps already stored for the open episode
        n = capacity
        self.obs = np.zeros((n, obs_dim))
        self.act = np.zeros((n, act_dim))
        self.rew = np.zeros(n)
        self.next_obs = np.zeros((n, obs_dim))
        self.done = np.zeros(n, dtype=bool)
        self.prev_act = np.zeros((n, act_dim))
        self.ep_start = np.zeros(n, dtype=bool)
        self.steps_in_ep = np.zeros(n, dtype=np.int64)
        if store_states:
            self.h_in = np.zeros((n, hidden))
            self.c_in = np.zeros((n, hidden))
            self.h_out = np.zeros((n, hidden))
            self.c_out = np.zeros((n, hidden))

    @property
    def size(self):
        return min(self.total, self.capacity)

    @property
    def oldest(self):
        return self.total - self.size

    def push(self, tr):
        if not (np.all(np.isfinite(tr.obs)) and np.isfinite(tr.reward)
                and np.all(np.isfinite(tr.act))):
            raise ValueError("transition contains non-finite values")
        p = self.total % self.capacity
        self.obs[p] = tr.obs
        self.act[p] = tr.act
        self.rew[p] = tr.reward
        self.next_obs[p] = tr.next_obs
        self.done[p] = tr.done
        self.prev_act[p] = tr.prev_act
        self.ep_start[p] = self._ep_len == 0
        self.steps_in_ep[p] = self._ep_len
        if self.store_states:
            if tr.lstm_in is None or tr.lstm_out is None:
                raise ValueError("buffer expects LSTM states on every transition")
            self.h_in[p] = tr.lstm_in.h
            self.c_in[p] = tr.lstm_in.c
            self.h_out[p] = tr.lstm_out.h
            self.c_out[p] = tr.lstm_out.c
        self.total += 1
        self._ep_len = 0 if tr.done else self._ep_len + 1

    def _draw(self, batch_size, rng):
        if batch_size > self.size:
            raise ValueError(
                f"cannot sample {batch_size} from buffer of size {self.size}"
            )
        return self.oldest + rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng):
        """Plain batch for the feed-forward agent."""
        j = self._draw(batch_size, rng)
        p = j % self.capacity
        return {
            "obs": self.obs[p].copy(),
            "act": self.act[p].copy(),
            "reward": self.rew[p].copy(),
            "next_obs": self.next_obs[p].copy(),
            "done": self.done[p].copy(),
        }

    def _window(self, j, length, valid):
        """Gather (obs, act_prev_aligned, act_at_step) windows ending at j."""
        B = len(j)
        offs = np.arange(length)
        idx = (j - valid)[:, None] + offs[None, :]
        mask = offs[None, :] < valid[:, None]
        idx = np.where(mask, idx, j[:, None])  # placeholder rows, zeroed below
        p = idx % self.capacity
        m = mask[:, :, None]
        return self.obs[p] * m, self.prev_act[p] * m, self.act[p] * m

    def sample_history(self, batch_size, length, rng):
        """Uniform batch with the current and next-step history windows."""
        return self._history_at(self._draw(batch_size, rng), length)

    def sample_hidden(self, batch_size, rng):
        """Uniform batch of single transitions with their stored LSTM states."""
        if not self.store_states:
            raise ValueError("buffer was created without LSTM state storage")
        return self._hidden_at(self._draw(batch_size, rng))

    def sample_hidden_history(self, batch_size, length, rng):
        """One uniform draw, both views: (stored-state batch, history batch).

        The hidden-state variant trains its critics from the stored states
        but replays windows for the delayed actor step; sharing the indices
        keeps both views of each update aligned on the same transitions.
        """
        if not self.store_states:
            raise ValueError("buffer was created without LSTM state storage")
        j = self._draw(batch_size, rng)
        return self._hidden_at(j), self._history_at(j, length)

    def _history_at(self, j, length):
        if length < 1:
            raise ValueError("history length must be >= 1")
        p = j % self.capacity
        valid = np.minimum(self.steps_in_ep[p], length)
        valid = np.minimum(valid, j - self.oldest)
        valid2 = np.minimum(valid + 1, length)
        obs_h, act_h, act_hc = self._window(j, length, valid)
        obs_h2, act_h2, act_hc2 = self._window(j + 1, length, valid2)
        return HistoryBatch(
            obs_hist=obs_h, act_hist=act_h, act_hist_cur=act_hc, valid=valid,
            obs_hist2=obs_h2, act_hist2=act_h2, act_hist2_cur=act_hc2,
            valid2=valid2,
            obs=self.obs[p].copy(), act=self.act[p].copy(),
            prev_act=self.prev_act[p].copy(), reward=self.rew[p].copy(),
            next_obs=self.next_obs[p].copy(), done=self.done[p].copy(),
        )

    def _hidden_at(self, j):
        p = j % self.capacity
        return HiddenBatch(
            obs=self.obs[p].copy(), act=self.act[p].copy(),
            prev_act=self.prev_act[p].copy(), reward=self.rew[p].copy(),
            next_obs=self.next_obs[p].copy(), done=self.done[p].copy(),
            lstm_in=LSTMState(self.h_in[p].copy(), self.c_in[p].copy()),
            lstm_out=LSTMState(self.h_out[p].copy(), self.c_out[p].copy()),
        )

    def snapshot(self, path):
        """Debug dump of the raw ring state; bit-exact on reload."""
        meta = {
            "capacity": self.capacity,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "store_states": self.store_states,
            "hidden": self.hidden,
            "total": self.total,
            "ep_len": self._ep_len,
        }
        arrays = [
            ("obs", self.obs), ("act", self.act), ("rew", self.rew),
            ("next_obs", self.next_obs), ("done", self.done),
            ("prev_act", self.prev_act), ("ep_start", self.ep_start),
            ("steps_in_ep", self.steps_in_ep),
        ]
        if self.store_states:
            arrays += [("h_in", self.h_in), ("c_in", self.c_in),
                       ("h_out", self.h_out), ("c_out", self.c_out)]
        binio.write_file(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, meta, arrays)

    @classmethod
    def load_snapshot(cls, path):
        _, meta, arrays = binio.read_file(path, SNAPSHOT_MAGIC, SNAPSHOT_VERSION)
        buf = cls(meta["capacity"], meta["obs_dim"], meta["act_dim"],
                  store_states=meta["store_states"], hidden=meta["hidden"])
        named = dict(arrays)
        for name in ("obs", "act", "rew", "next_obs", "done", "prev_act",
                     "ep_start", "steps_in_ep"):
            getattr(buf, name)[...] = named[name]
        if meta["store_states"]:
            for name in ("h_in", "c_in", "h_out", "c_out"):
                getattr(buf, name)[...] = named[name]
        buf.total = meta["total"]
        buf._ep_len = meta["ep_len"]
        return buf
