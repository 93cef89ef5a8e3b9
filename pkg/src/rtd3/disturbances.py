"""Seeded observation disturbances applied on top of the pendulum.

Eight scenarios, selected by name:

  none           identity wrapper
  temporal_bias  constant offsets on x and y: an amplitude drawn from
                 [amp_lo, amp_hi] per onset, 10 onsets per episode, each
                 lasting 3 steps; overlapping windows sum
  temporal_sine  one sine burst A*sin(2*pi*(t-t0)/T) on x and y with A=1,
                 T=70, one random onset, active for T steps
  random_sine    per-episode A in [0.5, 2], T in [10, 100], one random
                 onset, active T steps, added to all 3 elements
  noise          zero-mean Gaussian with configured sigma on every element
                 at every step
  hidden         angular velocity removed; observation becomes [x, y]
  comb_sine      sum of two independently drawn random_sine waves
  damped_sine    exp(-(t-t0)/T) * A * sin(2*pi*(t-t0)/T) from a random
                 onset until the episode ends, all 3 elements

All episode-level randomness (onsets, amplitudes, periods) is sampled up
front by ``init_episode``; only the Gaussian noise scenario draws from the
stream during ``apply``.  Sine phases are measured from the onset step, so
the first disturbed step of a burst sees sin(0) = 0.
"""

from dataclasses import dataclass, field

import numpy as np

from . import pendulum

SCENARIO_KINDS = (
    "none",
    "temporal_bias",
    "temporal_sine",
    "random_sine",
    "noise",
    "hidden",
    "comb_sine",
    "damped_sine",
)


@dataclass
class DisturbanceSpec:
    kind: str = "none"
    # temporal_bias
    amp_lo: float = 0.5
    amp_hi: float = 1.0
    bias_count: int = 10
    bias_duration: int = 3
    # temporal_sine
    amp: float = 1.0
    period: float = 70.0
    # random_sine / comb_sine / damped_sine
    rand_amp_lo: float = 0.5
    rand_amp_hi: float = 2.0
    period_lo: float = 10.0
    period_hi: float = 100.0
    # noise
    sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.amp_lo > self.amp_hi or self.rand_amp_lo > self.rand_amp_hi:
            raise ValueError("empty amplitude range")
        if self.period_lo > self.period_hi:
            raise ValueError("empty period range")
        if min(self.period, self.period_lo) < 1.0:
            raise ValueError("periods must be >= 1")
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "temporal_bias":
            d.update(amp_lo=self.amp_lo, amp_hi=self.amp_hi,
                     bias_count=self.bias_count, bias_duration=self.bias_duration)
        elif self.kind == "temporal_sine":
            d.update(amp=self.amp, period=self.period)
        elif self.kind in ("random_sine", "comb_sine", "damped_sine"):
            d.update(rand_amp_lo=self.rand_amp_lo, rand_amp_hi=self.rand_amp_hi,
                     period_lo=self.period_lo, period_hi=self.period_hi)
        elif self.kind == "noise":
            d.update(sigma=self.sigma)
        return d


def obs_dim(spec):
    """Observation dimension under the scenario (2 for hidden, else 3)."""
    return 2 if spec.kind == "hidden" else pendulum.OBS_DIM


@dataclass
class DisturbanceSchedule:
    """Episode-level additive trace plus the per-step noise setting.

    ``trace`` has shape (horizon + 1, 3): row t is added to the observation
    seen at step index t (row 0 corresponds to the reset observation).
    """

    kind: str
    trace: np.ndarray
    sigma: float = 0.0
    drawn: dict = field(default_factory=dict)


def _add_sine(trace, onset, amp, period, columns, horizon, damped=False):
    end = horizon + 1 if damped else min(int(onset + period) + 1, horizon + 1)
    t_rel = np.arange(onset, end) - onset
    if not damped:
        t_rel = t_rel[t_rel < period]
    wave = amp * np.sin(2.0 * np.pi * t_rel / period)
    if damped:
        wave = np.exp(-t_rel / period) * wave
    for col in columns:
        trace[onset : onset + len(wave), col] += wave


def init_episode(spec, rng, horizon=pendulum.HORIZON):
    """Sample one episode's disturbance schedule from the stream."""
    trace = np.zeros((horizon + 1, pendulum.OBS_DIM))
    drawn = {}
    if spec.kind == "temporal_bias":
        onsets = rng.integers(0, horizon, size=spec.bias_count)
        amps = rng.uniform(spec.amp_lo, spec.amp_hi, size=spec.bias_count)
        for onset, amp in zip(onsets, amps):
            end = min(onset + spec.bias_duration, horizon + 1)
            trace[onset:end, 0] += amp
            trace[onset:end, 1] += amp
        drawn = {"onsets": onsets.tolist(), "amps": amps.tolist()}
    elif spec.kind == "temporal_sine":
        onset = int(rng.integers(0, horizon))
        _add_sine(trace, onset, spec.amp, spec.period, (0, 1), horizon)
        drawn = {"onset": onset}
    elif spec.kind == "random_sine":
        amp = rng.uniform(spec.rand_amp_lo, spec.rand_amp_hi)
        period = rng.uniform(spec.period_lo, spec.period_hi)
        onset = int(rng.integers(0, horizon))
        _add_sine(trace, onset, amp, period, (0, 1, 2), horizon)
        drawn = {"amp": amp, "period": period, "onset": onset}
    elif spec.kind == "comb_sine":
        drawn = {"waves": []}
        for _ in range(2):
            amp = rng.uniform(spec.rand_amp_lo, spec.rand_amp_hi)
            period = rng.uniform(spec.period_lo, spec.period_hi)
            onset = int(rng.integers(0, horizon))
            _add_sine(trace, onset, amp, period, (0, 1, 2), horizon)
            drawn["waves"].append({"amp": amp, "period": period, "onset": onset})
    elif spec.kind == "damped_sine":
        amp = rng.uniform(spec.rand_amp_lo, spec.rand_amp_hi)
        period = rng.uniform(spec.period_lo, spec.period_hi)
        onset = int(rng.integers(0, horizon))
        _add_sine(trace, onset, amp, period, (0, 1, 2), horizon, damped=True)
        drawn = {"amp": amp, "period": period, "onset": onset}
    return DisturbanceSchedule(
        kind=spec.kind,
        trace=trace,
        sigma=spec.sigma if spec.kind == "noise" else 0.0,
        drawn=drawn,
    )


def apply(schedule, t, obs, rng):
    """Disturb the observation seen at step index t.

    Additive scenarios add the precomputed trace row; the noise scenario
    draws fresh zero-mean Gaussians per element; hidden drops theta_dot.
    The caller must invoke this exactly once per step, in step order, for
    the noise stream to be reproducible.
    """
    if schedule.kind == "hidden":
        return obs[:2].copy()
    if schedule.kind == "noise":
        return obs + rng.normal(0.0, schedule.sigma, size=obs.shape)
    if t >= len(schedule.trace):
        raise ValueError(f"step index {t} outside the scheduled episode")
    return obs + schedule.trace[t]


class DisturbedEnv:
    """Stateful episode driver: pendulum dynamics + scenario wrapper.

    Takes two independent streams: one for environment resets, one for the
    disturbance schedule and per-step noise.  The agent never sees the
    clean observation.
    """

    def __init__(self, spec, env_rng, dist_rng):
        self.spec = spec
        self.env_rng = env_rng
        self.dist_rng = dist_rng
        self.obs_dim = obs_dim(spec)
        self.state = None
        self.schedule = None

    def reset(self):
        self.state, clean = pendulum.reset(self.env_rng)
        self.schedule = init_episode(self.spec, self.dist_rng)
        return apply(self.schedule, 0, clean, self.dist_rng)

    def step(self, torque):
        self.state, clean, reward, done = pendulum.step(self.state, torque)
        obs = apply(self.schedule, self.state.step_index, clean, self.dist_rng)
        return obs, reward, done
