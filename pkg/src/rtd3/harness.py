"""Training loop, evaluation, cross-scenario evaluation, update-time
benchmark and the multi-run grid executor.

Every run writes into its own directory:

  curve.csv    env_steps,episodes,eval_return_mean,eval_return_std,eval_return_norm
  timings.csv  env_steps,updates,wall_ms_per_update_mean
  meta.json    full config, dynamics constants, rng algorithm, status
  checkpoint.bin  final actor parameters

curve.csv is bit-identical across executions of the same config and seed
(floats printed with 17 significant digits); wall-clock numbers live in
timings.csv, which is excluded from that contract.  Episode returns are
normalised onto [0, 1] with fixed global bounds lo=-1700, hi=0 so that
normalisation never reorders algorithm comparisons.

The grid executor runs configs in spawned worker processes (one BLAS
thread each) and aggregates per-(variant, scenario, l) statistics of the
final window, defined as the mean eval return over the last 10 curve
points.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context

import numpy as np

from . import __version__, checkpoint, pendulum
from .agents import Agent, Hyperparams, VariantSpec
from .config import RunConfig
from .disturbances import DisturbanceSpec, DisturbedEnv, obs_dim
from .replay import ReplayBuffer, Transition

NORM_LO = -1700.0
NORM_HI = 0.0

CURVE_HEADER = "env_steps,episodes,eval_return_mean,eval_return_std,eval_return_norm"
TIMINGS_HEADER = "env_steps,updates,wall_ms_per_update_mean"
RUNS_HEADER = ("run_id,variant,scenario,l,seed,status,env_steps,"
               "final_window_mean,final_window_std,best_eval_mean,error")
SUMMARY_HEADER = ("variant,scenario,l,n_seeds,final_return_mean,"
                  "final_return_std")


def _fmt(x):
    return format(float(x), ".17g")


def jsonable(value):
    """Replace non-finite floats by None so emitted JSON stays standard."""
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def normalize(x, lo=NORM_LO, hi=NORM_HI):
    """Clipped affine map of returns onto [0, 1]."""
    if hi <= lo:
        raise ValueError(f"normalisation bounds need hi > lo, got {lo}, {hi}")
    return float(np.clip((x - lo) / (hi - lo), 0.0, 1.0))


def _streams(seed):
    """Independent substreams for each consumer of randomness."""
    names = ("init", "env", "disturb", "explore", "replay", "update")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def _eval_rngs(seed, tag):
    ss = np.random.SeedSequence([seed & 0xFFFFFFFF, 0xE7A1, tag])
    env_ss, dist_ss = ss.spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(dist_ss)


def evaluate(agent, scenario, n_episodes, seed):
    """Mean and std of episode return under the deterministic policy.

    Fresh environment and disturbance streams are derived from ``seed``;
    the agent's rollout context is saved and restored around the call, and
    reset at every evaluation episode start.
    """
    env_rng, dist_rng = _eval_rngs(seed, 0)
    env = DisturbedEnv(scenario, env_rng, dist_rng)
    if env.obs_dim != agent.spec.obs_dim:
        raise ValueError(
            f"actor expects obs_dim {agent.spec.obs_dim} but scenario "
            f"{scenario.kind!r} produces {env.obs_dim}"
        )
    ctx = agent.save_context()
    try:
        returns = np.empty(n_episodes)
        for ep in range(n_episodes):
            obs = env.reset()
            agent.begin_episode()
            total = 0.0
            done = False
            while not done:
                act, _ = agent.act(obs)
                next_obs, reward, done = env.step(float(act[0]))
                agent.record_step(obs, act)
                total += reward
                obs = next_obs
            returns[ep] = total
    finally:
        agent.restore_context(ctx)
    return float(returns.mean()), float(returns.std())


@dataclass
class TrainResult:
    out_dir: str
    status: str
    curve: list
    final_window_mean: float
    best_eval_mean: float
    error: str = ""


def _write_meta(out_dir, config, status, extra=None):
    meta = {
        "package_version": __version__,
        "config": config.to_dict(),
        "run_id": config.run_id,
        "dynamics": pendulum.dynamics_constants(),
        "rng": {"algorithm": "PCG64",
                "streams": ["init", "env", "disturb", "explore", "replay",
                            "update"]},
        "normalization": {"lo": NORM_LO, "hi": NORM_HI},
        "csv": {"curve": CURVE_HEADER, "timings": TIMINGS_HEADER},
        "status": status,
    }
    if extra:
        meta.update(extra)
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def train(config):
    """Run one training configuration to completion.

    Deterministic given the config: two executions produce bit-identical
    curve.csv files.  On a numeric fault the partial curve is kept, an
    error row is appended and the status is recorded in meta.json.
    """
    out_dir = config.out_dir or config.run_id
    os.makedirs(out_dir, exist_ok=True)
    _write_meta(out_dir, config, "running")

    rngs = _streams(config.seed)
    spec = config.variant
    hyper = config.hyper
    env = DisturbedEnv(config.scenario, rngs["env"], rngs["disturb"])
    agent = Agent(spec, hyper, rngs["init"])
    buffer = ReplayBuffer(
        hyper.buffer_capacity, spec.obs_dim, spec.act_dim,
        store_states=spec.kind == "h_td3", hidden=spec.hidden,
    )

    curve = []
    status = "completed"
    error = ""
    updates = 0
    update_ms_total = 0.0
    episodes = 0
    eval_idx = 0

    curve_path = os.path.join(out_dir, "curve.csv")
    timings_path = os.path.join(out_dir, "timings.csv")
    with open(curve_path, "w") as curve_fh, open(timings_path, "w") as tim_fh:
        curve_fh.write(CURVE_HEADER + "\n")
        tim_fh.write(TIMINGS_HEADER + "\n")
        obs = env.reset()
        agent.begin_episode()
        try:
            for step in range(1, config.total_env_steps + 1):
                warmup = step <= hyper.start_steps
                det_act, states = agent.act(obs, compute_action=not warmup)
                if warmup:
                    act = rngs["explore"].uniform(
                        -pendulum.MAX_TORQUE, pendulum.MAX_TORQUE,
                        size=spec.act_dim)
                else:
                    noise = rngs["explore"].normal(
                        0.0, hyper.exploration_noise_sigma, size=spec.act_dim)
                    act = np.clip(det_act + noise,
                                  -pendulum.MAX_TORQUE, pendulum.MAX_TORQUE)
                next_obs, reward, done = env.step(float(act[0]))
                buffer.push(Transition(
                    obs, act, reward, next_obs, done, agent.prev_act,
                    lstm_in=states[0] if states else None,
                    lstm_out=states[1] if states else None,
                ))
                agent.record_step(obs, act)
                obs = next_obs
                if done:
                    episodes += 1
                    obs = env.reset()
                    agent.begin_episode()

                if not warmup and buffer.size >= hyper.batch_size:
                    for _ in range(hyper.updates_per_step):
                        t0 = time.perf_counter()
                        batch = agent.sample_batch(buffer, rngs["replay"])
                        agent.update(batch, rngs["update"])
                        update_ms_total += (time.perf_counter() - t0) * 1e3
                        updates += 1

                if step % config.eval_every_steps == 0:
                    eval_idx += 1
                    mean, std = evaluate(agent, config.scenario,
                                         config.eval_episodes,
                                         (config.seed << 20) + eval_idx)
                    curve.append((step, episodes, mean, std))
                    curve_fh.write(",".join([
                        str(step), str(episodes), _fmt(mean), _fmt(std),
                        _fmt(normalize(mean)),
                    ]) + "\n")
                    curve_fh.flush()
                    ms = update_ms_total / updates if updates else 0.0
                    tim_fh.write(f"{step},{updates},{ms:.6f}\n")
                    tim_fh.flush()
        except FloatingPointError as exc:
            status = "failed"
            error = str(exc)
            curve_fh.write(f"{step},{episodes},nan,nan,nan\n")

    checkpoint.save_actor(
        os.path.join(out_dir, "checkpoint.bin"), agent, config.scenario,
        config.seed, extra={"env_steps": config.total_env_steps},
    )
    means = [row[2] for row in curve]
    window = means[-10:] if means else [math.nan]
    result = TrainResult(
        out_dir=out_dir,
        status=status,
        curve=curve,
        final_window_mean=float(np.mean(window)),
        best_eval_mean=float(max(means)) if means else math.nan,
        error=error,
    )
    _write_meta(out_dir, config, status, extra={
        "error": error,
        "final_window_mean": result.final_window_mean,
        "best_eval_mean": result.best_eval_mean,
        "episodes": episodes,
        "updates": updates,
    })
    return result


def cross_eval(checkpoint_path, scenarios, episodes, seed, out_path=None):
    """Evaluate a trained actor across scenarios.

    Returns one row per scenario: (scenario, mean, std, is_train_scenario).
    A 2-dim (hidden-trained) actor evaluated on a 3-dim scenario, or vice
    versa, raises an incompatibility error.
    """
    agent, meta = checkpoint.load_agent(checkpoint_path)
    train_kind = meta["scenario"]["kind"]
    rows = []
    for i, scenario in enumerate(scenarios):
        if obs_dim(scenario) != agent.spec.obs_dim:
            raise ValueError(
                f"checkpoint trained with obs_dim {agent.spec.obs_dim} is "
                f"incompatible with scenario {scenario.kind!r} "
                f"(obs_dim {obs_dim(scenario)})"
            )
        mean, std = evaluate(agent, scenario, episodes, (seed << 8) + i)
        rows.append((scenario.kind, mean, std, scenario.kind == train_kind))
    if out_path:
        with open(out_path, "w") as fh:
            fh.write("scenario,return_mean,return_std,is_train_scenario\n")
            for kind, mean, std, is_train in rows:
                fh.write(f"{kind},{_fmt(mean)},{_fmt(std)},{int(is_train)}\n")
    return rows


def bench_update(kind, l, n_updates=30, include_action=True, seed=0):
    """Median wall time per td3 update, in milliseconds.

    The buffer is pre-filled with synthetic rollout data (random actions on
    the undisturbed pendulum); timing covers sampling plus the full update.
    """
    spec = VariantSpec(kind=kind, include_action=include_action, l=l)
    hyper = Hyperparams()
    rngs = _streams(seed)
    agent = Agent(spec, hyper, rngs["init"])
    env = DisturbedEnv(DisturbanceSpec(kind="none"), rngs["env"],
                       rngs["disturb"])
    buffer = ReplayBuffer(2048, spec.obs_dim, spec.act_dim,
                          store_states=spec.kind == "h_td3",
                          hidden=spec.hidden)
    obs = env.reset()
    agent.begin_episode()
    for _ in range(max(hyper.batch_size * 2, 256)):
        _, states = agent.act(obs, compute_action=False)
        act = rngs["explore"].uniform(-2.0, 2.0, size=spec.act_dim)
        next_obs, reward, done = env.step(float(act[0]))
        buffer.push(Transition(obs, act, reward, next_obs, done,
                               agent.prev_act,
                               lstm_in=states[0] if states else None,
                               lstm_out=states[1] if states else None))
        agent.record_step(obs, act)
        obs = next_obs
        if done:
            obs = env.reset()
            agent.begin_episode()
    # two warm-up updates outside the timed region: the first pays one-off
    # allocation costs, and starting the timed window on an odd update
    # count makes critic-only iterations the majority class under the
    # default policy delay, so the median reports the typical iteration
    agent.update(agent.sample_batch(buffer, rngs["replay"]), rngs["update"])
    agent.update(agent.sample_batch(buffer, rngs["replay"]), rngs["update"])
    samples = []
    for _ in range(n_updates):
        t0 = time.perf_counter()
        agent.update(agent.sample_batch(buffer, rngs["replay"]),
                     rngs["update"])
        samples.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(samples))


def gradcheck_report(eps=1e-5, hidden=8, seq_len=4, batch=3):
    """Finite-difference verification of every layer type and of the full
    actor/critic network of each variant, scaled down to the given hidden
    width and sequence length.  Returns [(name, max_rel_err), ...]."""
    from . import nn
    from .agents import build_actor, build_critic

    rng = np.random.default_rng(1234)
    rows = []

    def check(name, net_params, net_grads, zero, forward, backward):
        def loss_fn():
            zero()
            out = forward()
            y = out[0]
            w = _probe_weights[name]
            backward(out[1], w.copy())
            return float((y * w).sum()), net_grads()
        err, _ = nn.grad_check(net_params, loss_fn, eps=eps)
        rows.append((name, err))

    _probe_weights = {}

    lin = nn.Linear(4, 3, rng)
    x_lin = rng.standard_normal((batch, 4))
    _probe_weights["linear"] = rng.standard_normal((batch, 3))
    check("linear", lin.params, lambda: lin.grads,
          lambda: [g.fill(0.0) for g in lin.grads],
          lambda: lin.forward(x_lin),
          lambda cache, d: lin.backward(cache, d))

    lstm = nn.LSTM(3, hidden, rng)
    xs = rng.standard_normal((batch, seq_len, 3))
    _probe_weights["lstm"] = rng.standard_normal((batch, seq_len, hidden))
    def lstm_forward():
        hs, _, cache = lstm.forward_seq(xs)
        return hs, cache
    check("lstm", lstm.params, lambda: lstm.grads,
          lambda: [g.fill(0.0) for g in lstm.grads],
          lstm_forward,
          lambda cache, d: lstm.backward_seq(cache, d))

    l = seq_len - 1  # single-channel windows process l+1 steps
    for kind in ("td3", "lstm_td3", "lstm_1ha1hc", "lstm_1ha2hc", "h_td3"):
        spec = VariantSpec(kind=kind, l=max(l, 1), hidden=hidden)
        for role, build in (("actor", build_actor), ("critic", build_critic)):
            net = build(spec, rng)
            name = f"{kind}.{role}"
            _probe_weights[name] = rng.standard_normal((batch, 1))
            args = _gradcheck_args(kind, role, spec, seq_len, batch, rng)
            check(name, net.params, lambda n=net: n.grads,
                  (lambda n=net: n.zero_grads()),
                  (lambda n=net, a=args: n.forward(*a)),
                  (lambda cache, d, n=net: n.backward(cache, d)))
    return rows


def _gradcheck_args(kind, role, spec, seq_len, batch, rng):
    from .nn import LSTMState

    od, ad, h = spec.obs_dim, spec.act_dim, spec.hidden
    valid = np.array([min(i, spec.l) for i in range(batch)])
    if kind == "td3":
        dim = od if role == "actor" else od + ad
        return (rng.standard_normal((batch, dim)),)
    if kind == "lstm_td3":
        win = rng.standard_normal((batch, spec.l, od + ad))
        cur = rng.standard_normal((batch, od if role == "actor" else od + ad))
        return (win, np.maximum(valid, 1) - 1, cur)
    seq = rng.standard_normal((batch, spec.l + 1, od + ad))
    if kind == "lstm_1ha2hc" and role == "critic":
        return (seq, valid, rng.standard_normal((batch, ad)))
    if kind == "h_td3":
        state = LSTMState(rng.standard_normal((batch, h)),
                          rng.standard_normal((batch, h)))
        return (rng.standard_normal((batch, 1, od + ad)),
                np.zeros(batch, dtype=int), state)
    return (seq, valid)


def _grid_worker(config_dict):
    cfg = RunConfig.from_dict(config_dict)
    try:
        result = train(cfg)
        return {
            "run_id": cfg.run_id, "status": result.status,
            "out_dir": result.out_dir,
            "final_window_mean": result.final_window_mean,
            "best_eval_mean": result.best_eval_mean,
            "curve_means": [row[2] for row in result.curve],
            "error": result.error,
        }
    except Exception as exc:  # grid keeps going when one run dies
        return {"run_id": cfg.run_id, "status": "failed", "out_dir": "",
                "final_window_mean": math.nan, "best_eval_mean": math.nan,
                "curve_means": [], "error": f"{type(exc).__name__}: {exc}"}


def run_grid(configs, out_dir, workers=1):
    """Execute training configs (possibly in parallel) and aggregate.

    Writes runs.csv (one row per run) and summary.csv (mean/std of the
    final window across seeds, grouped by variant, scenario and l).
    Individual failures are recorded and do not stop the grid.
    """
    os.makedirs(out_dir, exist_ok=True)
    payload = []
    for cfg in configs:
        sub = cfg.replace(out_dir=os.path.join(out_dir, cfg.run_id))
        payload.append(sub.to_dict())
    if workers > 1:
        ctx = get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            results = list(pool.map(_grid_worker, payload))
    else:
        results = [_grid_worker(p) for p in payload]

    with open(os.path.join(out_dir, "runs.csv"), "w") as fh:
        fh.write(RUNS_HEADER + "\n")
        for cfg, res in zip(configs, results):
            fh.write(",".join([
                res["run_id"], cfg.variant.label, cfg.scenario.kind,
                str(cfg.variant.l), str(cfg.seed), res["status"],
                str(cfg.total_env_steps),
                _fmt(res["final_window_mean"]),
                _fmt(np.std(res["curve_means"][-10:]) if res["curve_means"]
                     else math.nan),
                _fmt(res["best_eval_mean"]),
                res["error"].replace(",", ";").replace("\n", " "),
            ]) + "\n")

    groups = {}
    for cfg, res in zip(configs, results):
        if res["status"] != "completed":
            continue
        key = (cfg.variant.label, cfg.scenario.kind, cfg.variant.l)
        groups.setdefault(key, []).append(res["final_window_mean"])
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for (label, scen, l), vals in sorted(groups.items()):
            fh.write(",".join([
                label, scen, str(l), str(len(vals)),
                _fmt(np.mean(vals)), _fmt(np.std(vals)),
            ]) + "\n")
    return results
