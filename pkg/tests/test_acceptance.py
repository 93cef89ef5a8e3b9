"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 5-7 and 9 consume the training-run grid from acceptance_support
(cached under RTD3_ACCEPTANCE_DIR; recomputed on demand otherwise, which
takes many core-hours on a small machine).  Everything else is computed
fresh in-process at the stated tolerances.
"""

import sys

import numpy as np
import pytest

from rtd3 import agents, checkpoint, nn
from rtd3.agents import VariantSpec, count_params
from rtd3.config import RunConfig
from rtd3.disturbances import DisturbanceSpec
from rtd3.harness import bench_update, evaluate, gradcheck_report, train

from . import acceptance_support as acc

APPENDIX = {
    "lstm_td3": (166273, 166401),
    "lstm_1ha1hc": (149377, 149377),
    "lstm_1ha2hc": (149377, 166017),
    "h_td3": (149377, 149377),
    "td3": (17153, 17281),
}


def report(num, name, ok, detail=""):
    line = f"[acceptance] {num:>2}. {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()
    assert ok, line


@pytest.fixture(scope="session")
def grid():
    return acc.ensure_runs(workers=2)


def test_criterion_01_parameter_counts():
    got = {k: count_params(VariantSpec(kind=k, obs_dim=3, act_dim=1))
           for k in APPENDIX}
    report(1, "parameter-count reproduction", got == APPENDIX,
           ", ".join(f"{k}={v}" for k, v in got.items()))


def test_criterion_02_gradient_correctness():
    rows = gradcheck_report(eps=1e-5, hidden=8, seq_len=4)
    worst = max(err for _, err in rows)
    report(2, "gradient correctness", worst < 1e-6,
           f"worst rel err {worst:.3e} over {len(rows)} checks")


def test_criterion_03_carry_state_identity():
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(1000):
        in_dim = int(rng.integers(1, 6))
        hidden = int(rng.integers(1, 10))
        length = int(rng.integers(2, 12))
        split = int(rng.integers(1, length))
        layer = nn.LSTM(in_dim, hidden, rng)
        xs = rng.standard_normal((2, length, in_dim))
        _, full, _ = layer.forward_seq(xs)
        _, mid, _ = layer.forward_seq(xs[:, :split])
        _, parts, _ = layer.forward_seq(xs[:, split:], state0=mid)
        worst = max(worst,
                    float(np.abs(full.h - parts.h).max()),
                    float(np.abs(full.c - parts.c).max()))
    report(3, "carry-state identity", worst < 1e-12,
           f"max element gap {worst:.3e} over 1000 cases")


def test_criterion_04_htd3_state_seeding_oracle():
    rng = np.random.default_rng(777)
    worst = 0.0
    for case in range(50):
        spec = VariantSpec(kind="h_td3", l=3, hidden=16)
        critic = agents.build_critic(spec, rng)
        T = int(rng.integers(2, 20))
        pairs = rng.standard_normal((1, T, 4))
        state = nn.LSTMState.zeros(1, 16)
        idx0 = np.zeros(1, dtype=int)
        for t in range(T):
            stored = state.copy()
            _, _, state = critic.forward(pairs[:, t:t + 1], idx0, state0=state)
            q_seeded, _, _ = critic.forward(pairs[:, t:t + 1], idx0,
                                            state0=stored)
            q_replayed, _, _ = critic.forward(pairs[:, :t + 1], np.array([t]))
            worst = max(worst, float(np.abs(q_seeded - q_replayed).max()))
    report(4, "h_td3 state-seeding oracle", worst < 1e-10,
           f"max Q gap {worst:.3e}")


def test_criterion_05_mdp_baseline(grid):
    best = [acc.best_eval_mean(grid[f"td3_none_l3_s{s}"]) for s in acc.SEEDS]
    solved = sum(b >= -250.0 for b in best)
    report(5, "MDP baseline learns", solved >= 2,
           "best eval per seed: " + ", ".join(f"{b:.0f}" for b in best))


def _mean_final(grid, label, scenario, l, seeds=acc.SEEDS):
    vals = [acc.final_window_mean(grid[f"{label}_{scenario}_l{l}_s{s}"])
            for s in seeds]
    return float(np.mean(vals))


def test_criterion_06_td3_failure_modes(grid):
    recurrent = ("lstm_td3", "lstm_td3_noact", "lstm_1ha1hc",
                 "lstm_1ha2hc", "h_td3")
    details = []
    ok = True
    for scenario in ("noise", "hidden"):
        td3 = _mean_final(grid, "td3", scenario, 3)
        for label in recurrent:
            margin = _mean_final(grid, label, scenario, 3) - td3
            details.append(f"{scenario}/{label}:+{margin:.0f}")
            ok &= margin >= 200.0
    report(6, "TD3 failure modes (margin >= 200)", ok, " ".join(details))


def test_criterion_07_action_inclusion(grid):
    with_act = _mean_final(grid, "lstm_td3", "random_sine", 10)
    without = _mean_final(grid, "lstm_td3_noact", "random_sine", 10)
    report(7, "action-sequence inclusion", with_act >= without,
           f"with={with_act:.0f} without={without:.0f}")


def test_criterion_08_iteration_time():
    lstm_1 = bench_update("lstm_td3", 1, n_updates=21)
    lstm_20 = bench_update("lstm_td3", 20, n_updates=21)
    h_1 = bench_update("h_td3", 1, n_updates=21)
    h_20 = bench_update("h_td3", 20, n_updates=21)
    td3 = bench_update("td3", 1, n_updates=21)
    ok = (h_20 < 0.6 * lstm_20
          and h_20 < 1.3 * h_1
          and lstm_20 > 2.0 * lstm_1
          and td3 == min(td3, lstm_1, lstm_20, h_1, h_20))
    report(8, "iteration-time claims", ok,
           f"lstm l1={lstm_1:.1f}ms l20={lstm_20:.1f}ms "
           f"h_td3 l1={h_1:.1f}ms l20={h_20:.1f}ms td3={td3:.1f}ms")


def test_criterion_09_generalisability(grid):
    ckpt = grid["lstm_1ha1hc_random_sine_l10_s0"] / "checkpoint.bin"
    agent, _ = checkpoint.load_agent(str(ckpt))
    scenarios = {
        "comb_sine": DisturbanceSpec(kind="comb_sine"),
        "damped_sine": DisturbanceSpec(kind="damped_sine"),
        "bias_a1": DisturbanceSpec(kind="temporal_bias", amp_lo=1.0,
                                   amp_hi=1.0),
        "noise_s1": DisturbanceSpec(kind="noise", sigma=1.0),
    }
    means = {}
    for i, (name, spec) in enumerate(scenarios.items()):
        vals = [evaluate(agent, spec, 100, seed=1000 * s + i)[0]
                for s in range(5)]
        means[name] = float(np.mean(vals))
    ok = all(means[k] > means["noise_s1"]
             for k in ("comb_sine", "damped_sine", "bias_a1"))
    report(9, "generalisability direction", ok,
           " ".join(f"{k}={v:.0f}" for k, v in means.items()))


def test_criterion_10_determinism(tmp_path):
    def cfg(out):
        return RunConfig.from_dict({
            "schema_version": 1, "seed": 11, "total_env_steps": 1500,
            "eval_every_steps": 500, "eval_episodes": 3,
            "variant": {"kind": "h_td3", "l": 3},
            "scenario": {"kind": "random_sine"},
            "hyperparams": {"start_steps": 300, "batch_size": 32},
            "out_dir": str(out),
        })

    train(cfg(tmp_path / "a"))
    train(cfg(tmp_path / "b"))
    a = (tmp_path / "a" / "curve.csv").read_bytes()
    b = (tmp_path / "b" / "curve.csv").read_bytes()
    report(10, "bit-identical training curves", a == b,
           f"{len(a)} bytes compared")
