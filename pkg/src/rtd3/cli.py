"""Command-line front end.

Subcommands: train, eval, cross-eval, bench, gradcheck, params, grid.
Successful commands print a JSON result to stdout and exit 0; failures
print a machine-readable error record to stderr and exit nonzero.
"""

import argparse
import json
import sys


def _parse_scenario_token(token):
    """Parse 'kind' or 'kind:key=val,key=val' into a scenario dict."""
    kind, _, rest = token.partition(":")
    d = {"kind": kind}
    if rest:
        for pair in rest.split(","):
            key, _, val = pair.partition("=")
            if not _:
                raise ValueError(f"bad scenario parameter {pair!r}")
            try:
                d[key] = json.loads(val)
            except json.JSONDecodeError:
                d[key] = val
    return d


def _apply_overrides(cfg, args):
    from .config import scenario_from_dict, variant_from_dict

    scenario = cfg.scenario
    if args.scenario is not None:
        scenario = scenario_from_dict(_parse_scenario_token(args.scenario))
    vd = cfg.variant.to_dict()
    vd.pop("obs_dim", None)
    vd.pop("act_dim", None)
    if args.variant is not None:
        vd["kind"] = args.variant
    if args.l is not None:
        vd["l"] = args.l
    if getattr(args, "include_action", None) is not None:
        vd["include_action"] = args.include_action == "true"
    variant = variant_from_dict(vd, scenario)
    cfg = cfg.replace(variant=variant, scenario=scenario)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.steps is not None:
        cfg = cfg.replace(total_env_steps=args.steps)
    if args.out is not None:
        cfg = cfg.replace(out_dir=args.out)
    return cfg


def _add_common(p, steps=True):
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--variant", default=None)
    p.add_argument("--scenario", default=None,
                   help="scenario kind, optionally kind:key=val,...")
    p.add_argument("--l", type=int, default=None, help="history length")
    p.add_argument("--include-action", choices=("true", "false"),
                   default=None, dest="include_action")
    if steps:
        p.add_argument("--steps", type=int, default=None,
                       help="total environment steps")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rtd3",
        description="TD3 and recurrent variants on the disturbed pendulum",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("train", help="run one training config"))

    p = sub.add_parser("eval", help="evaluate a checkpoint on one scenario")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", default=None,
                   help="defaults to the training scenario")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("cross-eval",
                       help="evaluate a checkpoint across scenarios")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", action="append", default=None,
                   help="repeatable; kind or kind:key=val,...")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("bench", help="update wall-time benchmark")
    p.add_argument("--variants", default="td3,lstm_td3,lstm_1ha1hc,"
                                         "lstm_1ha2hc,h_td3")
    p.add_argument("--ls", default="1,3,6,10,20")
    p.add_argument("--updates", type=int, default=30)
    p.add_argument("--out", default=None, help="CSV output path")

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-6)

    p = sub.add_parser("params", help="parameter-count table")
    p.add_argument("--obs-dim", type=int, default=3)
    p.add_argument("--act-dim", type=int, default=1)

    p = sub.add_parser("grid", help="run a grid of training configs")
    p.add_argument("--config", required=True, help="JSON grid config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    return parser


def cmd_train(args):
    from .config import RunConfig
    from .harness import train

    from .harness import jsonable

    cfg = RunConfig.load(args.config) if args.config else _default_config()
    cfg = _apply_overrides(cfg, args)
    result = train(cfg)
    print(json.dumps(jsonable({
        "run_id": cfg.run_id, "out_dir": result.out_dir,
        "status": result.status,
        "final_window_mean": result.final_window_mean,
        "best_eval_mean": result.best_eval_mean,
    }), indent=2))
    return 0 if result.status == "completed" else 3


def _default_config():
    from .config import RunConfig, scenario_from_dict, variant_from_dict

    scenario = scenario_from_dict({"kind": "none"})
    return RunConfig(variant=variant_from_dict({"kind": "td3"}, scenario),
                     scenario=scenario)


def cmd_eval(args):
    from . import checkpoint
    from .config import scenario_from_dict
    from .harness import evaluate

    agent, meta = checkpoint.load_agent(args.checkpoint)
    if args.scenario is not None:
        scenario = scenario_from_dict(_parse_scenario_token(args.scenario))
    else:
        scenario = scenario_from_dict(meta["scenario"])
    mean, std = evaluate(agent, scenario, args.episodes, args.seed)
    print(json.dumps({"scenario": scenario.kind, "episodes": args.episodes,
                      "return_mean": mean, "return_std": std}, indent=2))
    return 0


def cmd_cross_eval(args):
    from . import checkpoint
    from .config import scenario_from_dict
    from .harness import cross_eval

    tokens = args.scenario
    if not tokens:
        meta = checkpoint.load_meta(args.checkpoint)
        tokens = [meta["scenario"]["kind"]]
    scenarios = [scenario_from_dict(_parse_scenario_token(t)) for t in tokens]
    rows = cross_eval(args.checkpoint, scenarios, args.episodes, args.seed,
                      out_path=args.out)
    print(json.dumps([
        {"scenario": k, "return_mean": m, "return_std": s,
         "is_train_scenario": t} for k, m, s, t in rows], indent=2))
    return 0


def cmd_bench(args):
    from .harness import bench_update

    rows = []
    for kind in args.variants.split(","):
        for l in (int(s) for s in args.ls.split(",")):
            ms = bench_update(kind.strip(), l, n_updates=args.updates)
            rows.append({"variant": kind.strip(), "l": l,
                         "ms_per_update": ms})
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("variant,l,ms_per_update\n")
            for r in rows:
                fh.write(f"{r['variant']},{r['l']},{r['ms_per_update']:.6f}\n")
    print(json.dumps(rows, indent=2))
    return 0


def cmd_gradcheck(args):
    from .harness import gradcheck_report

    rows = gradcheck_report(eps=args.eps)
    failed = False
    out = []
    for name, err in rows:
        ok = err < args.threshold
        failed |= not ok
        out.append({"check": name, "max_rel_err": err, "pass": ok})
        print(f"{name:22s} {err:12.3e} {'pass' if ok else 'FAIL'}")
    if failed:
        raise SystemExit(1)
    return 0


def cmd_params(args):
    from .agents import VARIANT_KINDS, VariantSpec, count_params

    reference = {
        "lstm_td3": (166273, 166401),
        "lstm_1ha1hc": (149377, 149377),
        "lstm_1ha2hc": (149377, 166017),
        "h_td3": (149377, 149377),
        "td3": (17153, 17281),
    }
    rows = []
    mismatch = False
    for kind in VARIANT_KINDS:
        actor, critic = count_params(
            VariantSpec(kind=kind, obs_dim=args.obs_dim,
                        act_dim=args.act_dim))
        row = {"variant": kind, "actor": actor, "critic": critic}
        if (args.obs_dim, args.act_dim) == (3, 1):
            row["reference"] = list(reference[kind])
            row["match"] = (actor, critic) == reference[kind]
            mismatch |= not row["match"]
        rows.append(row)
    print(json.dumps(rows, indent=2))
    if mismatch:
        raise SystemExit(1)
    return 0


def cmd_grid(args):
    from .config import ConfigError, RunConfig, scenario_from_dict, \
        variant_from_dict
    from .harness import run_grid

    with open(args.config) as fh:
        raw = json.load(fh)
    allowed = {"schema_version", "base", "variants", "scenarios", "ls",
               "seeds", "steps_by_scenario"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in grid config")
    base = dict(raw.get("base", {}))
    base.setdefault("schema_version", raw.get("schema_version", 1))
    steps_by_scenario = raw.get("steps_by_scenario", {})
    configs = []
    for sd in raw.get("scenarios", [{"kind": "none"}]):
        scenario = scenario_from_dict(dict(sd))
        for vd in raw.get("variants", [{"kind": "td3"}]):
            ls = raw.get("ls") if vd["kind"] != "td3" else None
            for l in (ls or [vd.get("l", 3)]):
                for seed in raw.get("seeds", [0]):
                    d = dict(base)
                    d["variant"] = dict(vd, l=l)
                    d["scenario"] = dict(sd)
                    d["seed"] = seed
                    if scenario.kind in steps_by_scenario:
                        d["total_env_steps"] = steps_by_scenario[scenario.kind]
                    configs.append(RunConfig.from_dict(d))
    results = run_grid(configs, args.out, workers=args.workers)
    n_fail = sum(r["status"] != "completed" for r in results)
    print(json.dumps({"runs": len(results), "failed": n_fail,
                      "out_dir": args.out}, indent=2))
    return 0 if n_fail == 0 else 3


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "train": cmd_train, "eval": cmd_eval, "cross-eval": cmd_cross_eval,
        "bench": cmd_bench, "gradcheck": cmd_gradcheck, "params": cmd_params,
        "grid": cmd_grid,
    }
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:
        json.dump({"error": {"type": type(exc).__name__,
                             "message": str(exc)}}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
