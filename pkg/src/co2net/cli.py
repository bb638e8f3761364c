"""Command-line front end.

Every command resolves a configuration (packaged reference or ``--config``
plus ``--override section.key=value``), writes a manifest echoing it, and
leaves plot-ready CSV traces and key-value/JSON summaries in ``--out``.

Exit codes: 0 success, 1 a requested check failed, 2 bad configuration or
arguments, 3 settling bound outside (1, inf), 4 model domain or singular
input matrix, 5 integration or calibration failure, 6 training abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from co2net import __version__, config as config_mod
from co2net.ars import LinearPolicy, evaluate, train
from co2net.env import constant_policy, run_episode
from co2net.errors import (CalibrationFailure, ConfigError, SettlingBoundError, IntegrationFailure,
                           ModelDomainError, NoCompensationError, TrainingAbort)
from co2net.microalgae import optimal_light
from co2net.network import build_network, clamped_circularity, compensation_volume
from co2net import scenarios as sc

log = logging.getLogger("co2net")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SETTLING_BOUND, EXIT_DOMAIN, EXIT_INTEGRATION, EXIT_TRAINING = range(7)


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def write_summary(out: Path, name, summary: dict):
    lines = [f"{k} = {'undefined' if v is None else _jsonable(v)}" for k, v in summary.items()]
    (out / f"{name}.txt").write_text("\n".join(lines) + "\n")
    (out / f"{name}.json").write_text(json.dumps({k: _jsonable(v) for k, v in summary.items()}, indent=2) + "\n")
    print("\n".join(lines))


def write_manifest(out: Path, cfg, args):
    run = {k: v for k, v in vars(args).items() if k not in ("func",)}
    header = [f"# co2net {__version__}", f"# command = {args.command}"]
    header += [f"# {k} = {v}" for k, v in sorted(run.items()) if k != "command"]
    (out / "manifest.ini").write_text("\n".join(header) + "\n\n" + cfg.dumps())


def resolve(args):
    cfg = config_mod.load(args.config) if args.config else config_mod.reference()
    cfg = cfg.with_overrides(args.override)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out, cfg, args)
    return cfg, out


# ---------------------------------------------------------------- commands

def cmd_digester(args):
    cfg, out = resolve(args)
    t_max = cfg.get("controller", "t_max", 3.5) if args.t_max is None else args.t_max
    trace, ctrl = sc.run_digester(cfg, t_max=t_max, preset=args.preset)
    trace.to_csv(out / "digester_trace.csv")
    settled = ctrl.settled_at
    ok = settled is not None and settled <= t_max
    write_summary(out, "summary", {
        "preset": args.preset or cfg.get("controller", "preset", 1),
        "t_max": t_max,
        "settled_at": settled,
        "settled_before_t_max": ok,
        "max_abs_state_at_t_max": float(np.max(np.abs(trace.states[-1]))),
        "J": trace.meta["J"],
        "V0": ctrl.pq.v0,
        "m12_final": trace.final("m12"),
        "negative_dilution_steps": trace.meta["infeasible_steps"],
    })
    return EXIT_OK if ok else EXIT_CHECK


def cmd_network(args):
    cfg, out = resolve(args)
    run = sc.run_network(cfg, preset=args.preset, t_max=args.t_max)
    run.trace.to_csv(out / "network_trace.csv")
    (out / "network_edges.txt").write_text(build_network().edge_list())
    s = dict(run.summary)
    s["note"] = (f"cultivation uptake is {s['uptake_orders_below_emissions']:.2f} orders of magnitude "
                 f"below the digester emissions per unit volume")
    write_summary(out, "summary", s)
    return EXIT_OK


def _train_seed(cfg, seed, steps, max_seconds):
    acfg = sc.ars_config(cfg, seed=seed, total_steps=steps, max_seconds=max_seconds)
    return train(sc.env_factory(cfg), acfg)


def cmd_ars(args):
    cfg, out = resolve(args)
    istar = optimal_light(cfg.monod_params())
    (out / "env_descriptor.txt").write_text(sc.env_factory(cfg)().descriptor())
    seeds = [args.seed + i for i in range(args.seeds)]
    rows = {}
    for s in seeds:
        policy, curve = _train_seed(cfg, s, args.steps, args.max_seconds)
        policy.save(out / f"policy_seed{s}.txt")
        curve.to_csv(out / f"curve_seed{s}.csv")
        rows[s] = curve
        log.info("seed %d: r_s=%.6g r_e=%.6g delta=%s", s, curve.r_s, curve.r_e, curve.delta)
    deltas = [c.delta for c in rows.values() if c.delta is not None]
    median_delta = statistics.median(deltas) if len(deltas) == len(rows) and deltas else None
    median_rs = statistics.median(c.r_s for c in rows.values())
    late = statistics.median(c.late_action[-1] for c in rows.values())
    summary = {}
    for s, c in rows.items():
        summary.update({f"seed{s}_r_s": c.r_s, f"seed{s}_r_e": c.r_e, f"seed{s}_delta": c.delta,
                        f"seed{s}_late_action": c.late_action[-1], f"seed{s}_train_steps": c.train_steps[-1],
                        f"seed{s}_aborted": c.aborted})
    rel = abs(late - istar) / istar
    summary.update({
        "median_delta": median_delta,
        "delta_defined": median_delta is not None,
        "median_r_s": median_rs,
        "median_late_action": late,
        "optimal_light": istar,
        "late_action_rel_error": rel,
    })
    passed = (median_delta is not None and median_delta > 0 and median_delta >= 0.1 * abs(median_rs)
              and rel <= 0.2)
    summary["checks_passed"] = passed
    write_summary(out, "summary", summary)
    return EXIT_CHECK if args.check and not passed else EXIT_OK


def cmd_policy_eval(args):
    cfg, out = resolve(args)
    policy = LinearPolicy.load(args.policy)
    env = sc.env_factory(cfg)()
    acfg = sc.ars_config(cfg, seed=args.seed, total_steps=0)
    if args.episodes:
        acfg = sc.ars_config(cfg, seed=args.seed, total_steps=0, eval_episodes=args.episodes)
    n = acfg.eval_episodes
    mean, std, late, _ = evaluate(policy, env, acfg)
    istar = optimal_light(cfg.monod_params())
    ref, _, _, _ = evaluate(LinearPolicy.zeros(2), env, acfg)
    const = sum(run_episode(constant_policy(istar), env, acfg.eval_seed + i)[0] for i in range(n)) / n
    run_episode(policy.act, env, acfg.eval_seed, record=True).to_csv(out / "policy_trace.csv")
    write_summary(out, "summary", {
        "episodes": n, "return_mean": mean, "return_std": std, "late_action": late,
        "optimal_light": istar, "constant_optimal_return": const, "zero_policy_return": ref,
    })
    return EXIT_OK


def cmd_validate(args):
    cfg, out = resolve(args)
    checks = sc.validate(cfg, calibrate=not args.skip_calibration)
    lines = [c.line() for c in checks]
    (out / "validate.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    summary = {f"{c.name}_measured": c.measured for c in checks}
    summary.update({f"{c.name}_passed": c.passed for c in checks})
    summary["all_passed"] = all(c.passed for c in checks)
    (out / "summary.json").write_text(json.dumps({k: _jsonable(v) for k, v in summary.items()}, indent=2) + "\n")
    return EXIT_OK if summary["all_passed"] else EXIT_CHECK


def _steady_flows(cfg, args):
    if args.m12 is not None and args.m23 is not None:
        return args.m12, args.m23
    s = sc.run_network(cfg).summary
    return (s["m12_ss"] if args.m12 is None else args.m12), (s["m23_ss"] if args.m23 is None else args.m23)


def cmd_volume(args):
    cfg, out = resolve(args)
    m12, m23 = _steady_flows(cfg, args)
    vd = cfg.get("network", "vd", 1.0) if args.vd is None else args.vd
    vm = compensation_volume(m12, m23, vd)
    write_summary(out, "summary", {"m12_ss": m12, "m23_ss": m23, "vd": vd, "vm": vm, "vm_over_vd": vm / vd})
    return EXIT_OK


def cmd_circularity(args):
    cfg, out = resolve(args)
    delta = cfg.get("network", "delta", 1.0) if args.delta is None else args.delta
    res = clamped_circularity(args.net_flow, delta)
    write_summary(out, "summary", {"net_flow_in": args.net_flow, "net_flow": res.net_flow, "delta": delta,
                                   "lambda": res.lam, "clamped": args.net_flow < 0})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="co2net", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI configuration (default: packaged reference)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
        return sp

    def controller(sp):
        sp.add_argument("--t-max", type=float, dest="t_max")
        sp.add_argument("--preset", type=int, choices=sorted(config_mod.PRESETS))
        return sp

    controller(common(sub.add_parser("digester-sim", help="closed-loop digester run"))).set_defaults(func=cmd_digester)
    controller(common(sub.add_parser("network-sim", help="coupled digester/atmosphere/cultivation run"))
               ).set_defaults(func=cmd_network)

    sp = common(sub.add_parser("ars-train", help="train linear light policies"))
    sp.add_argument("--steps", type=int, help="environment steps per seed (default from config)")
    sp.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    sp.add_argument("--max-seconds", type=float, help="wall-clock budget per seed")
    sp.add_argument("--check", action="store_true", help="exit 1 unless the learning checks pass")
    sp.set_defaults(func=cmd_ars)

    sp = common(sub.add_parser("policy-eval", help="evaluate a saved policy"))
    sp.add_argument("--policy", required=True)
    sp.add_argument("--episodes", type=int)
    sp.set_defaults(func=cmd_policy_eval)

    sp = common(sub.add_parser("validate", help="run the invariant suite"))
    sp.add_argument("--skip-calibration", action="store_true")
    sp.set_defaults(func=cmd_validate)

    sp = common(sub.add_parser("volume", help="net-zero cultivation volume"))
    sp.add_argument("--m12", type=float)
    sp.add_argument("--m23", type=float)
    sp.add_argument("--vd", type=float)
    sp.set_defaults(func=cmd_volume)

    sp = common(sub.add_parser("circularity", help="circularity of a net flow"))
    sp.add_argument("--net-flow", type=float, required=True, dest="net_flow")
    sp.add_argument("--delta", type=float)
    sp.set_defaults(func=cmd_circularity)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NoCompensationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SettlingBoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SETTLING_BOUND
    except ModelDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (IntegrationFailure, CalibrationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except TrainingAbort as exc:
        print(f"error: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
