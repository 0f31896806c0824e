"""Command-line runner: single runs, seed batches, parameter sweeps and action-set optimization."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .actions import resolve_action_set
from .engine import EngineConfig, Policy, alan_policy, baseline_policy, run
from .mcmc import AnnealSchedule, optimize
from .metrics import interaction_overhead, min_ttime, report_rows_csv
from .scenarios import DEFAULT_AGENTS, SCENARIO_NAMES, builtin_scenario
from .world import Scenario, ScenarioError, read_scenario_file, scenario_to_dict

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
SWEEP_AXES = ("gamma", "window", "agents", "failure_prob")
TRAINING_SCENARIOS = ("congested", "deadlock", "incoming", "blocks", "circle")


class UsageError(Exception):
    """Invalid command-line input (exit status 2)."""


# ---------------------------------------------------------------- building blocks


def load_scenario(args, seed: int, n_agents: int | None = None) -> Scenario:
    n = args.agents if n_agents is None else n_agents
    if args.scenario_file:
        if n is not None:
            raise UsageError("--agents only applies to built-in scenarios")
        try:
            return read_scenario_file(args.scenario_file).validate()
        except OSError as exc:
            raise UsageError(f"cannot read scenario file: {exc}") from None
    return builtin_scenario(args.scenario, n, seed)


def engine_config(args, seed: int) -> EngineConfig:
    cfg = EngineConfig(
        dt=args.dt,
        time_cap=args.time_cap,
        actuator_failure_prob=args.failure_prob,
        seed=seed,
    )
    return cfg.with_selection(gamma=args.gamma, temperature=args.tau, window_length=args.window)


def parse_policy(text: str, actions: str) -> tuple[Policy, dict]:
    """Policy object plus selection overrides implied by the policy name."""
    name, _, arg = text.partition(":")
    if name in ("alan", "epsilon", "ucb"):
        if arg:
            raise UsageError(f"policy {name!r} takes no argument")
        strategy = {"alan": "softmax", "epsilon": "epsilon_greedy", "ucb": "ucb"}[name]
        return alan_policy(resolve_action_set(actions)), {"strategy": strategy}
    if name in ("orca", "orca_only"):
        return baseline_policy("orca_only"), {}
    if name in ("random", "random_action"):
        try:
            period = float(arg) if arg else 2.0
        except ValueError:
            raise UsageError(f"bad random period {arg!r}") from None
        return baseline_policy("random_action", period), {}
    raise UsageError(f"unknown policy {text!r}; use alan, orca, random[:period], epsilon or ucb")


def one_run(args, policy_text: str, seed: int, n_agents: int | None = None, cfg_over: dict | None = None, trace_every: int = 0):
    scenario = load_scenario(args, seed, n_agents)
    policy, sel = parse_policy(policy_text, args.actions)
    cfg = replace(engine_config(args, seed), trace_every=trace_every)
    if cfg_over:
        sel = {**sel, **{k: v for k, v in cfg_over.items() if k in ("gamma", "window_length")}}
        rest = {k: v for k, v in cfg_over.items() if k not in ("gamma", "window_length")}
        cfg = replace(cfg, **rest)
    cfg = cfg.with_selection(**sel)
    result = run(scenario, cfg, policy)
    report = interaction_overhead(result, scenario, min_ttime(scenario))
    return scenario, policy, cfg, result, report


def echo(args, **extra) -> dict:
    # the output location does not affect results, so it stays out of the echo
    doc = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out_dir")}
    doc.update(extra)
    return doc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def _aggregate(reports) -> dict:
    cens = np.array([r.censored_overhead for r in reports])
    done = [r.interaction_overhead for r in reports if r.completed]
    return {
        "n_runs": len(reports),
        "completion_rate": sum(r.completed for r in reports) / len(reports),
        "mean_overhead": float(cens.mean()),
        "stdev_overhead": float(cens.std(ddof=1)) if len(cens) > 1 else 0.0,
        "mean_overhead_completed": float(np.mean(done)) if done else None,
    }


def _seed_list(args) -> list[int]:
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    return list(range(args.seeds))


# ---------------------------------------------------------------- commands


def cmd_run(args) -> int:
    out = Path(args.out_dir)
    if args.trace_every < 0:
        raise UsageError("--trace-every must be >= 0")
    scenario, policy, cfg, result, report = one_run(args, args.policy, args.seed, trace_every=args.trace_every)
    if args.trace_every > 0:
        _write(out / "trajectory.csv", result.trace_csv())
    summary = result.summary()
    summary.update(
        metrics=report.to_dict(),
        policy=policy.describe(),
        scenario_document=scenario_to_dict(scenario),
        cli=echo(args),
    )
    _write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if report.completed:
        print(f"{scenario.name} {policy.label} seed={args.seed}: overhead {report.interaction_overhead:.3f} s")
    else:
        print(f"{scenario.name} {policy.label} seed={args.seed}: incomplete (censored overhead {report.censored_overhead:.3f} s)")
    return EXIT_OK


def _batch_rows(args, policy_text: str, seeds, n_agents: int | None = None, cfg: dict | None = None):
    rows, reports = [], []
    for s in seeds:
        scenario, policy, _, result, report = one_run(args, policy_text, s, n_agents, cfg)
        reports.append(report)
        rows.append({
            "scenario": scenario.name,
            "policy": policy.label,
            "seed": s,
            "overhead": report.interaction_overhead,
            "mean": report.mean,
            "stdev": report.stdev,
            "completed": report.completed,
            "end_time": result.end_time,
        })
    return rows, reports


def cmd_batch(args) -> int:
    out = Path(args.out_dir)
    seeds = _seed_list(args)
    policies = [p for p in args.policy.split(",") if p]
    all_rows, agg_rows = [], []
    for p in policies:
        parse_policy(p, args.actions)  # validate before spending time
    for p in policies:
        rows, reports = _batch_rows(args, p, seeds)
        all_rows += rows
        agg = _aggregate(reports)
        agg_rows.append({"scenario": rows[0]["scenario"], "policy": rows[0]["policy"], **agg})
        done = agg["mean_overhead_completed"]
        print(
            f"{rows[0]['scenario']} {rows[0]['policy']}: mean overhead {agg['mean_overhead']:.3f} s "
            f"(completed {agg['completion_rate']:.0%}"
            + (f", mean over completed {done:.3f} s)" if done is not None else ")")
        )
    _write(out / "runs.csv", report_rows_csv(all_rows))
    _write(out / "aggregate.csv", _table(agg_rows, ["scenario", "policy", "n_runs", "mean_overhead", "stdev_overhead", "mean_overhead_completed", "completion_rate"]))
    _write(out / "batch.json", json.dumps({"aggregate": agg_rows, "seeds": seeds, "cli": echo(args)}, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def _table(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(f)) for f in fields])
    return buf.getvalue()


def _parse_values(text: str, axis: str) -> list:
    items = [v for v in (text or "").split(",") if v.strip()]
    if not items:
        raise UsageError("--values must list at least one value")
    try:
        vals = [int(v) if axis == "agents" else float(v) for v in items]
    except ValueError:
        raise UsageError(f"bad value list {text!r} for axis {axis}") from None
    return vals


def cmd_sweep(args) -> int:
    out = Path(args.out_dir)
    seeds = _seed_list(args)
    values = _parse_values(args.values, args.axis)
    parse_policy(args.policy, args.actions)
    rows, all_rows = [], []
    for v in values:
        if args.axis == "agents":
            r, reports = _batch_rows(args, args.policy, seeds, n_agents=v)
        elif args.axis == "gamma":
            r, reports = _batch_rows(args, args.policy, seeds, cfg={"gamma": v})
        elif args.axis == "window":
            r, reports = _batch_rows(args, args.policy, seeds, cfg={"window_length": v})
        else:
            r, reports = _batch_rows(args, args.policy, seeds, cfg={"actuator_failure_prob": v})
        agg = _aggregate(reports)
        agg["mean_completion_time"] = float(np.mean([x["end_time"] for x in r]))
        rows.append({"value": v, **agg})
        all_rows += [{**x, "value": v} for x in r]
        print(f"{args.axis}={v}: mean overhead {agg['mean_overhead']:.3f} s, completion time {agg['mean_completion_time']:.2f} s, completed {agg['completion_rate']:.0%}")
    _write(out / "sweep.csv", _table(rows, ["value", "mean_overhead", "stdev_overhead", "mean_completion_time", "completion_rate", "n_runs"]))
    _write(out / "runs.csv", _table(all_rows, ["value", "scenario", "policy", "seed", "overhead", "mean", "stdev", "completed", "end_time"]))
    _write(out / "sweep.json", json.dumps({"axis": args.axis, "rows": rows, "seeds": seeds, "cli": echo(args)}, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_optimize(args) -> int:
    out = Path(args.out_dir)
    if args.iterations < 2:
        raise UsageError("--iterations must be >= 2")
    names = list(TRAINING_SCENARIOS) if args.training else ([args.scenario] if args.scenario else [])
    if args.scenario_file:
        scenarios = [read_scenario_file(args.scenario_file).validate()]
    elif names:
        scenarios = [builtin_scenario(n, args.agents) for n in names]
    else:
        raise UsageError("optimize needs --scenario, --scenario-file or --training")
    schedule = AnnealSchedule(
        t_init=args.t_init,
        t_final=args.t_final,
        n_iterations=args.iterations,
        evals_start=args.evals_start,
        evals_end=args.evals_end,
        modification_range_start=math.radians(args.range_start),
        modification_range_end=math.radians(args.range_end),
        max_set_size=args.max_set_size,
        modify_speed=args.modify_speed,
    )
    cfg = engine_config(args, 0)

    def progress(step):
        if args.verbose:
            print(f"iter {step.iteration:4d} F={step.f:8.3f} best={step.best_f:8.3f} size={step.set_size} T={step.temperature:.3f}", file=sys.stderr)

    res = optimize(scenarios, schedule, cfg, seed=args.seed, progress=progress)
    _write(out / "actions.json", res.best_set.to_json() + "\n")
    _write(out / "chain.csv", res.chain_csv())
    doc = {
        "initial_set_deg": [round(a.angle_deg, 10) for a in res.initial_set.actions],
        "best_set_deg": [round(a.angle_deg, 10) for a in res.best_set.actions],
        "initial_F": res.initial_f,
        "final_F": res.best_f,
        "scenarios": [s.name for s in scenarios],
        "cli": echo(args),
    }
    _write(out / "optimize.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"initial F {res.initial_f:.3f} s -> final F {res.best_f:.3f} s with {len(res.best_set)} actions")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name in SCENARIO_NAMES:
        sc = builtin_scenario(name)
        print(f"{name:14s} agents={DEFAULT_AGENTS[name]:4d} obstacles={len(sc.obstacles):3d}  {_doc_line(name)}")
    return EXIT_OK


def _doc_line(name: str) -> str:
    from . import scenarios

    doc = getattr(scenarios, name).__doc__ or ""
    return doc.strip().splitlines()[0]


# ---------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, scenario_required: bool = True) -> None:
    src = p.add_mutually_exclusive_group(required=scenario_required)
    src.add_argument("--scenario", help=f"built-in scenario: {', '.join(SCENARIO_NAMES)}")
    src.add_argument("--scenario-file", help="scenario JSON file")
    p.add_argument("--actions", default="sample", help="action set: sample, multi, goal or a JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.4, help="coordination factor")
    p.add_argument("--tau", type=float, default=0.2, help="softmax temperature")
    p.add_argument("--window", type=float, default=2.0, help="reward window length (s)")
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--time-cap", type=float, default=None)
    p.add_argument("--failure-prob", type=float, default=0.0, help="actuator failure probability")
    p.add_argument("--agents", type=int, default=None, help="agent count for built-in scenarios")
    p.add_argument("--out-dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="banditnav", description="Bandit-driven multi-agent navigation experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one simulation; writes trajectory.csv and summary.json")
    _common(p)
    p.add_argument("--policy", default="alan", help="alan, orca, random[:period], epsilon or ucb")
    p.add_argument("--trace-every", type=int, default=1, help="trajectory subsampling in steps (0 disables)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="seeds 0..N-1 for one or more comma-separated policies")
    _common(p)
    p.add_argument("--policy", default="alan")
    p.add_argument("--seeds", type=int, default=30)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("sweep", help="a batch per value of one parameter")
    _common(p)
    p.add_argument("--policy", default="alan")
    p.add_argument("--seeds", type=int, default=30)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="learn an action set by annealed Metropolis-Hastings")
    _common(p, scenario_required=False)
    p.add_argument("--training", action="store_true", help="train on congested, deadlock, incoming, blocks and circle")
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--t-init", type=float, default=2.0)
    p.add_argument("--t-final", type=float, default=0.05)
    p.add_argument("--evals-start", type=int, default=3)
    p.add_argument("--evals-end", type=int, default=10)
    p.add_argument("--range-start", type=float, default=60.0, help="degrees")
    p.add_argument("--range-end", type=float, default=10.0, help="degrees")
    p.add_argument("--max-set-size", type=int, default=12)
    p.add_argument("--modify-speed", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("scenarios", help="list built-in scenarios")
    p.set_defaults(func=cmd_scenarios)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "scenario", None) and args.scenario not in SCENARIO_NAMES:
        print(f"error: unknown scenario {args.scenario!r}; valid names: {', '.join(SCENARIO_NAMES)}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
