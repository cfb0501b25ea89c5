"""Command-line front end: ``plan``, ``run``, ``compare`` and ``export``.

Exit codes: 0 success; 1 invalid input or missing artifacts; 2 planning
failure; 3 trial did not reach the goal (collision or timeout), or fewer
than 90% of comparison trials completed.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ScenarioError, load_scenario, scenario_from_document
from .global_planner import (InfeasibleEndpointError, path_cost, path_terms, plan_global_path,
                             write_path_csv)
from .kinematics import forward_kinematics
from .simulator import (compare, initial_world, read_trial_log, realize, run_trial,
                        write_comparison_json, write_histograms_csv, write_metrics_csv,
                        write_trial_log)

EXIT_OK, EXIT_INPUT, EXIT_PLAN, EXIT_TRIAL = 0, 1, 2, 3
CONFIG_NAME = "effective_config.json"
LOG_NAME = "trial_log.csv"


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ScenarioError(f"{out}: output directory is not writable")
    return out


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args):
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"simulation.seed={args.seed}")
    if getattr(args, "planner", None) is not None:
        overrides.append(f"simulation.planner={args.planner}")
    return load_scenario(args.scenario, overrides)


def cmd_plan(args):
    scenario, doc = _load(args)
    out = _outdir(args.out)
    _write_json(out / CONFIG_NAME, doc)
    obstacles, delay, plan_seed = realize(scenario)
    world = initial_world(obstacles, delay, scenario.dt)
    params = replace(scenario.planner_params, seed=plan_seed)
    try:
        result, timed = plan_global_path(scenario.model, world, scenario.q_start,
                                         scenario.q_goal, params, scenario.dt)
    except InfeasibleEndpointError as exc:
        _err(f"planning failure: {exc}")
        return EXIT_PLAN
    if timed is None:
        _err(f"planning failure: {result.reason}")
        return EXIT_PLAN
    write_path_csv(out / "path.csv", timed)
    L, M, D = path_terms(scenario.model, timed.configs, world)
    summary = {
        "L": L,
        "mean_manipulability": M,
        "min_obstacle_distance": D if np.isfinite(D) else None,
        "cost": path_cost(scenario.model, timed.configs, world, params),
        "raw_cost": result.cost,
        "raw_waypoints": len(result.waypoints),
        "iterations": result.iterations,
        "N": len(timed),
        "duration": timed.duration,
        "start_delay": delay,
    }
    _write_json(out / "plan_summary.json", summary)
    return EXIT_OK


def cmd_run(args):
    scenario, doc = _load(args)
    out = _outdir(args.out)
    _write_json(out / CONFIG_NAME, doc)
    m = run_trial(replace(scenario, keep_log=True))
    write_metrics_csv(out / "metrics.csv", [m])
    if m.log is not None:
        write_trial_log(out / LOG_NAME, m.log, scenario.model.n)
    if m.path is not None:
        write_path_csv(out / "path.csv", m.path)
    if m.reason.startswith("planning failure"):
        _err(m.reason)
        return EXIT_PLAN
    if not m.reached_goal:
        _err(f"trial ended without reaching the goal: {m.reason}")
        return EXIT_TRIAL
    return EXIT_OK


def cmd_compare(args):
    if args.runs < 2:
        raise ScenarioError("--runs must be at least 2")
    scenario, doc = _load(args)
    out = _outdir(args.out)
    _write_json(out / CONFIG_NAME, doc)
    seeds = [scenario.seed + i for i in range(args.runs)]
    planners = tuple(args.planners.split(","))
    if len(planners) != 2:
        raise ScenarioError("--planners needs exactly two comma-separated names")
    report = compare(scenario, seeds, planners, workers=args.workers)
    write_metrics_csv(out / "metrics.csv", report.trials)
    write_comparison_json(out / "comparison.json", report)
    write_histograms_csv(out / "histograms.csv", report.trials, sorted(set(planners)))
    done = sum(t.completed for t in report.trials)
    if done < 0.9 * len(report.trials):
        _err(f"only {done} of {len(report.trials)} trials completed")
        return EXIT_TRIAL
    return EXIT_OK


def cmd_export(args):
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out / LOG_NAME
    cfg_path = out / CONFIG_NAME
    for p in (log_path, cfg_path):
        if not p.is_file():
            raise ScenarioError(f"{p}: missing run artifact")
    with open(cfg_path) as fh:
        doc = json.load(fh)
    scenario = scenario_from_document(doc)
    log = read_trial_log(log_path)
    target = Path(args.to) if args.to else out / "ee_trajectory.csv"
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x", "y", "z"])
        for t, q in zip(log["t"], log["q"]):
            p = forward_kinematics(scenario.model, q).translation
            w.writerow([repr(float(t))] + [repr(float(x)) for x in p])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hybridplanner",
                                     description="Hybrid RRT*/potential-field arm planner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True,
                           help="scenario JSON file or bundled scenario name")
            p.add_argument("--seed", type=int, help="trial seed (u64)")
            p.add_argument("--override", action="append", metavar="KEY=VALUE",
                           help="dotted-key override, repeatable, last wins")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("plan", help="plan and time a global path")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("run", help="run one closed-loop trial")
    common(p)
    p.add_argument("--planner", choices=("hybrid", "vpf"))
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired multi-seed planner comparison")
    common(p)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--planners", default="hybrid,vpf", help="two planners, comma separated")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="end-effector trajectory from a run log")
    common(p, scenario=False)
    p.add_argument("--log", help="trial log (default: OUT/trial_log.csv)")
    p.add_argument("--to", help="output CSV (default: OUT/ee_trajectory.csv)")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
