"""Command-line entry points.

Verbs:
  ingest   parse a Porto-format trace into an instance file
  run      execute a configured experiment sweep and write reports
  bound    LP relaxation upper bound of a saved instance
  exact    exact optimum of a (small) saved instance
  report   re-render the CSV tables from a saved JSON report

Exit codes: 0 success, 1 configuration/usage error, 2 per-cell failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bounds import BudgetExceededError, brute_force_opt, lp_bound
from .experiment import (ConfigError, ExperimentConfig, parse_config,
                         render_csv, run_experiment)
from .ingest import (DRIVER_MODELS, GeneratorConfig, drivers_from_taxi_ids,
                     gen_drivers, parse_porto, trip_histograms, trips_to_tasks)
from .market import Instance, load_instance, save_instance


def _cmd_ingest(args) -> int:
    cfg = ExperimentConfig(
        speed_kmh=args.speed_kmh, fuel_unit_price=args.fuel_unit_price,
        detour_factor=args.detour_factor, beta1=args.beta1, beta2=args.beta2)
    cm = cfg.cost_model()
    with open(args.trace, "r", encoding="utf-8") as fh:
        records, report = parse_porto(fh)
    if args.date:
        from .experiment import _date_to_epoch
        lo = _date_to_epoch(args.date)
        records = [r for r in records if lo <= r.start_timestamp < lo + 86400]
    if args.max_tasks:
        records = records[:args.max_tasks]
    tasks = trips_to_tasks(records, cm, wtp_markup_max=args.wtp_markup_max,
                           seed=args.seed)
    if args.taxi_shifts:
        drivers = drivers_from_taxi_ids(records)
    else:
        drivers = gen_drivers(GeneratorConfig(
            driver_model=args.model, n_drivers=args.drivers,
            seed=args.seed), tasks)
    inst = Instance(tuple(drivers), tuple(tasks), cm, args.objective)
    save_instance(inst, args.out)
    summary = {
        "tasks": len(tasks),
        "drivers": len(drivers),
        "drop_report": report.to_jsonable(),
        "histograms": trip_histograms(records),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.mode:
        overrides["modes"] = ",".join(args.mode)
    if args.drivers:
        overrides["drivers"] = args.drivers
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    cfg = parse_config(args.config)
    if overrides:
        echo = cfg.echo()
        echo.update(overrides)
        cfg = parse_config(echo)
    report = run_experiment(cfg, workers=args.workers)
    if not cfg.out_dir:
        sys.stdout.write(report.csv_text)
    print(f"# cells={len(report.cells)} errors={report.error_count} "
          f"wallclock={report.wallclock_s:.1f}s", file=sys.stderr)
    return 2 if report.error_count else 0


def _cmd_bound(args) -> int:
    inst = load_instance(args.instance)
    sol = lp_bound(inst, tol=args.tol)
    print(json.dumps({
        "objective": sol.objective,
        "iterations": sol.iterations,
        "columns": len(sol.column_weights),
    }, indent=2, sort_keys=True))
    return 0


def _cmd_exact(args) -> int:
    inst = load_instance(args.instance)
    try:
        sol = brute_force_opt(inst, node_budget=args.budget)
    except BudgetExceededError as exc:
        print(json.dumps({"error": str(exc),
                          "incumbent_objective": exc.incumbent.objective,
                          "optimal": False}, indent=2, sort_keys=True))
        return 2
    print(json.dumps({
        "objective": sol.objective,
        "nodes_explored": sol.nodes_explored,
        "schedules": {s.driver_id: list(s.task_ids) for s in sol.schedules
                      if s.task_ids},
        "optimal": True,
    }, indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    with open(args.json, "r", encoding="utf-8") as fh:
        saved = json.load(fh)
    csv_text = render_csv(saved["cells"], saved["config"]["modes"])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ridemarket",
                                description="ride-sharing dispatch optimization")
    sub = p.add_subparsers(dest="verb", required=True)

    pi = sub.add_parser("ingest", help="parse a trace into an instance file")
    pi.add_argument("--trace", required=True)
    pi.add_argument("--out", required=True)
    pi.add_argument("--drivers", type=int, default=50)
    pi.add_argument("--model", choices=DRIVER_MODELS, default="hitchhiking")
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--date", default=None, help="keep one UTC day (YYYY-MM-DD)")
    pi.add_argument("--max-tasks", type=int, default=1000)
    pi.add_argument("--taxi-shifts", action="store_true",
                    help="derive drivers from taxi ids instead of sampling")
    pi.add_argument("--objective", default="driver-profit")
    pi.add_argument("--wtp-markup-max", type=float, default=0.5)
    pi.add_argument("--speed-kmh", type=float, default=30.0)
    pi.add_argument("--fuel-unit-price", type=float, default=0.5)
    pi.add_argument("--detour-factor", type=float, default=1.3)
    pi.add_argument("--beta1", type=float, default=1.0)
    pi.add_argument("--beta2", type=float, default=0.01)
    pi.set_defaults(func=_cmd_ingest)

    pr = sub.add_parser("run", help="run an experiment sweep")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", default=None)
    pr.add_argument("--mode", action="append", default=None)
    pr.add_argument("--drivers", default=None, help="a:b:step or comma list")
    pr.add_argument("--seeds", type=int, default=None)
    pr.add_argument("--workers", type=int, default=None)
    pr.set_defaults(func=_cmd_run)

    pb = sub.add_parser("bound", help="LP relaxation bound of an instance")
    pb.add_argument("--instance", required=True)
    pb.add_argument("--tol", type=float, default=1e-7)
    pb.set_defaults(func=_cmd_bound)

    pe = sub.add_parser("exact", help="exact optimum of a small instance")
    pe.add_argument("--instance", required=True)
    pe.add_argument("--budget", type=int, default=500_000)
    pe.set_defaults(func=_cmd_exact)

    pp = sub.add_parser("report", help="re-render CSV from a JSON report")
    pp.add_argument("--json", required=True)
    pp.add_argument("--out", default=None)
    pp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
