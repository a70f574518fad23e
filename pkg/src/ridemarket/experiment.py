"""Experiment driver: build markets, sweep driver counts, emit reports.

A sweep cell is one (driver count, seed) pair; within a cell every requested
mode runs on the same instance, and the LP bound (when requested) prices all
modes' performance ratios.  Cells are independent, deterministic functions of
the configuration, so they can run in a worker pool of any size and still
produce byte-identical CSV output; wall-clock timings therefore live only in
the JSON report, and the CSV's wallclock_ms column is fixed at 0.
"""

from __future__ import annotations

import json
import multiprocessing
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bounds import BudgetExceededError, brute_force_opt, lp_bound
from .estimation import CostModel
from .greedy import greedy_assign
from .ingest import (PORTO_BBOX, BoundingBox, GeneratorConfig, gen_drivers,
                     gen_tasks, parse_porto, trips_to_tasks)
from .market import (DRIVER_PROFIT, OBJECTIVES, Instance, build_outcome,
                     Schedule)
from .metrics import MarketMetrics, compute_metrics
from .online import MAX_MARGIN, NEAREST, simulate

MODE_GREEDY = "offline-greedy"
MODE_NEAREST = "online-nearest"
MODE_MAXMARGIN = "online-maxmargin"
MODE_EXACT = "exact"
MODE_LP = "lp-bound"
ALL_MODES = (MODE_GREEDY, MODE_NEAREST, MODE_MAXMARGIN, MODE_EXACT, MODE_LP)

CSV_COLUMNS = ["mode", "n_drivers", "seed", "total_revenue", "drivers_profit",
               "service_rate", "avg_rev_per_driver", "avg_tasks_per_driver",
               "ir_violations", "perf_ratio", "wallclock_ms"]


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: str = "synthetic"            # synthetic | trace
    trace_path: str | None = None
    trace_date: str | None = None       # YYYY-MM-DD, UTC day filter
    max_tasks: int = 1000
    n_tasks: int = 1000
    drivers: tuple[int, ...] = (20, 90, 160, 230, 300)
    seeds: int = 10
    modes: tuple[str, ...] = (MODE_GREEDY, MODE_NEAREST, MODE_MAXMARGIN, MODE_LP)
    model: str = "hitchhiking"
    objective: str = DRIVER_PROFIT
    seed: int = 0                       # base seed all cell seeds derive from
    # market economics
    speed_kmh: float = 30.0
    fuel_unit_price: float = 0.5
    detour_factor: float = 1.3
    beta1: float = 1.0
    beta2: float = 0.01
    default_surge: float = 1.0
    # synthesis
    bbox: tuple[float, float, float, float] = (
        PORTO_BBOX.lat_min, PORTO_BBOX.lon_min, PORTO_BBOX.lat_max, PORTO_BBOX.lon_max)
    horizon_s: float = 43_200.0
    shift_length_s: float = 4 * 3600.0
    publish_lead_s: float = 300.0
    wtp_markup_max: float = 0.5
    # solver knobs
    lp_tol: float = 1e-7
    exact_budget: int = 500_000
    # execution
    workers: int = 0                    # 0 = one per CPU
    out_dir: str | None = None
    log_events: bool = False

    def cost_model(self) -> CostModel:
        return CostModel(speed_kmh=self.speed_kmh,
                         fuel_unit_price=self.fuel_unit_price,
                         detour_factor=self.detour_factor,
                         beta1=self.beta1, beta2=self.beta2,
                         default_surge=self.default_surge)

    def echo(self) -> dict:
        d = asdict(self)
        d["drivers"] = list(self.drivers)
        d["modes"] = list(self.modes)
        d["bbox"] = list(self.bbox)
        return d


class ConfigError(ValueError):
    pass


def _parse_drivers(text: str) -> tuple[int, ...]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"driver sweep must be a:b:step, got {text!r}")
        a, b, step = (int(p) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"bad driver sweep {text!r}")
        return tuple(range(a, b + 1, step))
    return tuple(int(p) for p in text.split(","))


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config(source) -> ExperimentConfig:
    """Build an ExperimentConfig from a dict or a flat key=value text file."""
    if isinstance(source, ExperimentConfig):
        return source
    if isinstance(source, dict):
        pairs = dict(source)
    else:
        pairs = {}
        with open(source, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{source}:{lineno}: expected key = value")
                key, value = (s.strip() for s in line.split("=", 1))
                pairs[key] = value

    defaults = ExperimentConfig()
    kwargs = {}
    for key, value in pairs.items():
        if not hasattr(defaults, key):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(defaults, key)
        try:
            if key == "drivers":
                kwargs[key] = (_parse_drivers(value) if isinstance(value, str)
                               else tuple(int(v) for v in value))
            elif key == "modes":
                modes = (tuple(m.strip() for m in value.split(","))
                         if isinstance(value, str) else tuple(value))
                for m in modes:
                    if m not in ALL_MODES:
                        raise ConfigError(f"unknown mode {m!r}")
                kwargs[key] = modes
            elif key == "bbox":
                vals = ([float(v) for v in value.split(",")]
                        if isinstance(value, str) else [float(v) for v in value])
                if len(vals) != 4:
                    raise ConfigError("bbox needs lat_min,lon_min,lat_max,lon_max")
                kwargs[key] = tuple(vals)
            elif isinstance(current, bool):
                kwargs[key] = (_BOOL[value.strip().lower()]
                               if isinstance(value, str) else bool(value))
            elif isinstance(current, int):
                kwargs[key] = int(value)
            elif isinstance(current, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value if value != "" else None
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None

    cfg = ExperimentConfig(**kwargs)
    if cfg.objective not in OBJECTIVES:
        raise ConfigError(f"unknown objective {cfg.objective!r}")
    if cfg.tasks not in ("synthetic", "trace"):
        raise ConfigError(f"tasks must be synthetic or trace, got {cfg.tasks!r}")
    if cfg.tasks == "trace" and not cfg.trace_path:
        raise ConfigError("tasks = trace requires trace_path")
    if cfg.model not in ("hitchhiking", "home-work-home"):
        raise ConfigError(f"unknown driver model {cfg.model!r}")
    return cfg


# --- instance construction ---------------------------------------------------

_task_cache: dict = {}


def _cell_tasks(cfg: ExperimentConfig, seed_index: int):
    key = (cfg.seed, seed_index, cfg.tasks, cfg.trace_path, cfg.trace_date,
           cfg.n_tasks, cfg.max_tasks)
    if key in _task_cache:
        return _task_cache[key]
    cm = cfg.cost_model()
    if cfg.tasks == "synthetic":
        tasks = gen_tasks(
            cfg.n_tasks, cm, seed=(cfg.seed, seed_index, 17),
            bounding_box=BoundingBox(*cfg.bbox), horizon_s=cfg.horizon_s,
            publish_lead_s=cfg.publish_lead_s, wtp_markup_max=cfg.wtp_markup_max)
    else:
        with open(cfg.trace_path, "r", encoding="utf-8") as fh:
            records, _ = parse_porto(fh)
        if cfg.trace_date:
            lo = _date_to_epoch(cfg.trace_date)
            records = [r for r in records if lo <= r.start_timestamp < lo + 86400]
        records = records[:cfg.max_tasks]
        tasks = trips_to_tasks(records, cm, wtp_markup_max=cfg.wtp_markup_max,
                               seed=(cfg.seed, seed_index, 17),
                               publish_lead_s=cfg.publish_lead_s)
    _task_cache[key] = tasks
    return tasks


def _date_to_epoch(date_text: str) -> float:
    from datetime import datetime, timezone
    dt = datetime.strptime(date_text, "%Y-%m-%d").replace(tzinfo=timezone.utc)
    return dt.timestamp()


def build_cell_instance(cfg: ExperimentConfig, n_drivers: int, seed_index: int) -> Instance:
    """Deterministically reconstruct the instance of one sweep cell."""
    tasks = _cell_tasks(cfg, seed_index)
    gen = GeneratorConfig(
        driver_model=cfg.model, n_drivers=n_drivers,
        bounding_box=BoundingBox(*cfg.bbox), shift_length_s=cfg.shift_length_s,
        seed=(cfg.seed, seed_index, n_drivers, 23),
        wtp_markup_max=cfg.wtp_markup_max)
    drivers = gen_drivers(gen, tasks)
    return Instance(tuple(drivers), tuple(tasks), cfg.cost_model(), cfg.objective)


def _sim_seed(cfg: ExperimentConfig, n_drivers: int, seed_index: int, mode: str) -> int:
    return (cfg.seed * 1_000_003 + seed_index * 8191 + n_drivers * 131
            + ALL_MODES.index(mode)) % (2**31)


# --- cell execution ----------------------------------------------------------

def _run_cell(args) -> dict:
    cfg_echo, n_drivers, seed_index = args
    cfg = parse_config(cfg_echo)
    inst = build_cell_instance(cfg, n_drivers, seed_index)
    cell: dict = {"n_drivers": n_drivers, "seed": seed_index,
                  "modes": {}, "errors": {}}

    outcomes = {}
    greedy_trace = None
    t0 = time.perf_counter()
    if MODE_GREEDY in cfg.modes or MODE_LP in cfg.modes:
        out, greedy_trace = greedy_assign(inst)
        outcomes[MODE_GREEDY] = out
        cell.setdefault("timings_ms", {})[MODE_GREEDY] = (
            (time.perf_counter() - t0) * 1000.0)

    for mode, policy in ((MODE_NEAREST, NEAREST), (MODE_MAXMARGIN, MAX_MARGIN)):
        if mode not in cfg.modes:
            continue
        t0 = time.perf_counter()
        out, decisions = simulate(inst, policy,
                                  seed=_sim_seed(cfg, n_drivers, seed_index, mode))
        outcomes[mode] = out
        cell.setdefault("timings_ms", {})[mode] = (time.perf_counter() - t0) * 1000.0
        if cfg.log_events:
            cell["modes"].setdefault(mode, {})["events"] = [
                {"task_id": d.task_id, "assigned": d.assigned_driver_id,
                 "candidates": d.n_candidates, "eta_s": d.eta_s, "delta": d.delta}
                for d in decisions]

    if MODE_EXACT in cfg.modes:
        t0 = time.perf_counter()
        try:
            sol = brute_force_opt(inst, node_budget=cfg.exact_budget)
            outcomes[MODE_EXACT] = build_outcome(inst, sol.schedules)
            cell["exact_nodes_explored"] = sol.nodes_explored
        except BudgetExceededError as exc:
            cell["errors"][MODE_EXACT] = str(exc)
        cell.setdefault("timings_ms", {})[MODE_EXACT] = (
            (time.perf_counter() - t0) * 1000.0)

    bound = None
    if MODE_LP in cfg.modes:
        t0 = time.perf_counter()
        seed_paths = {s.driver_id: s.task_ids
                      for s in outcomes[MODE_GREEDY].schedules if s.task_ids}
        lp = lp_bound(inst, tol=cfg.lp_tol, initial_paths=seed_paths)
        bound = lp.objective
        cell["lp_objective"] = lp.objective
        cell["lp_rounds"] = lp.iterations
        cell.setdefault("timings_ms", {})[MODE_LP] = (
            (time.perf_counter() - t0) * 1000.0)

    for mode in cfg.modes:
        if mode == MODE_LP:
            cell["modes"].setdefault(MODE_LP, {})["metrics"] = None
            continue
        if mode not in outcomes:
            continue
        metrics = compute_metrics(inst, outcomes[mode], bound=bound)
        entry = cell["modes"].setdefault(mode, {})
        entry["metrics"] = metrics.to_jsonable()
        if mode == MODE_GREEDY and greedy_trace is not None and cfg.log_events:
            entry["trace"] = greedy_trace.to_jsonable()
    if MODE_GREEDY in outcomes and greedy_trace is not None:
        cell["greedy_iterations"] = len(greedy_trace.iterations)
    return cell


def _warm_kernels() -> None:
    """Trigger numba compilation once in the parent before forking workers."""
    from .greedy import make_tightness_instance
    inst = make_tightness_instance(1, 0.5)
    greedy_assign(inst)
    lp_bound(inst)


# --- reporting ---------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def csv_rows_from_cells(cells: Sequence[dict], modes: Sequence[str]) -> list[list[str]]:
    rows = []
    for mode in modes:
        for cell in sorted(cells, key=lambda c: (c["n_drivers"], c["seed"])):
            entry = cell["modes"].get(mode)
            if entry is None:
                continue
            if mode == MODE_LP:
                row = [mode, cell["n_drivers"], cell["seed"], None,
                       cell.get("lp_objective"), None, None, None, None, 1.0, 0]
            else:
                m = entry.get("metrics")
                if m is None:
                    continue
                row = [mode, cell["n_drivers"], cell["seed"], m["total_revenue"],
                       m["drivers_profit"], m["service_rate"],
                       m["avg_revenue_per_driver"], m["avg_tasks_per_driver"],
                       m["ir_violations"], m["performance_ratio"], 0]
            rows.append([_fmt(v) for v in row])
    return rows


def render_csv(cells: Sequence[dict], modes: Sequence[str]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in csv_rows_from_cells(cells, modes):
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    config: dict
    cells: list[dict]
    csv_text: str
    wallclock_s: float
    error_count: int

    def to_jsonable(self) -> dict:
        return {"config": self.config, "cells": self.cells,
                "wallclock_s": self.wallclock_s, "error_count": self.error_count}


def run_experiment(config, workers: int | None = None) -> RunReport:
    """Run the configured sweep; returns the report and writes out_dir files.

    Each cell (driver count x seed) builds its instance, runs every requested
    mode and computes metrics; results are assembled in a fixed order so the
    CSV is byte-identical across repeated runs and worker counts.
    """
    cfg = parse_config(config)
    specs = [(cfg.echo(), n, s) for n in cfg.drivers for s in range(cfg.seeds)]
    nworkers = workers if workers is not None else cfg.workers
    if nworkers <= 0:
        nworkers = os.cpu_count() or 1
    nworkers = min(nworkers, len(specs)) or 1

    t0 = time.perf_counter()
    if nworkers == 1 or len(specs) == 1:
        cells = [_run_cell(spec) for spec in specs]
    else:
        _warm_kernels()
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(nworkers) as pool:
            cells = pool.map(_run_cell, specs)
    wall = time.perf_counter() - t0

    cells.sort(key=lambda c: (c["n_drivers"], c["seed"]))
    errors = sum(len(c["errors"]) for c in cells)
    report = RunReport(
        config=cfg.echo(),
        cells=cells,
        csv_text=render_csv(cells, cfg.modes),
        wallclock_s=wall,
        error_count=errors,
    )
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report.to_jsonable(), fh, indent=2, sort_keys=True)
        with open(out / "report.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.csv_text)
    return report
