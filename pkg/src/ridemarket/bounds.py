"""Optimality references: exact search for tiny instances and the LP bound.

brute_force_opt maximizes the assignment objective exactly by depth-first
search over per-driver path choices, pruned with an optimistic bound (each
remaining driver's unconstrained best path).  It is meant for desk-size
instances and refuses to silently approximate: exceeding the node budget
raises, carrying the incumbent clearly flagged as non-optimal.

lp_bound computes the fractional relaxation optimum of the path formulation
by column generation: a restricted master LP over generated paths (plus one
empty path per driver) is solved by the in-repo simplex kernel, and pricing
reuses the task-map dynamic program with the task duals as node penalties.
The returned objective upper-bounds every integral assignment's profit.

arc_lp_bound solves the arc-flow relaxation directly with the same kernel;
it exists as a cross-check oracle for tiny instances only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .market import Instance, Schedule
from .simplex import DenseSimplex, simplex_solve
from .taskmap import MarketGraph, TaskMap, best_path, path_value


@dataclass(frozen=True)
class ExactSolution:
    """Best integral assignment found by exhaustive (pruned) search."""

    objective: float
    schedules: tuple[Schedule, ...]
    nodes_explored: int


@dataclass(frozen=True)
class LpSolution:
    """Optimum of the relaxed path LP.

    column_weights maps (driver_id, task_id_path) to its fractional weight;
    task_duals / driver_duals are the per-task and per-driver shadow prices
    used by the pricing step (task dual is 0.0 for any task no generated
    column covers).
    """

    objective: float
    column_weights: dict[tuple[int, tuple[int, ...]], float]
    task_duals: dict[int, float]
    driver_duals: dict[int, float]
    iterations: int


class BudgetExceededError(RuntimeError):
    """Search budget exhausted; .incumbent holds the best NON-OPTIMAL solution."""

    def __init__(self, message: str, incumbent: ExactSolution):
        super().__init__(message)
        self.incumbent = incumbent


class LpNotConvergedError(RuntimeError):
    """Column generation hit its round cap; .best_objective is a lower bound
    on the true relaxation optimum, not a certified bound."""

    def __init__(self, message: str, best_objective: float):
        super().__init__(message)
        self.best_objective = best_objective


# --- exact search -----------------------------------------------------------

def _enumerate_paths(tm: TaskMap, budget: list) -> list[tuple[tuple[int, ...], float]]:
    """All source->destination paths of one driver with their profits."""
    k = len(tm.task_ids)
    succs: list[list[tuple[int, float]]] = [[] for _ in range(k)]
    for v in range(k):
        for e in range(tm.indptr[v], tm.indptr[v + 1]):
            succs[int(tm.preds[e])].append((v, float(tm.pred_cost[e])))
    out: list[tuple[tuple[int, ...], float]] = []

    def grow(v: int, acc: float, seq: list[int]) -> None:
        budget[0] -= 1
        if budget[0] < 0:
            raise RecursionError("path enumeration budget exhausted")
        out.append((tuple(seq), acc - float(tm.exit_cost[v]) + tm.baseline))
        for w, cost in succs[v]:
            seq.append(int(tm.task_ids[w]))
            grow(w, acc - cost + float(tm.values[w]), seq)
            seq.pop()

    for v in range(k):
        if tm.entry_ok[v]:
            grow(v, float(tm.values[v]) - float(tm.entry_cost[v]),
                 [int(tm.task_ids[v])])
    return out


def brute_force_opt(
    inst: Instance, node_budget: int = 500_000, prune: bool = True
) -> ExactSolution:
    """Exact maximum over all feasible node-disjoint path systems.

    prune=False disables the optimistic bound (pure exhaustion); it exists so
    tests can check that pruning never changes the optimum.
    """
    graph = MarketGraph.from_instance(inst)
    drivers = sorted(inst.drivers, key=lambda d: d.id)
    budget = [node_budget]

    options: dict[int, list[tuple[tuple[int, ...], float, frozenset[int]]]] = {}
    try:
        for d in drivers:
            paths = [(p, v) for p, v in _enumerate_paths(graph.for_driver(d), budget)
                     if v > 0.0]
            paths.sort(key=lambda pv: (-pv[1], len(pv[0]), pv[0]))
            options[d.id] = [(p, v, frozenset(p)) for p, v in paths]
    except RecursionError:
        raise BudgetExceededError(
            f"node budget {node_budget} exhausted during path enumeration; "
            f"no incumbent is optimal",
            incumbent=ExactSolution(0.0, tuple(
                Schedule(d.id, (), 0.0) for d in inst.drivers), node_budget),
        ) from None

    best_single = [max((v for _, v, _ in options[d.id]), default=0.0) for d in drivers]
    suffix = np.concatenate([np.cumsum(best_single[::-1])[::-1], [0.0]])

    best = {"objective": 0.0, "choice": {}}
    state = {"nodes": node_budget - budget[0]}

    def incumbent_solution() -> ExactSolution:
        schedules = tuple(
            Schedule(d.id, *best["choice"].get(d.id, ((), 0.0))) for d in inst.drivers)
        return ExactSolution(best["objective"], schedules, state["nodes"])

    def search(i: int, used: frozenset[int], acc: float,
               choice: dict[int, tuple[tuple[int, ...], float]]) -> None:
        state["nodes"] += 1
        if state["nodes"] > node_budget:
            raise BudgetExceededError(
                f"node budget {node_budget} exhausted; incumbent objective "
                f"{best['objective']:.6f} is NOT certified optimal",
                incumbent=incumbent_solution())
        if i == len(drivers):
            if acc > best["objective"]:
                best["objective"] = acc
                best["choice"] = dict(choice)
            return
        if prune and acc + suffix[i] <= best["objective"]:
            return
        d = drivers[i]
        for path, value, members in options[d.id]:
            if used & members:
                continue
            choice[d.id] = (path, value)
            search(i + 1, used | members, acc + value, choice)
            del choice[d.id]
        search(i + 1, used, acc, choice)

    search(0, frozenset(), 0.0, {})
    return incumbent_solution()


# --- LP relaxation via column generation -------------------------------------

def lp_bound(
    inst: Instance,
    tol: float = 1e-7,
    max_rounds: int = 1000,
    initial_paths: Mapping[int, Sequence[int]] | None = None,
) -> LpSolution:
    """Upper bound Z_f* on the assignment objective via the path LP.

    Pricing adds a driver's column whenever its penalty-adjusted best path
    beats the driver dual by more than tol; the loop ends on a full round
    with no improving column, which doubles as the termination certificate.
    The master is seeded with the greedy solution's paths (or with
    initial_paths if given), so the returned bound never falls below the
    greedy objective.
    """
    drivers = sorted(inst.drivers, key=lambda d: d.id)
    if not drivers:
        return LpSolution(0.0, {}, {t.id: 0.0 for t in inst.tasks}, {}, 0)

    graph = MarketGraph.from_instance(inst)
    maps = {d.id: graph.for_driver(d) for d in drivers}

    if initial_paths is None:
        from .greedy import greedy_assign
        out, _ = greedy_assign(inst)
        initial_paths = {s.driver_id: s.task_ids for s in out.schedules if s.task_ids}

    driver_row = {d.id: i for i, d in enumerate(drivers)}
    task_row: dict[int, int] = {}
    col_keys: list[tuple[int, tuple[int, ...]]] = []
    col_set: set[tuple[int, tuple[int, ...]]] = set()

    seed_cols: list[tuple[int, tuple[int, ...]]] = [(d.id, ()) for d in drivers]
    for d in drivers:
        path = tuple(initial_paths.get(d.id, ()))
        if path and (d.id, path) not in col_set:
            seed_cols.append((d.id, path))
            col_set.add((d.id, path))
    for tid in sorted({t for _, p in seed_cols for t in p}):
        task_row[tid] = len(drivers) + len(task_row)

    rows = len(drivers) + len(task_row)
    A = np.zeros((rows, len(seed_cols)))
    c = np.zeros(len(seed_cols))
    for j, (did, path) in enumerate(seed_cols):
        A[driver_row[did], j] = 1.0
        for tid in path:
            A[task_row[tid], j] = 1.0
        c[j] = path_value(maps[did], path)
        col_keys.append((did, path))

    master = DenseSimplex(A, np.ones(rows), c)
    master.solve()

    def price_at(y: np.ndarray) -> list[tuple[int, tuple[int, ...]]]:
        lam = np.zeros(graph.n_tasks)
        for tid, r in task_row.items():
            lam[graph.task_index[tid]] = y[r]
        found = []
        for d in drivers:
            path, val = best_path(maps[d.id], node_penalty=lam)
            if path and val > y[driver_row[d.id]] + tol and (d.id, path) not in col_set:
                found.append((d.id, path))
        return found

    rounds = 0
    y_prev: np.ndarray | None = None
    while True:
        rounds += 1
        if rounds > max_rounds:
            raise LpNotConvergedError(
                f"column generation did not converge within {max_rounds} rounds; "
                f"best restricted-master objective {master.objective:.6f}",
                best_objective=master.objective)
        y = master.duals

        # Wentges-style dual smoothing damps the oscillation a degenerate
        # master feeds into pricing; a miss at the smoothed point falls back
        # to the true duals, so convergence is still certified at y itself.
        new_cols: list[tuple[int, tuple[int, ...]]] = []
        if y_prev is not None:
            prev = np.zeros_like(y)
            prev[:len(y_prev)] = y_prev
            new_cols = price_at(0.5 * prev + 0.5 * y)
        if not new_cols:
            new_cols = price_at(y)
        y_prev = y
        if not new_cols:
            break

        fresh_tasks = sorted({t for _, p in new_cols for t in p} - task_row.keys())
        if fresh_tasks:
            for tid in fresh_tasks:
                task_row[tid] = rows
                rows += 1
            master.add_zero_rows(np.ones(len(fresh_tasks)))

        A_new = np.zeros((rows, len(new_cols)))
        c_new = np.zeros(len(new_cols))
        for j, (did, path) in enumerate(new_cols):
            A_new[driver_row[did], j] = 1.0
            for tid in path:
                A_new[task_row[tid], j] = 1.0
            c_new[j] = path_value(maps[did], path)
            col_keys.append((did, path))
            col_set.add((did, path))
        master.add_columns(A_new, c_new)
        master.solve()

        # keep the tableau narrow: shed clearly unattractive nonbasic columns
        if master.n_struct > max(2 * rows, 800):
            basic = {int(b) for b in master.basis}
            drop = [j for j in range(master.n_struct)
                    if j not in basic and col_keys[j][1]
                    and master.red[j] < -1e-5]
            if drop:
                master.drop_struct_columns(np.array(drop))
                dropped = set(drop)
                col_keys = [k for j, k in enumerate(col_keys) if j not in dropped]
                col_set = {k for k in col_keys if k[1]}

    x = master.primal
    weights = {col_keys[j]: float(x[j]) for j in range(len(col_keys))
               if x[j] > 1e-12}
    y = master.duals
    task_duals = {t.id: 0.0 for t in inst.tasks}
    for tid, r in task_row.items():
        task_duals[tid] = float(y[r])
    driver_duals = {d.id: float(y[driver_row[d.id]]) for d in drivers}
    return LpSolution(master.objective, weights, task_duals, driver_duals, rounds)


def lp_pricing_gap(inst: Instance, sol: LpSolution) -> float:
    """Re-price every driver at the solution's duals; at a certified optimum
    no driver's best adjusted path beats her dual (gap <= tol)."""
    graph = MarketGraph.from_instance(inst)
    lam = np.zeros(graph.n_tasks)
    for tid, v in sol.task_duals.items():
        if tid in graph.task_index:
            lam[graph.task_index[tid]] = v
    gap = 0.0
    for d in inst.drivers:
        _, val = best_path(graph.for_driver(d), node_penalty=lam)
        gap = max(gap, val - sol.driver_duals.get(d.id, 0.0))
    return gap


# --- arc-formulation oracle (tiny instances) ---------------------------------

def arc_lp_bound(inst: Instance) -> float:
    """Relaxation optimum from the arc-flow formulation, solved cold by the
    same simplex kernel.  Cross-check oracle; quadratic in the task count."""
    graph = MarketGraph.from_instance(inst)
    cols: list[dict[int, float]] = []   # row index -> coefficient
    obj: list[float] = []
    rows_b: list[float] = []

    def new_row(b: float) -> int:
        rows_b.append(b)
        return len(rows_b) - 1

    task_cap_row = {t.id: new_row(1.0) for t in inst.tasks}

    for d in sorted(inst.drivers, key=lambda d: d.id):
        tm = graph.for_driver(d)
        k = len(tm.task_ids)
        src_row = new_row(1.0)          # sum of entry flows <= 1
        bal_le = new_row(0.0)           # exits - entries <= 0 and >= 0
        bal_ge = new_row(0.0)
        in_le = [new_row(0.0) for _ in range(k)]
        in_ge = [new_row(0.0) for _ in range(k)]
        out_le = [new_row(0.0) for _ in range(k)]
        out_ge = [new_row(0.0) for _ in range(k)]
        ir_row = new_row(0.0)           # -(driver profit) <= 0

        for v in range(k):              # x variables
            coef = {in_le[v]: -1.0, in_ge[v]: 1.0, out_le[v]: -1.0, out_ge[v]: 1.0,
                    task_cap_row[int(tm.task_ids[v])]: 1.0}
            gain = float(tm.values[v])
            coef[ir_row] = -gain
            cols.append(coef)
            obj.append(gain)

        for v in range(k):              # entry arcs
            if not tm.entry_ok[v]:
                continue
            cost = float(tm.entry_cost[v]) - tm.baseline
            cols.append({src_row: 1.0, bal_le: -1.0, bal_ge: 1.0,
                         in_le[v]: 1.0, in_ge[v]: -1.0, ir_row: cost})
            obj.append(-cost)

        for v in range(k):              # pair arcs
            for e in range(tm.indptr[v], tm.indptr[v + 1]):
                u = int(tm.preds[e])
                cost = float(tm.pred_cost[e])
                cols.append({out_le[u]: 1.0, out_ge[u]: -1.0,
                             in_le[v]: 1.0, in_ge[v]: -1.0, ir_row: cost})
                obj.append(-cost)

        for v in range(k):              # exit arcs
            cost = float(tm.exit_cost[v])
            cols.append({out_le[v]: 1.0, out_ge[v]: -1.0,
                         bal_le: 1.0, bal_ge: -1.0, ir_row: cost})
            obj.append(-cost)

    if not cols:
        return 0.0
    A = np.zeros((len(rows_b), len(cols)))
    for j, coef in enumerate(cols):
        for r, v in coef.items():
            A[r, j] = v
    optimum, _, _ = simplex_solve(A, np.array(rows_b), np.array(obj))
    return optimum
