"""Per-driver task-map DAGs: feasibility arcs, topological order, best paths.

Nodes are task ids plus two special labels: 0 for the driver's source and -1
for her destination.  An arc means the driver has enough slack to serve the
head right after the tail.  Arc feasibility between two tasks does not depend
on the driver (speed and detour are global), so the expensive pairwise work is
computed once per task set in MarketGraph and shared across drivers.

best_path runs a single-pass dynamic program over the topological order.
Ties on profit prefer fewer tasks, then the lexicographically smaller task-id
sequence, so runs are reproducible across platforms and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .estimation import CostModel, haversine_arrays, leg_estimate
from .market import DRIVER_PROFIT, Driver, Instance, Task, task_leg

SOURCE_NODE = 0
DEST_NODE = -1


# --- scalar feasibility predicates ----------------------------------------

def can_serve(driver: Driver, task: Task, cm: CostModel) -> bool:
    """Whether the in-task travel time fits the task's own time window."""
    return task_leg(task, cm).time_s <= task.end_deadline - task.start_deadline


def source_arc(driver: Driver, task: Task, cm: CostModel) -> bool:
    """Whether the driver can take `task` first: reach its source from her own
    source in time, and still reach her destination after its end deadline."""
    if not can_serve(driver, task, cm):
        return False
    pickup = leg_estimate(driver.source, task.source, cm).time_s
    if pickup > task.start_deadline - driver.start_time:
        return False
    home = leg_estimate(task.dest, driver.dest, cm).time_s
    return home <= driver.end_time - task.end_deadline


def pair_arc(driver: Driver, m: Task, m2: Task, cm: CostModel) -> bool:
    """Whether the driver can serve m2 right after m (worst case: m ends at
    its end deadline), and still make it home after m2."""
    if m.id == m2.id:
        raise ValueError("pair_arc needs two distinct tasks")
    if not (can_serve(driver, m, cm) and can_serve(driver, m2, cm)):
        return False
    home = leg_estimate(m2.dest, driver.dest, cm).time_s
    if home > driver.end_time - m2.end_deadline:
        return False
    connect = leg_estimate(m.dest, m2.source, cm).time_s
    return connect <= m2.start_deadline - m.end_deadline


# --- numba kernels ---------------------------------------------------------

_NEG = -1.0e300


@njit(cache=True)
def _reach_kernel(indptr, preds, valid, src_ok):
    n = valid.shape[0]
    reach = np.zeros(n, np.bool_)
    for v in range(n):
        if not valid[v]:
            continue
        if src_ok[v]:
            reach[v] = True
            continue
        for e in range(indptr[v], indptr[v + 1]):
            if reach[preds[e]]:
                reach[v] = True
                break
    return reach


@njit(cache=True)
def _lex_smaller(parent, task_ids, a, b, buf_a, buf_b):
    # True iff the source->a prefix has the lexicographically smaller
    # task-id sequence than the source->b prefix.
    na = 0
    v = a
    while v >= 0:
        buf_a[na] = v
        na += 1
        v = parent[v]
    nb = 0
    v = b
    while v >= 0:
        buf_b[nb] = v
        nb += 1
        v = parent[v]
    i = na - 1
    j = nb - 1
    while i >= 0 and j >= 0:
        ta = task_ids[buf_a[i]]
        tb = task_ids[buf_b[j]]
        if ta != tb:
            return ta < tb
        i -= 1
        j -= 1
    return na < nb


@njit(cache=True)
def _dp_kernel(indptr, preds, pred_cost, entry_ok, entry_cost, exit_cost,
               baseline, node_val, penalty, blocked, task_ids, buf_a, buf_b):
    n = node_val.shape[0]
    dp = np.full(n, _NEG)
    dplen = np.zeros(n, np.int64)
    parent = np.full(n, -2, np.int64)  # -2 unreached, -1 entered from source

    for v in range(n):
        if blocked[v]:
            continue
        gain = node_val[v] - penalty[v]
        best = _NEG
        blen = 0
        bpar = -2
        if entry_ok[v]:
            best = gain - entry_cost[v]
            blen = 1
            bpar = -1
        for e in range(indptr[v], indptr[v + 1]):
            u = preds[e]
            if parent[u] == -2:
                continue
            cand = dp[u] - pred_cost[e] + gain
            clen = dplen[u] + 1
            if cand > best:
                best = cand
                blen = clen
                bpar = u
            elif cand == best and bpar != -2:
                if clen < blen:
                    blen = clen
                    bpar = u
                elif clen == blen and bpar != -1:
                    if _lex_smaller(parent, task_ids, u, bpar, buf_a, buf_b):
                        bpar = u
        if bpar != -2:
            dp[v] = best
            dplen[v] = blen
            parent[v] = bpar

    # pick the exit node; the empty (source -> destination) path scores 0
    best_total = 0.0
    best_node = -1
    best_len = 0
    for v in range(n):
        if parent[v] == -2:
            continue
        tot = dp[v] - exit_cost[v] + baseline
        if tot > best_total:
            best_total = tot
            best_node = v
            best_len = dplen[v]
        elif tot == best_total and best_node >= 0:
            if dplen[v] < best_len:
                best_node = v
                best_len = dplen[v]
            elif dplen[v] == best_len and _lex_smaller(
                    parent, task_ids, v, best_node, buf_a, buf_b):
                best_node = v
    return best_total, best_node, parent


# --- shared pairwise structure ----------------------------------------------

class MarketGraph:
    """Pairwise feasibility and costs for one task set under one cost model.

    Tasks are held in topological position order (start deadline, then id).
    Arc feasibility between tasks is driver-independent, so one MarketGraph
    serves every driver of an instance; `for_driver` adds the driver-specific
    entry/exit legs and prunes to her reachable subgraph.
    """

    def __init__(self, tasks: Sequence[Task], cm: CostModel,
                 objective: str = DRIVER_PROFIT,
                 value_overrides: Mapping[tuple[int, int], float] | None = None):
        self.cm = cm
        self.objective = objective
        order = sorted(tasks, key=lambda t: (t.start_deadline, t.id))
        self.tasks = tuple(order)
        m = len(order)
        self.n_tasks = m
        self.task_ids = np.array([t.id for t in order], dtype=np.int64)
        self.task_index = {t.id: i for i, t in enumerate(order)}
        self.t_minus = np.array([t.start_deadline for t in order], dtype=np.float64)
        self.t_plus = np.array([t.end_deadline for t in order], dtype=np.float64)
        self.src_lat = np.array([t.source.lat for t in order], dtype=np.float64)
        self.src_lon = np.array([t.source.lon for t in order], dtype=np.float64)
        self.dst_lat = np.array([t.dest.lat for t in order], dtype=np.float64)
        self.dst_lon = np.array([t.dest.lon for t in order], dtype=np.float64)

        # in-task (hatted) legs, honoring recorded trip distances
        est = haversine_arrays(self.src_lat, self.src_lon,
                               self.dst_lat, self.dst_lon) * cm.detour_factor
        trip = np.array([t.trip_distance_km if t.trip_distance_km is not None
                         else np.nan for t in order], dtype=np.float64)
        self.hat_dist = np.where(np.isnan(trip), est, trip)
        self.hat_time = self.hat_dist / cm.speed_kmh * 3600.0
        self.hat_cost = self.hat_dist * cm.fuel_unit_price
        self.h_hat = self.hat_time <= (self.t_plus - self.t_minus)

        from .market import SOCIAL_WELFARE
        if objective == SOCIAL_WELFARE:
            base = np.array([t.wtp for t in order], dtype=np.float64)
        else:
            base = np.array([t.price for t in order], dtype=np.float64)
        self.base_value = base
        self.node_val = base - self.hat_cost

        self._overrides: dict[int, list[tuple[int, float]]] = {}
        for (drv, tid), val in (value_overrides or {}).items():
            if tid in self.task_index:
                self._overrides.setdefault(drv, []).append((self.task_index[tid], val))

        # pairwise arcs (Eq-3 time component; the head's reach-home condition
        # is driver-specific and applied in for_driver)
        if m:
            pd = haversine_arrays(self.dst_lat[:, None], self.dst_lon[:, None],
                                  self.src_lat[None, :], self.src_lon[None, :])
            pd = pd * cm.detour_factor
            pt = pd / cm.speed_kmh * 3600.0
            self.pair_cost = pd * cm.fuel_unit_price
            P = (pt <= self.t_minus[None, :] - self.t_plus[:, None])
            P &= self.h_hat[:, None] & self.h_hat[None, :]
            np.fill_diagonal(P, False)
            self.pair_ok = P
            # CSR grouped by head node, predecessors ascending
            heads, tails = np.nonzero(P.T)
            self.pred = tails.astype(np.int64)
            self.pred_cost_arr = self.pair_cost[tails, heads]
            counts = np.bincount(heads, minlength=m)
            self.indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
            self.arc_heads = heads.astype(np.int64)
        else:
            self.pair_cost = np.zeros((0, 0))
            self.pair_ok = np.zeros((0, 0), dtype=bool)
            self.pred = np.zeros(0, dtype=np.int64)
            self.pred_cost_arr = np.zeros(0)
            self.indptr = np.zeros(1, dtype=np.int64)
            self.arc_heads = np.zeros(0, dtype=np.int64)
        self.pair_checks = m * m

    @classmethod
    def from_instance(cls, inst: Instance) -> "MarketGraph":
        return cls(inst.tasks, inst.cost_model, inst.objective, inst.value_overrides)

    def positions_of(self, task_ids: Iterable[int]) -> np.ndarray:
        return np.array([self.task_index[t] for t in task_ids], dtype=np.int64)

    def for_driver(self, driver: Driver) -> "TaskMap":
        cm = self.cm
        m = self.n_tasks
        pickup = haversine_arrays(driver.source.lat, driver.source.lon,
                                  self.src_lat, self.src_lon) * cm.detour_factor
        home = haversine_arrays(self.dst_lat, self.dst_lon,
                                driver.dest.lat, driver.dest.lon) * cm.detour_factor
        pickup_time = pickup / cm.speed_kmh * 3600.0
        home_time = home / cm.speed_kmh * 3600.0
        home_ok = home_time <= (driver.end_time - self.t_plus)
        src_ok = self.h_hat & home_ok & (pickup_time <= self.t_minus - driver.start_time)

        valid = self.h_hat & home_ok
        if m:
            reach = _reach_kernel(self.indptr, self.pred, valid, src_ok)
        else:
            reach = np.zeros(0, dtype=bool)
        sub = np.flatnonzero(reach)
        local_of = np.full(m, -1, dtype=np.int64)
        local_of[sub] = np.arange(len(sub))

        if len(self.pred):
            keep = reach[self.arc_heads] & reach[self.pred]
            kept_heads = local_of[self.arc_heads[keep]]
            preds_local = local_of[self.pred[keep]]
            costs_local = self.pred_cost_arr[keep]
            counts = np.bincount(kept_heads, minlength=len(sub))
            indptr_local = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        else:
            preds_local = np.zeros(0, dtype=np.int64)
            costs_local = np.zeros(0)
            indptr_local = np.zeros(len(sub) + 1, dtype=np.int64)

        node_val = self.node_val
        over = self._overrides.get(driver.id)
        if over:
            node_val = node_val.copy()
            for pos, val in over:
                node_val[pos] = val - self.hat_cost[pos]

        baseline = float(leg_estimate(driver.source, driver.dest, cm).cost)
        return TaskMap(
            driver=driver,
            graph=self,
            sub_positions=sub,
            task_ids=self.task_ids[sub],
            deadlines=self.t_minus[sub],
            values=node_val[sub],
            entry_ok=src_ok[sub],
            entry_cost=(pickup * cm.fuel_unit_price)[sub],
            exit_cost=(home * cm.fuel_unit_price)[sub],
            indptr=indptr_local,
            preds=preds_local,
            pred_cost=costs_local,
            baseline=baseline,
            pair_checks=self.pair_checks,
            _full_src_ok=src_ok,
            _full_home_ok=home_ok,
            _full_entry_cost=pickup * cm.fuel_unit_price,
            _full_exit_cost=home * cm.fuel_unit_price,
            _full_values=node_val,
        )


@dataclass
class TaskMap:
    """One driver's task-map DAG.

    The dynamic-programming arrays cover the driver's reachable subgraph in
    topological order; the `arcs` / `node_value` / `arc_cost` views expose the
    full indicator sets of the feasibility rules, including arcs between nodes
    no source-to-destination path can use.
    """

    driver: Driver
    graph: MarketGraph
    sub_positions: np.ndarray  # global position of each local node
    task_ids: np.ndarray       # Task.id of each local node
    deadlines: np.ndarray
    values: np.ndarray         # task value minus in-task cost
    entry_ok: np.ndarray
    entry_cost: np.ndarray
    exit_cost: np.ndarray
    indptr: np.ndarray
    preds: np.ndarray
    pred_cost: np.ndarray
    baseline: float
    pair_checks: int
    _full_src_ok: np.ndarray
    _full_home_ok: np.ndarray
    _full_entry_cost: np.ndarray
    _full_exit_cost: np.ndarray
    _full_values: np.ndarray
    _arc_view: "tuple[set, dict] | None" = field(default=None, repr=False)

    @property
    def driver_id(self) -> int:
        return self.driver.id

    def _arc_sets(self) -> tuple[set, dict]:
        if self._arc_view is None:
            g = self.graph
            arcs: set[tuple[int, int]] = {(SOURCE_NODE, DEST_NODE)}
            cost: dict[tuple[int, int], float] = {
                (SOURCE_NODE, DEST_NODE): self.baseline}
            ids = g.task_ids
            for pos in np.flatnonzero(self._full_src_ok):
                arcs.add((SOURCE_NODE, int(ids[pos])))
                cost[(SOURCE_NODE, int(ids[pos]))] = float(self._full_entry_cost[pos])
            # Eq-3 arcs: pairwise feasible and the head can still reach home
            P = g.pair_ok & self._full_home_ok[None, :]
            has_in = P.any(axis=0)
            for u, v in zip(*np.nonzero(P)):
                arcs.add((int(ids[u]), int(ids[v])))
                cost[(int(ids[u]), int(ids[v]))] = float(g.pair_cost[u, v])
            # implied exit arcs for every node entered from the source or
            # reached as the head of a pair arc
            for pos in np.flatnonzero(self._full_src_ok | has_in):
                arcs.add((int(ids[pos]), DEST_NODE))
                cost[(int(ids[pos]), DEST_NODE)] = float(self._full_exit_cost[pos])
            self._arc_view = (arcs, cost)
        return self._arc_view

    @property
    def arcs(self) -> set[tuple[int, int]]:
        return self._arc_sets()[0]

    @property
    def arc_cost(self) -> dict[tuple[int, int], float]:
        return self._arc_sets()[1]

    @property
    def node_ids(self) -> list[int]:
        task_nodes = sorted({n for arc in self.arcs for n in arc}
                            - {SOURCE_NODE, DEST_NODE})
        return [SOURCE_NODE] + task_nodes + [DEST_NODE]

    @property
    def node_value(self) -> dict[int, float]:
        ids = self.graph.task_ids
        return {int(ids[i]): float(self._full_values[i]) for i in range(len(ids))}


def build_task_map(driver: Driver, tasks: Sequence[Task], cm: CostModel, *,
                   objective: str = DRIVER_PROFIT,
                   value_overrides: Mapping[tuple[int, int], float] | None = None,
                   graph: MarketGraph | None = None) -> TaskMap:
    """Build one driver's task map; pass a shared MarketGraph to amortize the
    pairwise work across drivers."""
    if graph is None:
        graph = MarketGraph(tasks, cm, objective, value_overrides)
    return graph.for_driver(driver)


def topo_order(tm: TaskMap) -> list[int]:
    """Node order: source, tasks by ascending start deadline (id tie-break),
    destination.  Verifies every arc points forward."""
    nodes = [n for n in tm.node_ids if n not in (SOURCE_NODE, DEST_NODE)]
    key = {int(t): (float(tm.graph.t_minus[tm.graph.task_index[t]]), int(t))
           for t in nodes}
    ordered = [SOURCE_NODE] + sorted(nodes, key=key.__getitem__) + [DEST_NODE]
    pos = {n: i for i, n in enumerate(ordered)}
    pos[SOURCE_NODE] = -1
    pos[DEST_NODE] = len(ordered)
    for u, v in tm.arcs:
        if pos[u] >= pos[v]:
            raise RuntimeError(
                f"task map of driver {tm.driver_id} has backward arc {u}->{v}; "
                f"the graph is not a DAG in deadline order")
    return ordered


def best_path(
    tm: TaskMap,
    node_penalty: Mapping[int, float] | np.ndarray | None = None,
    removed: "set[int] | frozenset[int] | np.ndarray | None" = None,
) -> tuple[tuple[int, ...], float]:
    """Maximum-adjusted-profit source->destination path by dynamic programming.

    node_penalty maps task id to a price subtracted from the node value (the
    LP duals during pricing); removed marks task nodes excluded from the
    graph.  Both also accept arrays indexed by global graph position.  The
    empty path is always a candidate with adjusted profit exactly 0.
    """
    k = len(tm.task_ids)
    if k == 0:
        return (), 0.0

    if node_penalty is None:
        pen = np.zeros(k)
    elif isinstance(node_penalty, np.ndarray):
        pen = node_penalty[tm.sub_positions]
    else:
        pen = np.array([node_penalty.get(int(t), 0.0) for t in tm.task_ids])

    if removed is None:
        blocked = np.zeros(k, dtype=bool)
    elif isinstance(removed, np.ndarray):
        blocked = removed[tm.sub_positions]
    else:
        blocked = np.array([int(t) in removed for t in tm.task_ids], dtype=bool)

    buf_a = np.empty(k + 1, np.int64)
    buf_b = np.empty(k + 1, np.int64)
    total, node, parent = _dp_kernel(
        tm.indptr, tm.preds, tm.pred_cost, tm.entry_ok, tm.entry_cost,
        tm.exit_cost, tm.baseline, tm.values, pen, blocked, tm.task_ids,
        buf_a, buf_b)
    if node < 0:
        return (), 0.0
    path: list[int] = []
    v = node
    while v >= 0:
        path.append(int(tm.task_ids[v]))
        v = int(parent[v])
    path.reverse()
    return tuple(path), float(total)


def max_tasks_on_path(tm: TaskMap) -> int:
    """Largest number of task nodes on any source->destination path."""
    k = len(tm.task_ids)
    if k == 0:
        return 0
    ones = np.ones(k)
    zeros = np.zeros(k)
    buf_a = np.empty(k + 1, np.int64)
    buf_b = np.empty(k + 1, np.int64)
    total, _, _ = _dp_kernel(
        tm.indptr, tm.preds, zeros, tm.entry_ok, zeros, zeros, 0.0,
        ones, zeros, np.zeros(k, dtype=bool), tm.task_ids, buf_a, buf_b)
    return int(round(total))


def path_value(
    tm: TaskMap,
    path: Sequence[int],
    node_penalty: Mapping[int, float] | np.ndarray | None = None,
) -> float:
    """Adjusted profit of a given task-id path, accumulated exactly like the
    dynamic program.  Raises KeyError when the path uses a missing arc."""
    if not path:
        return 0.0
    local = {int(t): i for i, t in enumerate(tm.task_ids)}
    if node_penalty is None:
        pen = np.zeros(len(tm.task_ids))
    elif isinstance(node_penalty, np.ndarray):
        pen = node_penalty[tm.sub_positions]
    else:
        pen = np.array([node_penalty.get(int(t), 0.0) for t in tm.task_ids])

    first = local.get(path[0])
    if first is None or not tm.entry_ok[first]:
        raise KeyError(f"no source arc to task {path[0]} for driver {tm.driver_id}")
    total = (tm.values[first] - pen[first]) - tm.entry_cost[first]
    prev = first
    for tid in path[1:]:
        v = local.get(tid)
        if v is None:
            raise KeyError(f"task {tid} is not on driver {tm.driver_id}'s map")
        lo, hi = tm.indptr[v], tm.indptr[v + 1]
        hit = np.flatnonzero(tm.preds[lo:hi] == prev)
        if hit.size == 0:
            raise KeyError(
                f"no arc {int(tm.task_ids[prev])}->{tid} for driver {tm.driver_id}")
        total = total - tm.pred_cost[lo + hit[0]] + (tm.values[v] - pen[v])
        prev = v
    return float(total - tm.exit_cost[prev] + tm.baseline)


def to_dot(tm: TaskMap) -> str:
    """Render the task map as DOT text for debugging."""
    lines = [f'digraph taskmap_driver_{tm.driver_id} {{']
    lines.append('  0 [label="source" shape=box];')
    lines.append('  dest [label="destination" shape=box];')
    values = tm.node_value
    for n in tm.node_ids:
        if n in (SOURCE_NODE, DEST_NODE):
            continue
        lines.append(f'  {n} [label="task {n}\\nvalue {values[n]:.3f}"];')
    for (u, v), c in sorted(tm.arc_cost.items()):
        su = "0" if u == SOURCE_NODE else str(u)
        sv = "dest" if v == DEST_NODE else str(v)
        lines.append(f'  {su} -> {sv} [label="{c:.3f}"];')
    lines.append("}")
    return "\n".join(lines)
