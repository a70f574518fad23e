"""Offline assignment: iteratively commit the globally best driver path.

Each iteration picks, over all remaining drivers, the maximum-profit path in
the current (masked) graph, commits it, removes its task nodes and the driver,
and repeats while some path has strictly positive profit.  Because removing
tasks can only lower any driver's best profit, the argmax is found lazily with
a priority queue of stale upper bounds; results are identical to recomputing
every driver each round, including the lowest-driver-id tie-break.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .market import Instance, MarketOutcome, Schedule, build_outcome
from .estimation import GeoPoint
from .market import CostModel, Driver, Task
from .taskmap import MarketGraph, best_path, max_tasks_on_path


@dataclass(frozen=True)
class GreedyIteration:
    driver_id: int
    task_ids: tuple[int, ...]
    profit: float
    remaining_tasks: int  # tasks still unassigned after this commit


@dataclass(frozen=True)
class GreedyTrace:
    """Audit log of the greedy loop; profits are positive and non-increasing."""

    iterations: tuple[GreedyIteration, ...]

    def to_jsonable(self) -> list[dict]:
        return [
            {
                "driver_id": it.driver_id,
                "task_ids": list(it.task_ids),
                "profit": it.profit,
                "remaining_tasks": it.remaining_tasks,
            }
            for it in self.iterations
        ]


def greedy_assign(inst: Instance) -> tuple[MarketOutcome, GreedyTrace]:
    """Run the greedy node-disjoint-paths assignment on an instance."""
    graph = MarketGraph.from_instance(inst)
    maps = {d.id: graph.for_driver(d) for d in inst.drivers}
    removed = np.zeros(graph.n_tasks, dtype=bool)

    # heap entries are upper bounds; an entry is exact iff its version is
    # current, because masks only grow and best profits only shrink
    version = 0
    heap: list[tuple[float, int, int, tuple[int, ...]]] = []
    for d in sorted(inst.drivers, key=lambda d: d.id):
        path, profit = best_path(maps[d.id], removed=removed)
        if profit > 0.0:
            heapq.heappush(heap, (-profit, d.id, version, path))

    chosen: dict[int, tuple[tuple[int, ...], float]] = {}
    iterations: list[GreedyIteration] = []
    remaining = graph.n_tasks
    while heap:
        neg_profit, driver_id, ver, path = heapq.heappop(heap)
        if ver != version:
            path, profit = best_path(maps[driver_id], removed=removed)
            if profit > 0.0:
                heapq.heappush(heap, (-profit, driver_id, version, path))
            continue
        profit = -neg_profit
        chosen[driver_id] = (path, profit)
        if path:
            removed[graph.positions_of(path)] = True
        version += 1
        remaining -= len(path)
        iterations.append(GreedyIteration(driver_id, path, profit, remaining))

    schedules = []
    for d in inst.drivers:
        path, profit = chosen.get(d.id, ((), 0.0))
        schedules.append(Schedule(d.id, path, profit))
    return build_outcome(inst, schedules), GreedyTrace(tuple(iterations))


def instance_diameter(inst: Instance) -> int:
    """Largest number of task nodes on any driver's source->destination path."""
    graph = MarketGraph.from_instance(inst)
    best = 0
    for d in inst.drivers:
        best = max(best, max_tasks_on_path(graph.for_driver(d)))
    return best


def make_tightness_instance(D: int, epsilon: float) -> Instance:
    """Worst-case gadget for the greedy approximation ratio.

    D + 1 drivers and D + 1 tasks, all at one location with zero-length legs.
    Driver 1 can chain tasks 1..D, worth 1/D each to her; every other driver
    j can serve only task j-1, worth 1 - epsilon; an extra task overlaps the
    whole chain in time so driver 1 can serve it alone but never append it.
    Greedy commits driver 1's chain (profit 1) and strands everyone else,
    while the optimum assigns one task per driver for (D+1)(1-epsilon).
    """
    if D < 1 or int(D) != D:
        raise ValueError(f"D must be a positive integer, got {D}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    D = int(D)

    spot = GeoPoint(41.15, -8.61)
    price = 1.0 - epsilon
    tasks = []
    for i in range(1, D + 1):
        start = 1000.0 * i
        tasks.append(Task(
            id=i, publish_time=start - 100.0, source=spot, dest=spot,
            start_deadline=start, end_deadline=start + 500.0,
            price=price, wtp=price, trip_distance_km=0.0))
    extra_id = D + 1
    tasks.append(Task(
        id=extra_id, publish_time=400.0, source=spot, dest=spot,
        start_deadline=500.0, end_deadline=1000.0 * (D + 1) + 500.0,
        price=price, wtp=price, trip_distance_km=0.0))

    drivers = [Driver(1, spot, spot, 0.0, 1000.0 * (D + 2))]
    for j in range(2, D + 2):
        window = tasks[j - 2]
        drivers.append(Driver(
            j, spot, spot, window.start_deadline, window.end_deadline))

    overrides = {(1, i): 1.0 / D for i in range(1, D + 1)}
    return Instance(
        drivers=tuple(drivers),
        tasks=tuple(tasks),
        cost_model=CostModel(),
        objective="driver-profit",
        value_overrides=overrides,
    )
