"""Event-driven dispatch simulator with two online policies.

Tasks are replayed in publish-time order.  A decision is made instantly at
publish time against the then-current driver states; an assigned driver heads
straight to the task source, service starts on arrival, and she becomes
available again at the realized finish time (which may be earlier than the
task's end deadline).

Policies:
  nearest     pick the candidate with the earliest estimated arrival at the
              task source, random tie-break (seeded per task)
  max-margin  pick the candidate with the largest marginal value and reject
              the task if no candidate has a positive one

Scoring is vectorized over drivers (the same haversine code path as the
scalar estimation helpers, so results agree bit for bit).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .estimation import CostModel, GeoPoint, haversine_arrays, leg_estimate
from .market import (Driver, Instance, MarketOutcome, Schedule, Task,
                     build_outcome, path_profit, task_leg)
from .taskmap import can_serve

NEAREST = "nearest"
MAX_MARGIN = "max-margin"
POLICIES = (NEAREST, MAX_MARGIN)


@dataclass
class DriverState:
    """Mutable per-driver simulation state; last_task_id is 0 before any task."""

    driver_id: int
    available_at: float
    location: GeoPoint
    last_task_id: int = 0
    cumulative_profit: float = 0.0
    tasks_served: int = 0


@dataclass(frozen=True)
class DispatchDecision:
    """One event-log line: what happened to a task at its publish time."""

    task_id: int
    assigned_driver_id: int | None
    n_candidates: int
    eta_s: float | None = None   # publish-to-pickup seconds (nearest score)
    delta: float | None = None   # marginal value of the winning driver

    @property
    def rejected(self) -> bool:
        return self.assigned_driver_id is None


def _arrival_time(state: DriverState, task: Task, cm: CostModel) -> float:
    free_at = max(task.publish_time, state.available_at)
    return free_at + leg_estimate(state.location, task.source, cm).time_s


def _state_arrays(states: Sequence[DriverState]):
    lat = np.array([s.location.lat for s in states])
    lon = np.array([s.location.lon for s in states])
    avail = np.array([s.available_at for s in states])
    return lat, lon, avail


def _arrival_vector(task: Task, states: Sequence[DriverState], cm: CostModel):
    lat, lon, avail = _state_arrays(states)
    travel = (haversine_arrays(lat, lon, task.source.lat, task.source.lon)
              * cm.detour_factor / cm.speed_kmh * 3600.0)
    return np.maximum(task.publish_time, avail) + travel


def candidate_set(
    task: Task,
    states: Sequence[DriverState],
    drivers: Mapping[int, Driver],
    cm: CostModel,
) -> set[int]:
    """Drivers able to serve `task` published now: they reach its source by
    the start deadline, the task fits its own window, and afterwards they can
    still reach their own destination by their end time."""
    if not states:
        return set()
    sample = drivers[states[0].driver_id]
    if not can_serve(sample, task, cm):  # driver-independent under one CostModel
        return set()
    arrival = _arrival_vector(task, states, cm)
    dest_lat = np.array([drivers[s.driver_id].dest.lat for s in states])
    dest_lon = np.array([drivers[s.driver_id].dest.lon for s in states])
    end_time = np.array([drivers[s.driver_id].end_time for s in states])
    home = (haversine_arrays(task.dest.lat, task.dest.lon, dest_lat, dest_lon)
            * cm.detour_factor / cm.speed_kmh * 3600.0)
    ok = (arrival <= task.start_deadline) & (home <= end_time - task.end_deadline)
    return {states[i].driver_id for i in np.flatnonzero(ok)}


def pick_nearest(
    task: Task,
    candidates: Iterable[int],
    states: Sequence[DriverState],
    cm: CostModel,
    rng_seed: int,
) -> int | None:
    """Earliest estimated arrival at the task source; seeded uniform tie-break."""
    candidates = set(candidates)
    if not candidates:
        return None
    pool = sorted(candidates)
    by_id = {st.driver_id: st for st in states}
    sub = [by_id[i] for i in pool]
    arrival = _arrival_vector(task, sub, cm)
    best = arrival.min()
    tied = [pool[i] for i in np.flatnonzero(arrival == best)]
    if len(tied) == 1:
        return tied[0]
    rng = np.random.default_rng([rng_seed % 2**32, task.id % 2**32])
    return tied[int(rng.integers(len(tied)))]


def marginal_value(
    state: DriverState,
    task: Task,
    driver: Driver,
    cm: CostModel,
    value: float | None = None,
) -> float:
    """Profit added to the driver by taking `task` from her current position:
    the task value minus the extra travel cost, crediting back the leg home
    she no longer drives."""
    if value is None:
        value = task.price
    to_pickup = leg_estimate(state.location, task.source, cm).cost
    in_task = task_leg(task, cm).cost
    new_home = leg_estimate(task.dest, driver.dest, cm).cost
    old_home = leg_estimate(state.location, driver.dest, cm).cost
    return value - (new_home + in_task + to_pickup - old_home)


def pick_max_margin(
    task: Task,
    candidates: Iterable[int],
    states: Sequence[DriverState],
    drivers: Mapping[int, Driver],
    cm: CostModel,
    value_of: Callable[[int], float] | None = None,
) -> int | None:
    """Largest marginal value wins (lower driver id on ties); rejects the
    task when no candidate gains strictly positive value."""
    candidates = set(candidates)
    if not candidates:
        return None
    by_id = {st.driver_id: st for st in states}
    best_id = None
    best_delta = 0.0
    for i in sorted(candidates):
        v = value_of(i) if value_of is not None else None
        delta = marginal_value(by_id[i], task, drivers[i], cm, value=v)
        if delta > best_delta:
            best_id, best_delta = i, delta
    return best_id


def simulate(
    inst: Instance, policy: str, seed: int = 0
) -> tuple[MarketOutcome, list[DispatchDecision]]:
    """Replay the instance's tasks through one dispatch policy.

    Returns the resulting MarketOutcome plus the per-task event log.  Runs
    are fully deterministic for a given (instance, policy, seed).
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    cm = inst.cost_model
    drivers = {d.id: d for d in inst.drivers}
    states = [DriverState(d.id, d.start_time, d.source) for d in inst.drivers]
    by_id = {st.driver_id: st for st in states}
    assigned: dict[int, list[Task]] = {d.id: [] for d in inst.drivers}
    decisions: list[DispatchDecision] = []

    for task in sorted(inst.tasks, key=lambda t: (t.publish_time, t.id)):
        cands = candidate_set(task, states, drivers, cm)
        if policy == NEAREST:
            winner = pick_nearest(task, cands, states, cm, seed)
        else:
            winner = pick_max_margin(
                task, cands, states, drivers, cm,
                value_of=lambda did: inst.value_of(did, task))
        if winner is None:
            decisions.append(DispatchDecision(task.id, None, len(cands)))
            continue

        st = by_id[winner]
        drv = drivers[winner]
        delta = marginal_value(st, task, drv, cm, value=inst.value_of(winner, task))
        arrival = _arrival_time(st, task, cm)
        finish = arrival + task_leg(task, cm).time_s
        decisions.append(DispatchDecision(
            task.id, winner, len(cands),
            eta_s=arrival - task.publish_time, delta=delta))

        st.available_at = finish
        st.location = task.dest
        st.last_task_id = task.id
        st.cumulative_profit += delta
        st.tasks_served += 1
        assigned[winner].append(task)

    schedules = []
    for d in inst.drivers:
        tasks = assigned[d.id]
        profit = path_profit(d, tasks, cm, inst.objective, inst.value_overrides)
        schedules.append(Schedule(d.id, tuple(t.id for t in tasks), profit))
    return build_outcome(inst, schedules), decisions
