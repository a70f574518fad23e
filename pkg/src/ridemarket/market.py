"""Core market domain model: drivers, tasks, instances, schedules and outcomes.

Time-feasibility of a schedule is checked by walking the stop sequence at
realized times: the driver leaves her source at her shift start, service at a
task begins the moment she arrives at its source, and every pickup must happen
by the task's start deadline.  Offline solutions built on deadline arcs always
pass this walk; online solutions that exploit early finishes do too.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, IO, Iterable, Iterator, Mapping, Sequence

from .estimation import MONEY_TOL, CostModel, GeoPoint, Leg, leg_estimate

if TYPE_CHECKING:
    from .metrics import MarketMetrics

DRIVER_PROFIT = "driver-profit"
SOCIAL_WELFARE = "social-welfare"
OBJECTIVES = (DRIVER_PROFIT, SOCIAL_WELFARE)


@dataclass(frozen=True)
class Driver:
    """A supply-side participant with a source, destination and working window."""

    id: int
    source: GeoPoint
    dest: GeoPoint
    start_time: float
    end_time: float

    def __post_init__(self) -> None:
        if not self.start_time < self.end_time:
            raise ValueError(
                f"driver {self.id}: start_time {self.start_time} must precede "
                f"end_time {self.end_time}"
            )


@dataclass(frozen=True)
class Task:
    """A demand-side order.

    trip_distance_km, when present, is the measured along-route distance of
    the trip itself (e.g. from a GPS polyline); it replaces the detoured
    great-circle estimate for the in-task leg.
    """

    id: int
    publish_time: float
    source: GeoPoint
    dest: GeoPoint
    start_deadline: float
    end_deadline: float
    price: float
    wtp: float
    trip_distance_km: float | None = None
    surge: float = 1.0

    def __post_init__(self) -> None:
        if not self.publish_time < self.start_deadline < self.end_deadline:
            raise ValueError(
                f"task {self.id}: need publish < start deadline < end deadline, got "
                f"{self.publish_time}, {self.start_deadline}, {self.end_deadline}"
            )
        if self.price < 0:
            raise ValueError(f"task {self.id}: negative price {self.price}")
        if not (math.isfinite(self.price) and math.isfinite(self.wtp)):
            raise ValueError(f"task {self.id}: non-finite price or wtp")
        if self.trip_distance_km is not None and self.trip_distance_km < 0:
            raise ValueError(f"task {self.id}: negative trip distance")


def task_leg(task: Task, cm: CostModel) -> Leg:
    """In-task leg (source to destination of the same task).

    Uses the recorded trip distance when the task has one; otherwise the
    detoured great-circle estimate, like any empty leg.
    """
    if task.trip_distance_km is None:
        return leg_estimate(task.source, task.dest, cm)
    d = task.trip_distance_km
    return Leg(d, d / cm.speed_kmh * 3600.0, d * cm.fuel_unit_price)


@dataclass(frozen=True)
class Instance:
    """One market: drivers, tasks, a cost model and the objective mode.

    value_overrides maps (driver_id, task_id) to a replacement task value.
    It exists for test fixtures that need driver-dependent task values and is
    empty in every production path.
    """

    drivers: tuple[Driver, ...]
    tasks: tuple[Task, ...]
    cost_model: CostModel
    objective: str = DRIVER_PROFIT
    value_overrides: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "drivers", tuple(self.drivers))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        for name, items in (("driver", self.drivers), ("task", self.tasks)):
            ids = [x.id for x in items]
            if len(ids) != len(set(ids)):
                raise ValueError(f"duplicate {name} ids in instance")
        if self.objective == SOCIAL_WELFARE:
            bad = [t.id for t in self.tasks if t.wtp < t.price]
            if bad:
                raise ValueError(
                    f"social-welfare instance admits only tasks with wtp >= price; "
                    f"offending tasks: {bad}"
                )

    def driver_by_id(self, driver_id: int) -> Driver:
        for d in self.drivers:
            if d.id == driver_id:
                return d
        raise KeyError(driver_id)

    def task_by_id(self, task_id: int) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    def value_of(self, driver_id: int, task: Task) -> float:
        """Value of serving `task` for this driver under the instance objective."""
        override = self.value_overrides.get((driver_id, task.id))
        if override is not None:
            return override
        return task.wtp if self.objective == SOCIAL_WELFARE else task.price


@dataclass(frozen=True)
class Schedule:
    """An ordered task list for one driver, with its recomputable profit."""

    driver_id: int
    task_ids: tuple[int, ...]
    profit: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_ids", tuple(self.task_ids))
        if len(set(self.task_ids)) != len(self.task_ids):
            raise ValueError(f"schedule for driver {self.driver_id} repeats a task")


@dataclass(frozen=True)
class MarketOutcome:
    """A full assignment: one schedule per driver plus the served/rejected split."""

    schedules: tuple[Schedule, ...]
    served_task_ids: frozenset[int]
    rejected_task_ids: frozenset[int]
    total_profit: float
    metrics: "MarketMetrics | None" = None

    def schedule_for(self, driver_id: int) -> Schedule:
        for s in self.schedules:
            if s.driver_id == driver_id:
                return s
        raise KeyError(driver_id)

    def with_metrics(self, metrics: "MarketMetrics") -> "MarketOutcome":
        return replace(self, metrics=metrics)


def build_outcome(inst: Instance, schedules: Sequence[Schedule]) -> MarketOutcome:
    """Assemble a MarketOutcome from per-driver schedules."""
    served = frozenset(tid for s in schedules for tid in s.task_ids)
    rejected = frozenset(t.id for t in inst.tasks) - served
    total = sum(s.profit for s in schedules)
    return MarketOutcome(tuple(schedules), served, rejected, total)


class InfeasibleScheduleError(ValueError):
    """A schedule violates a time constraint; .leg names the first bad leg."""

    def __init__(self, message: str, leg: tuple[int, int]):
        super().__init__(message)
        self.leg = leg


@dataclass(frozen=True)
class StopTiming:
    task_id: int
    arrival: float
    finish: float


def schedule_timeline(driver: Driver, tasks: Sequence[Task], cm: CostModel) -> list[StopTiming]:
    """Walk a task sequence at realized times and return per-stop timings.

    Raises InfeasibleScheduleError naming the first violated leg.  Node 0 is
    the driver source and node -1 her destination, matching the task map.
    """
    timings: list[StopTiming] = []
    now = driver.start_time
    loc = driver.source
    prev = 0
    for t in tasks:
        arrival = now + leg_estimate(loc, t.source, cm).time_s
        if arrival > t.start_deadline:
            raise InfeasibleScheduleError(
                f"driver {driver.id}: leg {prev}->{t.id} arrives at {arrival:.3f}, "
                f"after start deadline {t.start_deadline:.3f}",
                leg=(prev, t.id),
            )
        finish = arrival + task_leg(t, cm).time_s
        if finish > t.end_deadline:
            raise InfeasibleScheduleError(
                f"driver {driver.id}: task {t.id} finishes at {finish:.3f}, "
                f"after end deadline {t.end_deadline:.3f}",
                leg=(t.id, t.id),
            )
        timings.append(StopTiming(t.id, arrival, finish))
        now, loc, prev = finish, t.dest, t.id
    home = now + leg_estimate(loc, driver.dest, cm).time_s
    if home > driver.end_time:
        raise InfeasibleScheduleError(
            f"driver {driver.id}: leg {prev}->-1 reaches her destination at "
            f"{home:.3f}, after her end time {driver.end_time:.3f}",
            leg=(prev, -1),
        )
    return timings


def path_profit(
    driver: Driver,
    ordered_tasks: Sequence[Task],
    cm: CostModel,
    objective: str = DRIVER_PROFIT,
    value_overrides: Mapping[tuple[int, int], float] | None = None,
) -> float:
    """Profit of one driver's task sequence: task values minus the excess cost.

    Excess cost is the full travel cost of the schedule minus the baseline
    cost of driving source -> destination directly, so the empty sequence is
    worth exactly 0.  Raises InfeasibleScheduleError on a time violation.
    """
    if not ordered_tasks:
        return 0.0
    schedule_timeline(driver, ordered_tasks, cm)

    overrides = value_overrides or {}
    value = 0.0
    in_task_cost = 0.0
    for t in ordered_tasks:
        v = overrides.get((driver.id, t.id))
        if v is None:
            v = t.wtp if objective == SOCIAL_WELFARE else t.price
        value += v
        in_task_cost += task_leg(t, cm).cost

    empty_cost = leg_estimate(driver.source, ordered_tasks[0].source, cm).cost
    for a, b in zip(ordered_tasks, ordered_tasks[1:]):
        empty_cost += leg_estimate(a.dest, b.source, cm).cost
    empty_cost += leg_estimate(ordered_tasks[-1].dest, driver.dest, cm).cost

    baseline = leg_estimate(driver.source, driver.dest, cm).cost
    return value - in_task_cost - empty_cost + baseline


@dataclass(frozen=True)
class Violation:
    """One broken outcome constraint; kind is a stable machine-readable tag."""

    kind: str
    message: str
    driver_id: int | None = None
    task_id: int | None = None


def validate_outcome(
    inst: Instance, out: MarketOutcome, strict_ir: bool = False
) -> list[Violation]:
    """Check a MarketOutcome against the assignment constraints.

    Returns the list of violations (empty when the outcome is consistent):
    unique assignment per task, schedule time-feasibility, the served/rejected
    partition, recomputable profits, and with strict_ir also the requirement
    that every nonempty schedule earns nonnegative profit.
    """
    violations: list[Violation] = []
    known_tasks = {t.id: t for t in inst.tasks}
    known_drivers = {d.id for d in inst.drivers}

    seen_drivers: set[int] = set()
    assigned: dict[int, list[int]] = {}
    for s in out.schedules:
        if s.driver_id not in known_drivers:
            violations.append(Violation(
                "unknown_driver", f"schedule references driver {s.driver_id}",
                driver_id=s.driver_id))
            continue
        if s.driver_id in seen_drivers:
            violations.append(Violation(
                "duplicate_schedule", f"driver {s.driver_id} has two schedules",
                driver_id=s.driver_id))
        seen_drivers.add(s.driver_id)
        for tid in s.task_ids:
            if tid not in known_tasks:
                violations.append(Violation(
                    "unknown_task", f"schedule of driver {s.driver_id} references task {tid}",
                    driver_id=s.driver_id, task_id=tid))
            else:
                assigned.setdefault(tid, []).append(s.driver_id)

    for tid, drivers in sorted(assigned.items()):
        if len(drivers) > 1:
            violations.append(Violation(
                "duplicate_assignment",
                f"task {tid} is assigned to drivers {drivers}", task_id=tid))

    served = frozenset(assigned)
    if served != out.served_task_ids:
        violations.append(Violation(
            "served_set_mismatch",
            f"served_task_ids disagrees with schedules "
            f"(recorded {sorted(out.served_task_ids)}, actual {sorted(served)})"))
    expected_rejected = frozenset(known_tasks) - served
    if out.rejected_task_ids != expected_rejected:
        violations.append(Violation(
            "partition_mismatch",
            "served and rejected task ids do not partition the task set"))

    total = 0.0
    for s in out.schedules:
        if s.driver_id not in known_drivers:
            continue
        driver = inst.driver_by_id(s.driver_id)
        tasks = [known_tasks[tid] for tid in s.task_ids if tid in known_tasks]
        if len(tasks) != len(s.task_ids):
            continue
        try:
            recomputed = path_profit(
                driver, tasks, inst.cost_model, inst.objective, inst.value_overrides)
        except InfeasibleScheduleError as exc:
            violations.append(Violation(
                "infeasible_schedule", str(exc), driver_id=s.driver_id))
            continue
        if abs(recomputed - s.profit) > MONEY_TOL:
            violations.append(Violation(
                "profit_mismatch",
                f"driver {s.driver_id}: stored profit {s.profit!r} differs from "
                f"recomputed {recomputed!r}", driver_id=s.driver_id))
        total += s.profit
        if strict_ir and s.task_ids and s.profit < -MONEY_TOL:
            violations.append(Violation(
                "ir_violation",
                f"driver {s.driver_id} earns negative profit {s.profit}",
                driver_id=s.driver_id))

    if abs(total - out.total_profit) > max(MONEY_TOL, 1e-12 * abs(total)):
        violations.append(Violation(
            "total_profit_mismatch",
            f"total_profit {out.total_profit!r} differs from schedule sum {total!r}"))
    return violations


# --- line-delimited instance serialization -------------------------------

def _point_dict(p: GeoPoint) -> dict:
    return {"lat": p.lat, "lon": p.lon}


def instance_to_lines(inst: Instance) -> Iterator[str]:
    """Serialize an instance as line-delimited JSON records."""
    header = {
        "record": "instance",
        "version": 1,
        "objective": inst.objective,
        "cost_model": {
            "speed_kmh": inst.cost_model.speed_kmh,
            "fuel_unit_price": inst.cost_model.fuel_unit_price,
            "detour_factor": inst.cost_model.detour_factor,
            "beta1": inst.cost_model.beta1,
            "beta2": inst.cost_model.beta2,
            "default_surge": inst.cost_model.default_surge,
        },
    }
    yield json.dumps(header, sort_keys=True)
    for d in inst.drivers:
        yield json.dumps({
            "record": "driver",
            "id": d.id,
            "source": _point_dict(d.source),
            "dest": _point_dict(d.dest),
            "start_time": d.start_time,
            "end_time": d.end_time,
        }, sort_keys=True)
    for t in inst.tasks:
        yield json.dumps({
            "record": "task",
            "id": t.id,
            "publish_time": t.publish_time,
            "source": _point_dict(t.source),
            "dest": _point_dict(t.dest),
            "start_deadline": t.start_deadline,
            "end_deadline": t.end_deadline,
            "price": t.price,
            "wtp": t.wtp,
            "trip_distance_km": t.trip_distance_km,
            "surge": t.surge,
        }, sort_keys=True)


def instance_from_lines(lines: Iterable[str]) -> Instance:
    header = None
    drivers: list[Driver] = []
    tasks: list[Task] = []
    for raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        rec = json.loads(raw)
        kind = rec.get("record")
        if kind == "instance":
            header = rec
        elif kind == "driver":
            drivers.append(Driver(
                id=rec["id"],
                source=GeoPoint(**rec["source"]),
                dest=GeoPoint(**rec["dest"]),
                start_time=rec["start_time"],
                end_time=rec["end_time"],
            ))
        elif kind == "task":
            tasks.append(Task(
                id=rec["id"],
                publish_time=rec["publish_time"],
                source=GeoPoint(**rec["source"]),
                dest=GeoPoint(**rec["dest"]),
                start_deadline=rec["start_deadline"],
                end_deadline=rec["end_deadline"],
                price=rec["price"],
                wtp=rec["wtp"],
                trip_distance_km=rec["trip_distance_km"],
                surge=rec.get("surge", 1.0),
            ))
        else:
            raise ValueError(f"unknown record kind {kind!r}")
    if header is None:
        raise ValueError("instance file has no header record")
    return Instance(
        drivers=tuple(drivers),
        tasks=tuple(tasks),
        cost_model=CostModel(**header["cost_model"]),
        objective=header["objective"],
    )


def save_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in instance_to_lines(inst):
            fh.write(line + "\n")


def load_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_lines(fh)
