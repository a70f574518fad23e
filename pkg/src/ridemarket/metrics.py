"""Aggregate outcome metrics and the performance ratio against the LP bound."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .estimation import MONEY_TOL
from .market import Instance, MarketOutcome


@dataclass(frozen=True)
class MarketMetrics:
    """Per-run aggregates; averages divide by all drivers, idle ones included."""

    total_revenue: float
    drivers_profit: float
    service_rate: float
    avg_revenue_per_driver: float
    avg_tasks_per_driver: float
    ir_violations: int
    performance_ratio: float | None = None

    def to_jsonable(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MarketMetrics":
        return cls(**d)


def compute_metrics(
    inst: Instance, out: MarketOutcome, bound: float | None = None
) -> MarketMetrics:
    """Summarize an outcome; bound, when given, is Z_f* for the same instance."""
    prices = {t.id: t.price for t in inst.tasks}
    total_revenue = sum(prices[tid] for tid in out.served_task_ids)
    n_drivers = len(inst.drivers)
    n_tasks = len(inst.tasks)
    served = len(out.served_task_ids)

    ir_violations = sum(
        1 for s in out.schedules if s.task_ids and s.profit < -MONEY_TOL)

    ratio = None
    if bound is not None and bound > MONEY_TOL:
        ratio = out.total_profit / bound

    return MarketMetrics(
        total_revenue=total_revenue,
        drivers_profit=out.total_profit,
        service_rate=served / n_tasks if n_tasks else 0.0,
        avg_revenue_per_driver=total_revenue / n_drivers if n_drivers else 0.0,
        avg_tasks_per_driver=served / n_drivers if n_drivers else 0.0,
        ir_violations=ir_violations,
        performance_ratio=ratio,
    )
