"""Trace ingestion and market synthesis.

Parses the Porto taxi CSV (ECML/PKDD'15 layout) into trip records, turns trips
into tasks, and synthesizes driver rosters and fully synthetic markets.  The
trace's POLYLINE column is a JSON array of [lon, lat] pairs sampled every 15
seconds; coordinates are swapped into (lat, lon) on ingest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .estimation import CostModel, GeoPoint, haversine_km, surge_price
from .market import Driver, Task

PORTO_COLUMNS = ["TRIP_ID", "CALL_TYPE", "ORIGIN_CALL", "ORIGIN_STAND",
                 "TAXI_ID", "TIMESTAMP", "DAY_TYPE", "MISSING_DATA", "POLYLINE"]
SAMPLE_INTERVAL_S = 15.0

HOME_WORK_HOME = "home-work-home"
HITCHHIKING = "hitchhiking"
DRIVER_MODELS = (HOME_WORK_HOME, HITCHHIKING)


@dataclass(frozen=True)
class TripRecord:
    """One cleaned trace trip."""

    trip_id: str
    taxi_id: int
    start_timestamp: float
    polyline: tuple[GeoPoint, ...]
    call_type: str

    @property
    def duration_s(self) -> float:
        return (len(self.polyline) - 1) * SAMPLE_INTERVAL_S

    def distance_km(self) -> float:
        pts = self.polyline
        return sum(haversine_km(a, b) for a, b in zip(pts, pts[1:]))

    def to_csv_row(self) -> list[str]:
        """Re-serialize the semantic content as a Porto-format row."""
        poly = json.dumps([[p.lon, p.lat] for p in self.polyline],
                          separators=(",", ""))
        return [self.trip_id, self.call_type, "", "", str(self.taxi_id),
                str(int(self.start_timestamp)), "A", "False", poly]


@dataclass
class DropReport:
    """Counts of rows dropped per reason while parsing."""

    kept: int = 0
    dropped: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())

    def to_jsonable(self) -> dict:
        return {"kept": self.kept, "dropped": dict(sorted(self.dropped.items()))}


def parse_porto(stream: IO[str]) -> tuple[list[TripRecord], DropReport]:
    """Parse a Porto-format CSV stream.

    Rows flagged MISSING_DATA, rows with fewer than two polyline points, and
    malformed rows are dropped and counted; a bad header is fatal.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty trace file: missing header row") from None
    if [h.strip().upper() for h in header] != PORTO_COLUMNS:
        raise ValueError(
            f"unexpected trace header {header!r}; expected {PORTO_COLUMNS}")

    records: list[TripRecord] = []
    report = DropReport()
    for row in reader:
        if len(row) != len(PORTO_COLUMNS):
            report.drop("malformed")
            continue
        (trip_id, call_type, _origin_call, _origin_stand,
         taxi_id, timestamp, _day_type, missing, polyline) = row
        if missing.strip().lower() == "true":
            report.drop("missing_data")
            continue
        try:
            taxi = int(taxi_id)
            start = float(int(timestamp))
            call = call_type.strip().upper()
            if call not in ("A", "B", "C"):
                raise ValueError(f"bad call type {call_type!r}")
            raw_points = json.loads(polyline)
            points = tuple(GeoPoint(lat=float(lat), lon=float(lon))
                           for lon, lat in raw_points)
        except (ValueError, TypeError):
            report.drop("malformed")
            continue
        if len(points) < 2:
            report.drop("short_polyline")
            continue
        records.append(TripRecord(trip_id, taxi, start, points, call))
        report.kept += 1
    return records, report


def trips_to_tasks(
    records: Sequence[TripRecord],
    cm: CostModel,
    wtp_markup_max: float = 0.5,
    seed: int | tuple[int, ...] = 0,
    publish_lead_s: float = 300.0,
) -> list[Task]:
    """Turn cleaned trips into tasks.

    Start deadline is the trip's start timestamp, end deadline its recorded
    finish; the price follows the surge formula on the polyline distance and
    duration, and willingness-to-pay marks the price up by a seeded uniform
    fraction in [0, wtp_markup_max).
    """
    if wtp_markup_max < 0:
        raise ValueError("wtp_markup_max must be >= 0")
    lead = max(publish_lead_s, 1.0)
    rng = np.random.default_rng(seed)
    tasks: list[Task] = []
    for i, rec in enumerate(records):
        duration = rec.duration_s
        if duration <= 0:
            continue
        distance = rec.distance_km()
        start = rec.start_timestamp
        price = surge_price(distance, duration, cm.default_surge, cm)
        markup = float(rng.uniform(0.0, wtp_markup_max)) if wtp_markup_max > 0 else 0.0
        tasks.append(Task(
            id=i + 1,
            publish_time=start - lead,
            source=rec.polyline[0],
            dest=rec.polyline[-1],
            start_deadline=start,
            end_deadline=start + duration,
            price=price,
            wtp=price * (1.0 + markup),
            trip_distance_km=distance,
            surge=cm.default_surge,
        ))
    return tasks


@dataclass(frozen=True)
class BoundingBox:
    lat_min: float
    lon_min: float
    lat_max: float
    lon_max: float

    def __post_init__(self) -> None:
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"degenerate bounding box {self}")


# roughly metropolitan Porto
PORTO_BBOX = BoundingBox(41.10, -8.70, 41.25, -8.50)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for synthesizing a driver roster over a reference task set."""

    driver_model: str = HITCHHIKING
    n_drivers: int = 50
    bounding_box: BoundingBox = PORTO_BBOX
    shift_length_s: float = 4 * 3600.0
    seed: int | tuple[int, ...] = 0
    wtp_markup_max: float = 0.5
    sample_from_tasks: bool = False  # draw locations from task endpoints

    def __post_init__(self) -> None:
        if self.driver_model not in DRIVER_MODELS:
            raise ValueError(f"unknown driver model {self.driver_model!r}")
        if self.shift_length_s <= 0:
            raise ValueError("shift_length_s must be > 0")
        if self.n_drivers < 0:
            raise ValueError("n_drivers must be >= 0")


def _sample_point(rng: np.random.Generator, box: BoundingBox) -> GeoPoint:
    return GeoPoint(lat=float(rng.uniform(box.lat_min, box.lat_max)),
                    lon=float(rng.uniform(box.lon_min, box.lon_max)))


def gen_drivers(cfg: GeneratorConfig, reference_tasks: Sequence[Task]) -> list[Driver]:
    """Monte-Carlo driver roster: home-work-home drivers return to their
    source, hitchhiking drivers end somewhere else.  Shifts are placed
    uniformly over the reference tasks' time span."""
    rng = np.random.default_rng(cfg.seed)
    if reference_tasks:
        span_lo = min(t.start_deadline for t in reference_tasks)
        span_hi = max(t.end_deadline for t in reference_tasks)
    else:
        span_lo, span_hi = 0.0, cfg.shift_length_s
    latest_start = max(span_lo, span_hi - cfg.shift_length_s)

    endpoints: list[GeoPoint] = []
    if cfg.sample_from_tasks:
        for t in reference_tasks:
            endpoints.append(t.source)
            endpoints.append(t.dest)

    def pick() -> GeoPoint:
        if endpoints:
            return endpoints[int(rng.integers(len(endpoints)))]
        return _sample_point(rng, cfg.bounding_box)

    drivers = []
    for i in range(cfg.n_drivers):
        source = pick()
        dest = source if cfg.driver_model == HOME_WORK_HOME else pick()
        start = float(rng.uniform(span_lo, latest_start)) if latest_start > span_lo \
            else span_lo
        drivers.append(Driver(
            id=i + 1, source=source, dest=dest,
            start_time=start, end_time=start + cfg.shift_length_s))
    return drivers


def drivers_from_taxi_ids(records: Sequence[TripRecord]) -> list[Driver]:
    """Alternate roster: one driver per (taxi, UTC day), shift spanning her
    first trip start to her last trip end, source and destination at the
    first pickup and last dropoff."""
    by_key: dict[tuple[int, int], list[TripRecord]] = {}
    for rec in records:
        day = int(rec.start_timestamp // 86400)
        by_key.setdefault((rec.taxi_id, day), []).append(rec)

    drivers = []
    for i, key in enumerate(sorted(by_key)):
        trips = sorted(by_key[key], key=lambda r: r.start_timestamp)
        first, last = trips[0], trips[-1]
        drivers.append(Driver(
            id=i + 1,
            source=first.polyline[0],
            dest=last.polyline[-1],
            start_time=first.start_timestamp,
            end_time=last.start_timestamp + last.duration_s,
        ))
    return drivers


def gen_tasks(
    n_tasks: int,
    cm: CostModel,
    seed: int | tuple[int, ...] = 0,
    bounding_box: BoundingBox = PORTO_BBOX,
    horizon_s: float = 43_200.0,
    publish_lead_s: float = 300.0,
    wtp_markup_max: float = 0.5,
    duration_slack: tuple[float, float] = (1.05, 1.6),
) -> list[Task]:
    """Fully synthetic task set for trace-free experiments.

    Endpoints are uniform in the box, start deadlines uniform over the
    horizon, and each trip's scheduled duration is its estimated driving time
    stretched by a uniform slack factor, so every task is serviceable.
    """
    if duration_slack[0] < 1.0 or duration_slack[1] < duration_slack[0]:
        raise ValueError("duration_slack must satisfy 1 <= lo <= hi")
    rng = np.random.default_rng(seed)
    lead = max(publish_lead_s, 1.0)
    tasks = []
    for i in range(n_tasks):
        src = _sample_point(rng, bounding_box)
        dst = _sample_point(rng, bounding_box)
        distance = haversine_km(src, dst) * cm.detour_factor
        est_time = distance / cm.speed_kmh * 3600.0
        duration = max(est_time * float(rng.uniform(*duration_slack)),
                       SAMPLE_INTERVAL_S)
        start = float(rng.uniform(0.0, horizon_s))
        price = surge_price(distance, duration, cm.default_surge, cm)
        markup = float(rng.uniform(0.0, wtp_markup_max)) if wtp_markup_max > 0 else 0.0
        tasks.append(Task(
            id=i + 1,
            publish_time=start - lead,
            source=src,
            dest=dst,
            start_deadline=start,
            end_deadline=start + duration,
            price=price,
            wtp=price * (1.0 + markup),
            trip_distance_km=distance,
            surge=cm.default_surge,
        ))
    return tasks


def trip_histograms(
    records: Sequence[TripRecord], bins: int = 50
) -> dict[str, dict]:
    """Duration and distance histograms of a trip set (inspection aid)."""
    durations = np.array([r.duration_s for r in records], dtype=float)
    distances = np.array([r.distance_km() for r in records], dtype=float)
    out = {}
    for name, values in (("duration_s", durations), ("distance_km", distances)):
        if len(values):
            counts, edges = np.histogram(values, bins=bins)
        else:
            counts, edges = np.zeros(0, int), np.zeros(1)
        out[name] = {"counts": counts.tolist(), "edges": edges.tolist()}
    return out
