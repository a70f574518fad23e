"""Geometric and economic primitives: distances, travel times, travel costs, surge prices.

All distances are great-circle kilometres, all times are seconds, and money is
an abstract currency unit stored as float64.  Every function here is pure and
safe to call from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_KM = 6371.0

# Money comparisons throughout the package use this absolute tolerance.
MONEY_TOL = 1e-9


@dataclass(frozen=True)
class GeoPoint:
    """A (latitude, longitude) pair in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class CostModel:
    """Global constants for travel and pricing estimates.

    speed_kmh        mean driving speed used for every time estimate
    fuel_unit_price  travel cost per km driven
    detour_factor    multiplier applied to great-circle distances to account
                     for the road network (>= 1)
    beta1, beta2     per-km and per-second coefficients of the fare formula
    default_surge    surge multiplier applied when a task carries none
    """

    speed_kmh: float = 30.0
    fuel_unit_price: float = 0.5
    detour_factor: float = 1.3
    beta1: float = 1.0
    beta2: float = 0.01
    default_surge: float = 1.0

    def __post_init__(self) -> None:
        for name in ("speed_kmh", "fuel_unit_price", "detour_factor",
                     "beta1", "beta2", "default_surge"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
        if self.speed_kmh <= 0:
            raise ValueError(f"speed_kmh must be > 0, got {self.speed_kmh}")
        if self.detour_factor < 1.0:
            raise ValueError(f"detour_factor must be >= 1, got {self.detour_factor}")
        if self.fuel_unit_price < 0:
            raise ValueError(f"fuel_unit_price must be >= 0, got {self.fuel_unit_price}")


class Leg(NamedTuple):
    """One estimated driving leg."""

    distance_km: float
    time_s: float
    cost: float


def haversine_arrays(lat1, lon1, lat2, lon2):
    """Great-circle distance in km; accepts scalars or numpy arrays (degrees).

    This is the single distance formula used everywhere in the package, so
    scalar and vectorised call sites agree bit for bit.
    """
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = np.radians(lat2 - lat1)
    dlam = np.radians(lon2 - lon1)
    a = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlam / 2.0) ** 2
    # rounding can push a marginally past 1 for antipodal points
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points, Earth radius 6371.0 km."""
    return float(haversine_arrays(a.lat, a.lon, b.lat, b.lon))


def leg_estimate(a: GeoPoint, b: GeoPoint, cm: CostModel) -> Leg:
    """Estimate one empty-driving leg from a to b.

    Distance is great-circle times the detour factor, time follows from the
    model speed, cost from the fuel unit price.
    """
    distance = haversine_km(a, b) * cm.detour_factor
    time_s = distance / cm.speed_kmh * 3600.0
    return Leg(distance, time_s, distance * cm.fuel_unit_price)


def surge_price(distance_km: float, duration_s: float, alpha: float, cm: CostModel) -> float:
    """Fare of a trip: alpha * (beta1 * distance + beta2 * duration)."""
    if distance_km < 0 or duration_s < 0 or alpha < 0:
        raise ValueError(
            f"surge_price requires nonnegative inputs, got "
            f"distance={distance_km}, duration={duration_s}, alpha={alpha}"
        )
    return alpha * (cm.beta1 * distance_km + cm.beta2 * duration_s)
