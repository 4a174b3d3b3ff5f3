"""Distances, pickup costs and the reachability pre-filter."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from efair.errors import ConfigurationError

EARTH_RADIUS_KM = 6371.0
DUMMY_PREFIX = "home:"


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ConfigurationError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ConfigurationError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ConfigurationError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Buyer:
    id: str
    location: GeoPoint
    demand: int
    max_range_km: float
    arrival_time: datetime | None = None

    def __post_init__(self) -> None:
        if self.demand < 1:
            raise ConfigurationError(f"buyer {self.id}: demand must be >= 1")
        if not self.max_range_km >= 0:
            raise ConfigurationError(f"buyer {self.id}: max_range_km must be >= 0")


@dataclass(frozen=True)
class Pop:
    """Pick-up point.  ``owner`` is set only for a buyer's home (dummy) POP."""

    id: str
    location: GeoPoint
    capacity: int
    owner: str | None = None

    def __post_init__(self) -> None:
        if self.capacity < 0:
            raise ConfigurationError(f"POP {self.id}: capacity must be >= 0")

    @property
    def is_dummy(self) -> bool:
        return self.owner is not None


def home_pop(buyer: Buyer) -> Pop:
    return Pop(f"{DUMMY_PREFIX}{buyer.id}", buyer.location, buyer.demand, owner=buyer.id)


def with_home_pops(buyers: Sequence[Buyer], pops: Iterable[Pop]) -> list[Pop]:
    """Real POPs followed by one home POP per buyer (existing ones kept)."""
    out = [p for p in pops if not p.is_dummy]
    return out + [home_pop(b) for b in buyers]


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def distance_matrix(pops: Sequence[Pop], buyers: Sequence[Buyer]) -> np.ndarray:
    """``D[j, k]`` = distance from POP j to buyer k in km."""
    if not pops or not buyers:
        return np.zeros((len(pops), len(buyers)))
    plat = np.radians([p.location.lat for p in pops])[:, None]
    plon = np.radians([p.location.lon for p in pops])[:, None]
    blat = np.radians([b.location.lat for b in buyers])[None, :]
    blon = np.radians([b.location.lon for b in buyers])[None, :]
    h = np.sin((blat - plat) / 2) ** 2 + np.cos(plat) * np.cos(blat) * np.sin((blon - plon) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def cost_cents(beta_cents_per_km: float, km: float) -> int:
    """``beta * km`` rounded half-up to whole cents."""
    exact = Decimal(repr(float(beta_cents_per_km))) * Decimal(repr(float(km)))
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def pickup_cost(buyer: Buyer, pop: Pop, beta_cents_per_km: float) -> int:
    """Pickup cost in cents; zero at a home POP."""
    if beta_cents_per_km < 0:
        raise ConfigurationError("beta must be >= 0")
    if pop.is_dummy:
        return 0
    return cost_cents(beta_cents_per_km, haversine_km(buyer.location, pop.location))


@dataclass(frozen=True)
class Reachability:
    pops: tuple[Pop, ...]
    buyers: tuple[Buyer, ...]
    matrix: np.ndarray  # bool, shape (len(pops), len(buyers))
    distances: np.ndarray

    def reachable(self, j: int, k: int) -> bool:
        return bool(self.matrix[j, k])

    def pairs(self) -> list[tuple[int, int]]:
        return [(int(j), int(k)) for j, k in zip(*np.nonzero(self.matrix))]


def prefilter_pops(buyers: Sequence[Buyer], pops: Sequence[Pop]) -> Reachability:
    """Drop real POPs no buyer can reach; home POPs always survive for their owner.

    The returned matrix is indexed by the surviving POPs.
    """
    buyers = tuple(buyers)
    dist = distance_matrix(pops, buyers)
    ranges = np.array([b.max_range_km for b in buyers], dtype=float)
    ids = [b.id for b in buyers]
    reach = np.zeros(dist.shape, dtype=bool)
    for j, pop in enumerate(pops):
        if pop.is_dummy:
            reach[j] = [bid == pop.owner for bid in ids]
        else:
            reach[j] = dist[j] <= ranges
    keep = [j for j, pop in enumerate(pops) if pop.is_dummy or reach[j].any()]
    return Reachability(tuple(pops[j] for j in keep), buyers, reach[keep], dist[keep])


# CSV I/O ---------------------------------------------------------------------

POP_HEADER = ["id", "lat", "lon", "capacity"]
BUYER_HEADER = ["id", "lat", "lon", "demand", "max_range_km", "arrival_time_iso8601"]


def parse_timestamp(text: str) -> datetime:
    # fromisoformat on 3.10 rejects a trailing Z
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def _check_header(found: list[str] | None, expected: list[str], path: Path) -> None:
    if found != expected:
        raise ConfigurationError(f"{path}: expected header {','.join(expected)}, got {found}")


def read_pops(path: str | Path) -> list[Pop]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, POP_HEADER, path)
        return [
            Pop(r["id"], GeoPoint(float(r["lat"]), float(r["lon"])), int(r["capacity"]))
            for r in reader
        ]


def read_buyers(path: str | Path) -> list[Buyer]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, BUYER_HEADER, path)
        out = []
        for r in reader:
            stamp = r["arrival_time_iso8601"].strip()
            out.append(
                Buyer(
                    r["id"],
                    GeoPoint(float(r["lat"]), float(r["lon"])),
                    int(r["demand"]),
                    float(r["max_range_km"]),
                    parse_timestamp(stamp) if stamp else None,
                )
            )
        return out


def write_pops(path: str | Path, pops: Iterable[Pop]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POP_HEADER)
        for p in pops:
            if not p.is_dummy:
                w.writerow([p.id, p.location.lat, p.location.lon, p.capacity])


def write_buyers(path: str | Path, buyers: Iterable[Buyer]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUYER_HEADER)
        for b in buyers:
            stamp = b.arrival_time.isoformat() if b.arrival_time else ""
            w.writerow([b.id, b.location.lat, b.location.lon, b.demand, b.max_range_km, stamp])
