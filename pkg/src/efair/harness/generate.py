"""Synthetic buyers and POP grids."""

from __future__ import annotations

import math
from dataclasses import replace
from datetime import timedelta

import numpy as np

from efair.dynamics import simulate_birth_process
from efair.errors import ConfigurationError
from efair.geo import EARTH_RADIUS_KM, Buyer, GeoPoint, Pop
from efair.harness.config import BuyerSpec, CampaignConfig, GridSpec
from efair.pricing import PriceCurve

KM_PER_DEGREE = EARTH_RADIUS_KM * math.pi / 180.0


def _clamp_point(lat: float, lon: float) -> GeoPoint:
    lat = min(90.0, max(-90.0, lat))
    if not -180.0 <= lon <= 180.0:
        lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon)


def generate_buyers(
    spec: BuyerSpec,
    seed: int | np.random.Generator | None,
    curve: PriceCurve | None = None,
    start=None,
) -> list[Buyer]:
    """Buyers drawn from a mixture of Gaussian clusters.

    Cluster offsets are in km (north/east), demands come from the configured
    discrete distribution.  With an arrival model, arrival times come from a
    birth process (milestones from ``curve`` unless given explicitly) counted
    from ``start``; buyers the process does not reach before its horizon get
    no arrival time.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = spec.count
    if n == 0:
        return []
    weights = np.array([c.weight for c in spec.clusters], dtype=float)
    which = rng.choice(len(spec.clusters), size=n, p=weights / weights.sum())
    offsets = rng.standard_normal((n, 2))
    probs = np.array(spec.demand_weights, dtype=float)
    demands = rng.choice(np.array(spec.demand_values), size=n, p=probs / probs.sum())

    arrivals: list[float] = []
    if spec.arrival is not None and start is not None:
        process = spec.arrival.process(curve, n)
        arrivals = list(simulate_birth_process(process, spec.arrival.horizon_days, rng))

    width = len(str(n))
    buyers = []
    for k in range(n):
        c = spec.clusters[which[k]]
        north, east = offsets[k] * c.sigma_km
        lat = c.center.lat + north / KM_PER_DEGREE
        lon = c.center.lon + east / (KM_PER_DEGREE * max(math.cos(math.radians(c.center.lat)), 1e-9))
        when = start + timedelta(days=arrivals[k]) if k < len(arrivals) else None
        buyers.append(
            Buyer(f"b{k + 1:0{width}d}", _clamp_point(lat, lon), int(demands[k]), spec.max_range_km, when)
        )
    return buyers


def generate_pop_grid(grid: GridSpec) -> list[Pop]:
    """POPs on a regular grid inside the box, starting at the south-west corner.

    Spacing is in km; the longitude step is scaled by the cosine of the box's
    middle latitude.
    """
    s, w, n, e = grid.south, grid.west, grid.north, grid.east
    if not all(math.isfinite(v) for v in (s, w, n, e)):
        raise ConfigurationError("grid bounds must be finite")
    if not (-90 <= s <= n <= 90 and -180 <= w <= e <= 180):
        raise ConfigurationError(f"degenerate grid box ({s}, {w}) - ({n}, {e})")
    if not grid.spacing_km > 0:
        raise ConfigurationError("grid spacing must be > 0")
    if grid.capacity < 0:
        raise ConfigurationError("grid capacity must be >= 0")
    coslat = max(math.cos(math.radians((s + n) / 2)), 1e-9)
    dlat = grid.spacing_km / KM_PER_DEGREE
    dlon = grid.spacing_km / (KM_PER_DEGREE * coslat)
    # a tiny slack keeps exact multiples of the spacing inside the box
    rows = int(math.floor((n - s) / dlat + 1e-9)) + 1
    cols = int(math.floor((e - w) / dlon + 1e-9)) + 1
    pops = []
    for r in range(rows):
        for c in range(cols):
            lat = min(n, s + r * dlat)
            lon = min(e, w + c * dlon)
            pops.append(Pop(f"g{r:03d}-{c:03d}", GeoPoint(lat, lon), grid.capacity))
    return pops


def buyers_for_run(config: CampaignConfig, rng: np.random.Generator) -> list[Buyer]:
    """Buyer pool for one campaign run, sorted by arrival (never-arriving last)."""
    if config.buyer_file is not None:
        # buyers without a timestamp are present from the start
        buyers = [b if b.arrival_time else replace(b, arrival_time=config.start) for b in config.load_buyer_file()]
    else:
        assert config.buyers is not None
        buyers = generate_buyers(config.buyers, rng, config.sellers[0].fair_curve, config.start)
    return sorted(buyers, key=lambda b: (b.arrival_time is None, b.arrival_time or config.start, b.id))
