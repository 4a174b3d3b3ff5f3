"""Hypothesis strategies and small builders shared across the test-suite."""

from __future__ import annotations

import math

import numpy as np
from hypothesis import strategies as st

from efair.geo import Buyer, GeoPoint, Pop
from efair.model import FairInstance, Seller
from efair.pricing import PriceCurve

STAPLES = PriceCurve(((469, 9), (419, 29), (369, 59), (309, None)))


@st.composite
def price_curves(draw, max_segments: int = 5, max_bound: int = 200, bounded: bool | None = None):
    n = draw(st.integers(1, max_segments))
    prices = sorted(
        draw(st.lists(st.integers(1, 5000), min_size=n, max_size=n, unique=True)),
        reverse=True,
    )
    cuts = sorted(
        draw(st.lists(st.integers(1, max_bound), min_size=n, max_size=n, unique=True))
    )
    last_bounded = draw(st.booleans()) if bounded is None else bounded
    bounds: list[int | None] = list(cuts)
    if not last_bounded:
        bounds[-1] = None
    return PriceCurve(tuple(zip(prices, bounds)))


def offset(p: GeoPoint, north_km: float = 0.0, east_km: float = 0.0) -> GeoPoint:
    lat = p.lat + north_km / 111.195
    lon = p.lon + east_km / (111.195 * math.cos(math.radians(p.lat)))
    return GeoPoint(lat, lon)


MILAN = GeoPoint(45.4642, 9.1900)


def _random_curve(rng: np.random.Generator, max_segments: int = 3) -> PriceCurve:
    n = int(rng.integers(1, max_segments + 1))
    prices = sorted(rng.choice(np.arange(100, 800), size=n, replace=False).tolist(), reverse=True)
    bounds = sorted(rng.choice(np.arange(1, 12), size=n, replace=False).tolist())
    segs = [(int(p), int(b)) for p, b in zip(prices, bounds)]
    segs[-1] = (segs[-1][0], None)
    return PriceCurve(tuple(segs))


def random_instance(
    rng: np.random.Generator, max_sellers: int = 3, max_pops: int = 4, max_buyers: int = 3
) -> FairInstance:
    """Small feasible fair around Milan."""
    buyers = [
        Buyer(
            f"b{k}",
            offset(MILAN, *rng.uniform(-3, 3, 2)),
            int(rng.integers(1, 5)),
            float(rng.uniform(0, 5)),
        )
        for k in range(int(rng.integers(1, max_buyers + 1)))
    ]
    demand = sum(b.demand for b in buyers)
    n_sellers = int(rng.integers(1, max_sellers + 1))
    sellers = []
    for i in range(n_sellers):
        curve = _random_curve(rng)
        sellers.append(Seller(f"s{i}", curve, int(rng.integers(1, demand + 3)), curve))
    if sum(s.supply for s in sellers) < demand:
        s0 = sellers[0]
        sellers[0] = Seller(s0.id, s0.fair_curve, demand, s0.seller_curve)
    pops = [
        Pop(f"p{j}", offset(MILAN, *rng.uniform(-3, 3, 2)), int(rng.integers(1, 12)))
        for j in range(int(rng.integers(1, max_pops + 1)))
    ]
    ticket = rng.choice(3)
    ticket_curve = None if ticket == 0 else (
        PriceCurve.flat(int(rng.integers(1, 400))) if ticket == 1
        else PriceCurve(((int(rng.integers(200, 400)), 1), (int(rng.integers(1, 200)), None)))
    )
    return FairInstance(
        tuple(sellers),
        tuple(pops),
        tuple(buyers),
        int(rng.integers(0, 1500)),
        float(rng.uniform(0, 60)),
        ticket_curve,
    )
