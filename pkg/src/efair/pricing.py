"""Economy-of-scale price curves.

All money is integer cents and all quantities are integer item counts, so every
comparison below is exact.  A curve is a list of segments ``(unit_price,
upper_bound)``; segment ``l`` covers quantities ``x[l-1] < q <= x[l]`` with
``x[0] = 0``.  The seller charges ``unit_price * q`` for the whole order (a
discontinuous total), while the e-fair charges the continuous envelope
``f[l] * q + c[l]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Iterable, NamedTuple, Sequence

from efair.errors import ConfigurationError, OutOfRangeError

__all__ = [
    "PriceCurve",
    "CostBreakdown",
    "PriceAnomaly",
    "ValidationReport",
    "Violation",
    "seller_total_price",
    "fair_total_price",
    "buyer_savings",
    "manager_revenue",
    "validate_fair_curve",
    "find_price_anomalies",
    "format_cents",
    "to_cents",
]


def to_cents(amount: float | str | Decimal) -> int:
    """Convert a currency amount (e.g. ``4.69``) to integer cents, half-up."""
    value = Decimal(str(amount)) * 100
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_cents(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(int(cents))
    return f"{sign}{cents // 100}.{cents % 100:02d}"


@dataclass(frozen=True)
class PriceCurve:
    """Piecewise unit-price schedule.

    ``segments`` holds ``(unit_price_cents, upper_bound)`` pairs ordered by
    quantity.  Only the last upper bound may be ``None`` (unbounded).
    """

    segments: tuple[tuple[int, int | None], ...]

    def __post_init__(self) -> None:
        segs = tuple((int(p), None if b is None else int(b)) for p, b in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigurationError("a price curve needs at least one segment")
        prev_price, prev_bound = None, 0
        for idx, (price, bound) in enumerate(segs):
            if price <= 0:
                raise ConfigurationError(f"segment {idx + 1}: unit price must be > 0")
            if prev_price is not None and price >= prev_price:
                raise ConfigurationError(
                    f"segment {idx + 1}: unit prices must strictly decrease"
                )
            if bound is None:
                if idx != len(segs) - 1:
                    raise ConfigurationError("only the last segment may be unbounded")
            else:
                if bound < 1 or bound <= prev_bound:
                    raise ConfigurationError(
                        f"segment {idx + 1}: upper bounds must be >= 1 and strictly increasing"
                    )
                prev_bound = bound
            prev_price = price

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int | None]]) -> "PriceCurve":
        return cls(tuple(pairs))

    @classmethod
    def flat(cls, unit_price_cents: int, upper_bound: int | None = None) -> "PriceCurve":
        return cls(((unit_price_cents, upper_bound),))

    # -- geometry -----------------------------------------------------------------

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def slopes(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.segments)

    @property
    def bounds(self) -> tuple[int | None, ...]:
        return tuple(b for _, b in self.segments)

    @property
    def breakpoints(self) -> tuple[int, ...]:
        """Internal breakpoints ``x[1] .. x[L-1]``."""
        return tuple(b for _, b in self.segments[:-1])  # type: ignore[misc]

    @property
    def max_quantity(self) -> int | None:
        return self.segments[-1][1]

    @property
    def widths(self) -> tuple[int | None, ...]:
        """Interval widths ``x[l] - x[l-1]``; ``None`` for an unbounded last segment."""
        out: list[int | None] = []
        prev = 0
        for _, bound in self.segments:
            out.append(None if bound is None else bound - prev)
            prev = bound if bound is not None else prev
        return tuple(out)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Continuity offsets ``c[l]`` (``c[1] = 0``)."""
        out = [0]
        for m in range(1, len(self.segments)):
            prev_price, prev_bound = self.segments[m - 1]
            out.append(out[-1] + (prev_price - self.segments[m][0]) * prev_bound)  # type: ignore[operator]
        return tuple(out)

    def segment_index(self, quantity: int) -> int:
        """Zero-based index of the segment containing ``quantity``."""
        if quantity < 0:
            raise OutOfRangeError(f"negative quantity {quantity}")
        for idx, (_, bound) in enumerate(self.segments):
            if bound is None or quantity <= bound:
                return idx
        raise OutOfRangeError(
            f"quantity {quantity} exceeds the curve bound {self.max_quantity}"
        )

    def segment_start(self, idx: int) -> int:
        """Smallest quantity inside segment ``idx``."""
        return 1 if idx == 0 else self.segments[idx - 1][1] + 1  # type: ignore[operator]

    # -- serialization ------------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "segments": [
                {"unit_price_cents": p, "upper_bound": b} for p, b in self.segments
            ]
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PriceCurve":
        try:
            segs = [(s["unit_price_cents"], s.get("upper_bound")) for s in data["segments"]]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed price curve: {exc}") from exc
        return cls(tuple(segs))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PriceCurve":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CostBreakdown:
    purchase: int = 0
    shipment: int = 0
    tickets: int = 0
    pickup: int = 0
    total: int = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        expected = self.purchase + self.shipment + self.tickets + self.pickup
        if self.total is None:
            object.__setattr__(self, "total", expected)
        elif self.total != expected:
            raise ConfigurationError(
                f"cost total {self.total} != sum of components {expected}"
            )

    @property
    def logistics(self) -> int:
        """Shipment plus tickets plus pickup."""
        return self.shipment + self.tickets + self.pickup

    def to_dict(self) -> dict[str, int]:
        return {
            "purchase": self.purchase,
            "shipment": self.shipment,
            "tickets": self.tickets,
            "pickup": self.pickup,
            "total": self.total,
        }


def _check_quantity(curve: PriceCurve, quantity: int) -> int:
    if quantity != int(quantity):
        raise OutOfRangeError(f"quantity must be an integer, got {quantity!r}")
    return curve.segment_index(int(quantity))


def seller_total_price(curve: PriceCurve, quantity: int) -> int:
    """Seller's all-units price: the unit price of the segment times the quantity.

    A zero quantity costs nothing.  Raises :class:`OutOfRangeError` beyond the
    last bounded segment.
    """
    idx = _check_quantity(curve, quantity)
    return curve.segments[idx][0] * int(quantity)


def fair_total_price(curve: PriceCurve, quantity: int) -> int:
    """Continuous e-fair price ``f[l] * q + c[l]``; concave and non-decreasing."""
    idx = _check_quantity(curve, quantity)
    return curve.segments[idx][0] * int(quantity) + curve.offsets[idx]


def buyer_savings(curve: PriceCurve, quantity: int) -> int:
    """First-segment linear cost minus the e-fair price."""
    return curve.slopes[0] * int(quantity) - fair_total_price(curve, quantity)


def manager_revenue(fair_curve: PriceCurve, seller_curve: PriceCurve, quantity: int) -> int:
    if fair_curve.bounds != seller_curve.bounds:
        raise ConfigurationError(
            "fair and seller curves must share breakpoints: "
            f"{fair_curve.bounds} != {seller_curve.bounds}"
        )
    return fair_total_price(fair_curve, quantity) - seller_total_price(seller_curve, quantity)


# -- validation ---------------------------------------------------------------------


class Violation(NamedTuple):
    bound: str
    quantity: int | None
    detail: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def accepted(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.accepted

    @property
    def first_violation(self) -> int | None:
        qs = [v.quantity for v in self.violations if v.quantity is not None]
        return min(qs) if qs else None


def _first_negative(a: int, b: int, lo: int, hi: int | None) -> int | None:
    """Smallest integer ``q`` in ``[lo, hi]`` with ``a*q + b < 0`` (``hi=None``: no cap)."""
    if a >= 0:
        return lo if a * lo + b < 0 else None
    # a < 0: a*q + b < 0  <=>  q > b / (-a)
    q = max(lo, b // (-a) + 1)
    if hi is not None and q > hi:
        return None
    return q


def validate_fair_curve(fair_curve: PriceCurve, seller_curve: PriceCurve) -> ValidationReport:
    """Check that the fair price lies between the seller price and the list-price line.

    Both totals are linear between consecutive breakpoints of either curve, so
    each piece is checked in closed form and the first violating quantity is
    reported exactly.
    """
    # strictly decreasing fair slopes are already a PriceCurve invariant
    violations: list[Violation] = []
    caps = [b for b in (fair_curve.max_quantity, seller_curve.max_quantity) if b is not None]
    cap = min(caps) if caps else None
    cuts = sorted(
        {b for b in fair_curve.breakpoints + seller_curve.breakpoints if cap is None or b < cap}
    )
    list_price = seller_curve.slopes[0]

    lo = 1
    found = {"lower": None, "upper": None}
    for hi in cuts + [cap]:
        if hi is not None and hi < lo:
            continue
        fi = fair_curve.segment_index(lo)
        si = seller_curve.segment_index(lo)
        f, c = fair_curve.segments[fi][0], fair_curve.offsets[fi]
        fs = seller_curve.segments[si][0]
        # fair - seller >= 0
        q_low = _first_negative(f - fs, c, lo, hi)
        # list * q - fair >= 0
        q_up = _first_negative(list_price - f, -c, lo, hi)
        if q_low is not None and found["lower"] is None:
            found["lower"] = q_low
        if q_up is not None and found["upper"] is None:
            found["upper"] = q_up
        if hi is None:
            break
        lo = hi + 1

    if found["lower"] is not None:
        q = found["lower"]
        violations.append(
            Violation(
                "seller_lower_bound",
                q,
                f"fair price {format_cents(fair_total_price(fair_curve, q))} below seller "
                f"price {format_cents(seller_total_price(seller_curve, q))} at q={q}",
            )
        )
    if found["upper"] is not None:
        q = found["upper"]
        violations.append(
            Violation(
                "list_price_upper_bound",
                q,
                f"fair price {format_cents(fair_total_price(fair_curve, q))} above list "
                f"price {format_cents(list_price * q)} at q={q}",
            )
        )
    return ValidationReport(tuple(violations))


# -- anomalies ----------------------------------------------------------------------


class PriceAnomaly(NamedTuple):
    quantity: int
    cheaper_quantity: int
    prices: tuple[int, int]


def find_price_anomalies(curve: PriceCurve) -> list[PriceAnomaly]:
    """Quantities that cost more than some larger order on the seller's curve.

    For each such ``q`` the smallest ``q' > q`` with a lower total is reported.
    The cheapest order inside a segment is its first quantity, so only segment
    starts need to be compared.
    """
    segs = curve.segments
    starts = [curve.segment_start(i) for i in range(len(segs))]
    start_price = [segs[i][0] * starts[i] for i in range(len(segs))]
    out: list[PriceAnomaly] = []
    for idx in range(len(segs) - 1):
        later = range(idx + 1, len(segs))
        floor_price = min(start_price[j] for j in later)
        price = segs[idx][0]
        q = segs[idx][1]
        assert q is not None
        while q >= starts[idx] and price * q > floor_price:
            total = price * q
            j = next(j for j in later if start_price[j] < total)
            out.append(PriceAnomaly(q, starts[j], (total, start_price[j])))
            q -= 1
    out.sort()
    return out


def curve_from_euros(pairs: Sequence[tuple[float | str, int | None]]) -> PriceCurve:
    """Build a curve from ``(euro_price, upper_bound)`` pairs."""
    return PriceCurve(tuple((to_cents(p), b) for p, b in pairs))
