"""MILP formulations of the assignment (phase 2) and transshipment (phase 3) steps.

All money is in integer cents.  Variable names follow one scheme so that
solutions can be read back by name:

``x[i]``, ``d[i,l]``, ``w[i,l]``  seller quantity, segment fill, segment switch
``xs[i,j]``, ``a[i,j]``           seller -> POP quantity and arc indicator
``y[j,k]``, ``b[j,k]``            POP -> buyer quantity and withdrawal indicator
``g[m]``, ``u[m]``                withdrawal-ticket segment fill and switch

Segment indices ``l`` and ``m`` are 1-based in names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import floor
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from efair.errors import ConfigurationError
from efair.geo import (
    Buyer,
    GeoPoint,
    Pop,
    Reachability,
    haversine_km,
    parse_timestamp,
    pickup_cost,
    with_home_pops,
)
from efair.pricing import CostBreakdown, PriceCurve, fair_total_price, validate_fair_curve
from efair.solver import BINARY, INTEGER, MilpProblem, MilpSolution, ProblemBuilder


@dataclass(frozen=True)
class Seller:
    id: str
    fair_curve: PriceCurve
    supply: int
    seller_curve: PriceCurve | None = None

    def __post_init__(self) -> None:
        if self.supply < 0:
            raise ConfigurationError(f"seller {self.id}: supply must be >= 0")
        if self.seller_curve is not None:
            report = validate_fair_curve(self.fair_curve, self.seller_curve)
            if not report.accepted:
                v = report.violations[0]
                raise ConfigurationError(
                    f"seller {self.id}: fair curve breaks {v.bound} at quantity {v.quantity}"
                )

    @property
    def capacity(self) -> int:
        """Largest quantity this seller can deliver on its fair curve."""
        cap = self.fair_curve.max_quantity
        return self.supply if cap is None else min(self.supply, cap)


@dataclass(frozen=True)
class FairInstance:
    """One fair: sellers, POPs (home POPs are added automatically) and buyers.

    ``shipment_cost`` is the per-arc constant in cents, ``beta`` the pickup rate
    in cents per km.  ``ticket_curve`` prices withdrawals at real POPs; ``None``
    makes them free.
    """

    sellers: tuple[Seller, ...]
    pops: tuple[Pop, ...]
    buyers: tuple[Buyer, ...]
    shipment_cost: int
    beta: float
    ticket_curve: PriceCurve | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sellers", tuple(sorted(self.sellers, key=lambda s: s.id)))
        object.__setattr__(self, "buyers", tuple(sorted(self.buyers, key=lambda b: b.id)))
        pops = sorted(with_home_pops(self.buyers, self.pops), key=lambda p: p.id)
        object.__setattr__(self, "pops", tuple(pops))
        for kind, items in (("seller", self.sellers), ("POP", self.pops), ("buyer", self.buyers)):
            ids = [it.id for it in items]
            if len(set(ids)) != len(ids):
                raise ConfigurationError(f"duplicate {kind} ids")
        if self.shipment_cost < 0 or self.beta < 0:
            raise ConfigurationError("shipment cost and beta must be >= 0")

    @property
    def total_demand(self) -> int:
        return sum(b.demand for b in self.buyers)

    @property
    def total_supply(self) -> int:
        return sum(s.capacity for s in self.sellers)

    def seller(self, sid: str) -> Seller:
        return next(s for s in self.sellers if s.id == sid)

    def buyer(self, bid: str) -> Buyer:
        return next(b for b in self.buyers if b.id == bid)

    def pop(self, pid: str) -> Pop:
        return next(p for p in self.pops if p.id == pid)

    def with_buyers(self, buyers: Iterable[Buyer]) -> "FairInstance":
        real = tuple(p for p in self.pops if not p.is_dummy)
        return FairInstance(self.sellers, real, tuple(buyers), self.shipment_cost,
                            self.beta, self.ticket_curve)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "shipment_cost_cents": self.shipment_cost,
            "beta_cents_per_km": self.beta,
            "ticket_curve": self.ticket_curve.to_dict() if self.ticket_curve else None,
            "sellers": [
                {
                    "id": s.id,
                    "supply": s.supply,
                    "fair_curve": s.fair_curve.to_dict(),
                    "seller_curve": s.seller_curve.to_dict() if s.seller_curve else None,
                }
                for s in self.sellers
            ],
            "pops": [
                {"id": p.id, "lat": p.location.lat, "lon": p.location.lon, "capacity": p.capacity}
                for p in self.pops
                if not p.is_dummy
            ],
            "buyers": [
                {
                    "id": b.id,
                    "lat": b.location.lat,
                    "lon": b.location.lon,
                    "demand": b.demand,
                    "max_range_km": b.max_range_km,
                    "arrival_time": b.arrival_time.isoformat() if b.arrival_time else None,
                }
                for b in self.buyers
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FairInstance":
        try:
            sellers = [
                Seller(
                    str(s["id"]),
                    PriceCurve.from_dict(s["fair_curve"]),
                    int(s["supply"]),
                    PriceCurve.from_dict(s["seller_curve"]) if s.get("seller_curve") else None,
                )
                for s in data["sellers"]
            ]
            pops = [
                Pop(str(p["id"]), GeoPoint(p["lat"], p["lon"]), int(p["capacity"]))
                for p in data.get("pops", [])
            ]
            buyers = [
                Buyer(
                    str(b["id"]),
                    GeoPoint(b["lat"], b["lon"]),
                    int(b["demand"]),
                    float(b["max_range_km"]),
                    parse_timestamp(b["arrival_time"]) if b.get("arrival_time") else None,
                )
                for b in data["buyers"]
            ]
            ticket = data.get("ticket_curve")
            return cls(
                tuple(sellers),
                tuple(pops),
                tuple(buyers),
                int(data["shipment_cost_cents"]),
                float(data["beta_cents_per_km"]),
                PriceCurve.from_dict(ticket) if ticket else None,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed instance: missing {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FairInstance":
        return cls.from_dict(json.loads(text))


# -- names ----------------------------------------------------------------------


def v_x(i: str) -> str:
    return f"x[{i}]"


def v_delta(i: str, l: int) -> str:
    return f"d[{i},{l}]"


def v_w(i: str, l: int) -> str:
    return f"w[{i},{l}]"


def v_xs(i: str, j: str) -> str:
    return f"xs[{i},{j}]"


def v_a(i: str, j: str) -> str:
    return f"a[{i},{j}]"


def v_y(j: str, k: str) -> str:
    return f"y[{j},{k}]"


def v_b(j: str, k: str) -> str:
    return f"b[{j},{k}]"


def v_gamma(m: int) -> str:
    return f"g[{m}]"


def v_u(m: int) -> str:
    return f"u[{m}]"


def _add_cascade(pb: ProblemBuilder, curve: PriceCurve, fill, switch, cap: int) -> list[str]:
    """Segment fill variables with left-to-right switches; returns fill names.

    An unbounded last segment gets width ``cap``.
    """
    widths = [cap if w is None else w for w in curve.widths]
    L = len(widths)
    fills = [pb.add_var(fill(l + 1), INTEGER, 0, widths[l], curve.slopes[l]) for l in range(L)]
    switches = [pb.add_var(switch(l + 1), BINARY) for l in range(L - 1)]
    for l in range(L):
        if l < L - 1:
            pb.add_constraint({fills[l]: 1, switches[l]: -widths[l]}, ">=", 0, f"fill_lo[{fill(l + 1)}]")
        if l > 0:
            pb.add_constraint({fills[l]: 1, switches[l - 1]: -widths[l]}, "<=", 0, f"fill_hi[{fill(l + 1)}]")
    return fills


def build_assignment_problem(instance: FairInstance) -> MilpProblem:
    """Split total demand across sellers at minimum fair-curve purchase cost."""
    y_fair = instance.total_demand
    pb = ProblemBuilder("assignment")
    pb.objective_step = 1
    if y_fair > instance.total_supply:
        pb.infeasible_reason = (
            f"demand exceeds supply: {y_fair} requested, {instance.total_supply} available"
        )
    for s in instance.sellers:
        xi = pb.add_var(v_x(s.id), INTEGER, 0, s.capacity)
        fills = _add_cascade(
            pb, s.fair_curve, lambda l, i=s.id: v_delta(i, l), lambda l, i=s.id: v_w(i, l), y_fair
        )
        pb.add_constraint([(xi, 1)] + [(f, -1) for f in fills], "=", 0, f"split[{s.id}]")
    pb.add_constraint({v_x(s.id): 1 for s in instance.sellers}, "=", y_fair, "total_demand")
    return pb.build()


def purchase_costs(instance: FairInstance, x: Mapping[str, int]) -> dict[str, int]:
    """Phase-2 purchase cost per seller, from the fair curve."""
    return {s.id: fair_total_price(s.fair_curve, int(x.get(s.id, 0))) for s in instance.sellers}


def build_transshipment_problem(
    instance: FairInstance, x: Mapping[str, int], reach: Reachability
) -> MilpProblem:
    """Route the fixed seller quantities ``x`` through POPs to buyers.

    ``reach`` must come from :func:`efair.geo.prefilter_pops` on this
    instance's buyers and POPs.  Only its surviving POPs are used; pairs it
    marks unreachable get no variables (equivalently, fixed to zero).
    """
    if sum(int(v) for v in x.values()) != instance.total_demand:
        raise ConfigurationError("seller quantities must add up to the total demand")
    pb = ProblemBuilder("transshipment")
    pb.objective_step = 1
    phi = purchase_costs(instance, x)
    supply = {
        s.id: (int(x[s.id]), phi[s.id] / int(x[s.id]), int(x[s.id]))
        for s in instance.sellers
        if int(x.get(s.id, 0)) > 0
    }
    _add_logistics(pb, instance, reach, supply)
    return pb.build()


def build_joint_problem(instance: FairInstance, reach: Reachability) -> MilpProblem:
    """Purchase and logistics in one model (diagnostic; small instances only)."""
    pb = ProblemBuilder("joint")
    pb.objective_step = 1
    base = build_assignment_problem(instance)
    for v in base.variables:
        pb.add_var(v.name, v.kind, v.lower, v.upper, v.cost)
    names = [v.name for v in base.variables]
    for con in base.constraints:
        pb.add_constraint([(names[c], a) for c, a in con.coefs], con.relation, con.rhs, con.name)
    pb.infeasible_reason = base.infeasible_reason
    supply = {s.id: (s.capacity, 0.0, v_x(s.id)) for s in instance.sellers if s.capacity > 0}
    _add_logistics(pb, instance, reach, supply)
    return pb.build()


def _add_logistics(
    pb: ProblemBuilder,
    instance: FairInstance,
    reach: Reachability,
    supply: Mapping[str, tuple[int, float, int | str]],
) -> None:
    """Arc, withdrawal and ticket blocks.

    ``supply`` maps seller id to (max shipped, unit pass-through cost, total
    shipped) where the total is a constant or the name of a variable.
    """
    y_fair = instance.total_demand
    S = instance.shipment_cost
    sellers = sorted(supply)
    buyer_pos = {b.id: k for k, b in enumerate(reach.buyers)}
    order = sorted(range(len(reach.pops)), key=lambda j: reach.pops[j].id)
    pops = [reach.pops[j] for j in order]
    buyers = sorted(instance.buyers, key=lambda b: b.id)

    reachable: dict[str, list[Buyer]] = {}
    for jj, pop in zip(order, pops):
        reachable[pop.id] = [b for b in buyers if reach.matrix[jj, buyer_pos[b.id]]]
    if sum(p.capacity for p in pops) < y_fair:
        pb.infeasible_reason = pb.infeasible_reason or "POP capacity below total demand"

    for i in sellers:
        cap, unit, _ = supply[i]
        for p in pops:
            pb.add_var(v_xs(i, p.id), INTEGER, 0, min(cap, p.capacity), unit)
            pb.add_var(v_a(i, p.id), BINARY, cost=S)
    withdrawals = []
    for p in pops:
        for b in reachable[p.id]:
            pb.add_var(v_y(p.id, b.id), INTEGER, 0, b.demand)
            pb.add_var(v_b(p.id, b.id), BINARY, cost=pickup_cost(b, p, instance.beta))
            if not p.is_dummy:
                withdrawals.append(v_b(p.id, b.id))

    for i in sellers:
        total = supply[i][2]
        terms = [(v_xs(i, p.id), 1) for p in pops]
        if isinstance(total, str):
            pb.add_constraint(terms + [(total, -1)], "=", 0, f"ship_out[{i}]")
        else:
            pb.add_constraint(terms, "=", total, f"ship_out[{i}]")
        for p in pops:
            pb.add_constraint({v_xs(i, p.id): 1, v_a(i, p.id): -y_fair}, "<=", 0,
                              f"arc_link[{i},{p.id}]")
    for p in pops:
        inflow = [(v_xs(i, p.id), 1) for i in sellers]
        if inflow:
            pb.add_constraint(inflow, "<=", p.capacity, f"pop_capacity[{p.id}]")
        outflow = [(v_y(p.id, b.id), -1) for b in reachable[p.id]]
        if inflow or outflow:
            pb.add_constraint(inflow + outflow, "=", 0, f"flow[{p.id}]")
        for b in reachable[p.id]:
            pb.add_constraint({v_y(p.id, b.id): 1, v_b(p.id, b.id): -y_fair}, "<=", 0,
                              f"pickup_link[{p.id},{b.id}]")
    for b in buyers:
        ps = [p for p in pops if b in reachable[p.id]]
        if not ps:
            pb.infeasible_reason = f"buyer {b.id} cannot reach any POP"
        pb.add_constraint({v_y(p.id, b.id): 1 for p in ps}, "=", b.demand, f"demand[{b.id}]")
        pb.add_constraint({v_b(p.id, b.id): 1 for p in ps}, "=", 1, f"single_pop[{b.id}]")

    if instance.ticket_curve is not None and withdrawals:
        gammas = _add_cascade(pb, instance.ticket_curve, v_gamma, v_u, len(withdrawals))
        pb.add_constraint([(g, 1) for g in gammas] + [(w, -1) for w in withdrawals], "=", 0,
                          "ticket_count")


# -- plans ----------------------------------------------------------------------


@dataclass(frozen=True)
class Plan:
    """A concrete fair plan.  Arc maps hold only used arcs."""

    x: Mapping[str, int]
    delta: Mapping[str, tuple[int, ...]]
    w: Mapping[str, tuple[int, ...]]
    shipments: Mapping[tuple[str, str], int]  # (seller, pop) -> x_ij
    arcs: frozenset[tuple[str, str]]  # a_ij = 1
    withdrawals: Mapping[tuple[str, str], int]  # (pop, buyer) -> y_jk
    pickups: frozenset[tuple[str, str]]  # b_jk = 1
    gamma: tuple[int, ...]
    u: tuple[int, ...]
    cost: CostBreakdown
    per_buyer_charge: Mapping[str, int] = field(default_factory=dict)

    def pop_of(self, buyer_id: str) -> str | None:
        return next((j for j, k in sorted(self.pickups) if k == buyer_id), None)

    @property
    def tickets_used(self) -> int:
        return sum(self.gamma)

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": dict(sorted(self.x.items())),
            "delta": {k: list(v) for k, v in sorted(self.delta.items())},
            "w": {k: list(v) for k, v in sorted(self.w.items())},
            "x_ij": [
                {"seller": i, "pop": j, "quantity": q, "a": int((i, j) in self.arcs)}
                for (i, j), q in sorted(self.shipments.items())
            ],
            "a_ij": [list(arc) for arc in sorted(self.arcs)],
            "y_jk": [
                {"pop": j, "buyer": k, "quantity": q, "b": int((j, k) in self.pickups)}
                for (j, k), q in sorted(self.withdrawals.items())
            ],
            "b_jk": [list(arc) for arc in sorted(self.pickups)],
            "gamma": list(self.gamma),
            "u": list(self.u),
            "cost": self.cost.to_dict(),
            "per_buyer_charge": dict(sorted(self.per_buyer_charge.items())),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Plan":
        return cls(
            x={k: int(v) for k, v in data["x"].items()},
            delta={k: tuple(v) for k, v in data["delta"].items()},
            w={k: tuple(v) for k, v in data["w"].items()},
            shipments={(r["seller"], r["pop"]): int(r["quantity"]) for r in data["x_ij"]},
            arcs=frozenset(tuple(a) for a in data["a_ij"]),
            withdrawals={(r["pop"], r["buyer"]): int(r["quantity"]) for r in data["y_jk"]},
            pickups=frozenset(tuple(b) for b in data["b_jk"]),
            gamma=tuple(data["gamma"]),
            u=tuple(data["u"]),
            cost=CostBreakdown(**data["cost"]),
            per_buyer_charge={k: int(v) for k, v in data["per_buyer_charge"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Plan":
        return cls.from_dict(json.loads(text))


def plan_cost(instance: FairInstance, plan: Plan) -> CostBreakdown:
    """Recompute the cost of a plan from its decision values."""
    purchase = 0
    for s in instance.sellers:
        d = plan.delta.get(s.id, ())
        purchase += sum(f * q for f, q in zip(s.fair_curve.slopes, d))
    shipment = instance.shipment_cost * len(plan.arcs)
    tickets = 0
    if instance.ticket_curve is not None:
        tickets = sum(g * q for g, q in zip(instance.ticket_curve.slopes, plan.gamma))
    pickup = sum(
        pickup_cost(instance.buyer(k), instance.pop(j), instance.beta) for j, k in plan.pickups
    )
    return CostBreakdown(purchase, shipment, tickets, pickup)


def _fills(curve: PriceCurve, total: int) -> tuple[int, ...]:
    """Left-to-right segment fill for ``total`` units."""
    out = []
    rest = total
    for w in curve.widths:
        take = rest if w is None else min(rest, w)
        out.append(take)
        rest -= take
    return tuple(out)


def _switches(curve: PriceCurve, fills: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(w is not None and f == w and f > 0) for f, w in zip(fills, curve.widths[:-1]))


def assemble_plan(
    instance: FairInstance,
    x: Mapping[str, int],
    shipments: Mapping[tuple[str, str], int],
    withdrawals: Mapping[tuple[str, str], int],
    arcs: Iterable[tuple[str, str]] | None = None,
    pickups: Iterable[tuple[str, str]] | None = None,
) -> Plan:
    """Build a plan from flows; segment fills, tickets and charges are derived."""
    shipments = {k: int(v) for k, v in shipments.items() if int(v) > 0}
    withdrawals = {k: int(v) for k, v in withdrawals.items() if int(v) > 0}
    arcs = frozenset(arcs) if arcs is not None else frozenset(shipments)
    pickups = frozenset(pickups) if pickups is not None else frozenset(withdrawals)
    delta, w = {}, {}
    for s in instance.sellers:
        delta[s.id] = _fills(s.fair_curve, int(x.get(s.id, 0)))
        w[s.id] = _switches(s.fair_curve, delta[s.id])
    n_tickets = sum(1 for j, _ in pickups if not instance.pop(j).is_dummy)
    gamma: tuple[int, ...] = ()
    u: tuple[int, ...] = ()
    if instance.ticket_curve is not None:
        gamma = _fills(instance.ticket_curve, n_tickets)
        u = _switches(instance.ticket_curve, gamma)
    plan = Plan(
        {s.id: int(x.get(s.id, 0)) for s in instance.sellers},
        delta, w, shipments, arcs, withdrawals, pickups, gamma, u,
        CostBreakdown(),
    )
    cost = plan_cost(instance, plan)
    plan = replace(plan, cost=cost)
    return replace(plan, per_buyer_charge=split_charges(instance, plan))


def plan_from_solutions(
    instance: FairInstance, assignment: MilpSolution, transshipment: MilpSolution
) -> Plan:
    """Read phase-2 and phase-3 solver output into a :class:`Plan`."""
    av, tv = assignment.values, transshipment.values
    x = {s.id: round(av[v_x(s.id)]) for s in instance.sellers}
    delta = {
        s.id: tuple(round(av[v_delta(s.id, l + 1)]) for l in range(s.fair_curve.num_segments))
        for s in instance.sellers
    }
    w = {
        s.id: tuple(round(av[v_w(s.id, l + 1)]) for l in range(s.fair_curve.num_segments - 1))
        for s in instance.sellers
    }
    shipments, arcs, withdrawals, pickups = {}, set(), {}, set()
    for s in instance.sellers:
        for p in instance.pops:
            q = round(tv.get(v_xs(s.id, p.id), 0.0))
            if q:
                shipments[(s.id, p.id)] = q
            if round(tv.get(v_a(s.id, p.id), 0.0)):
                arcs.add((s.id, p.id))
    for p in instance.pops:
        for b in instance.buyers:
            q = round(tv.get(v_y(p.id, b.id), 0.0))
            if q:
                withdrawals[(p.id, b.id)] = q
            if round(tv.get(v_b(p.id, b.id), 0.0)):
                pickups.add((p.id, b.id))
    gamma: tuple[int, ...] = ()
    u: tuple[int, ...] = ()
    if instance.ticket_curve is not None:
        M = instance.ticket_curve.num_segments
        gamma = tuple(round(tv.get(v_gamma(m + 1), 0.0)) for m in range(M))
        u = tuple(round(tv.get(v_u(m + 1), 0.0)) for m in range(M - 1))
    plan = Plan(x, delta, w, shipments, frozenset(arcs), withdrawals, frozenset(pickups),
                gamma, u, CostBreakdown())
    plan = replace(plan, cost=plan_cost(instance, plan))
    return replace(plan, per_buyer_charge=split_charges(instance, plan))


# -- verification ---------------------------------------------------------------


class PlanViolation(NamedTuple):
    constraint: str  # short code, e.g. "flow"
    where: str  # entity ids
    detail: str


def _cascade_violations(code: str, where: str, curve: PriceCurve, fills, switches, cap: int):
    widths = [cap if w is None else w for w in curve.widths]
    out = []
    if len(fills) != len(widths) or len(switches) != len(widths) - 1:
        return [PlanViolation(code, where, "wrong number of segment values")]
    for l, (f, w) in enumerate(zip(fills, widths)):
        if not 0 <= f <= w:
            out.append(PlanViolation(code, where, f"segment {l + 1} fill {f} outside [0, {w}]"))
        if l < len(switches) and f < w * switches[l]:
            out.append(PlanViolation(code, where, f"segment {l + 1} switched on but not full"))
        if l > 0 and f > w * switches[l - 1]:
            out.append(PlanViolation(code, where, f"segment {l + 1} used before segment {l} is full"))
    for l in range(1, len(switches)):
        if switches[l] > switches[l - 1]:
            out.append(PlanViolation(code, where, f"switch {l + 1} on while switch {l} is off"))
    return out


def check_plan(
    instance: FairInstance, plan: Plan, reach: Reachability | None = None
) -> list[PlanViolation]:
    """Evaluate every model constraint and the cost identity on ``plan``.

    Returns an empty list iff the plan is feasible and its cost is exact.
    Reachability defaults to each buyer's own range.
    """
    out: list[PlanViolation] = []
    y_fair = instance.total_demand
    pops = {p.id: p for p in instance.pops}
    buyers = {b.id: b for b in instance.buyers}

    if sum(plan.x.values()) != y_fair:
        out.append(PlanViolation("total_demand", "fair", f"sum x_i = {sum(plan.x.values())} != {y_fair}"))
    for s in instance.sellers:
        xi = plan.x.get(s.id, 0)
        if xi > s.supply:
            out.append(PlanViolation("supply", s.id, f"x_i = {xi} > e_i = {s.supply}"))
        d = plan.delta.get(s.id, ())
        out += _cascade_violations("segment_cascade", s.id, s.fair_curve, d, plan.w.get(s.id, ()), y_fair)
        if sum(d) != xi:
            out.append(PlanViolation("segment_split", s.id, f"sum of segment fills {sum(d)} != x_i = {xi}"))
        shipped = sum(q for (i, _), q in plan.shipments.items() if i == s.id)
        if shipped != xi:
            out.append(PlanViolation("ship_out", s.id, f"sum_j x_ij = {shipped} != x_i = {xi}"))

    for (i, j), q in plan.shipments.items():
        if q < 0:
            out.append(PlanViolation("nonnegativity", f"{i}->{j}", f"x_ij = {q}"))
        if q > y_fair * ((i, j) in plan.arcs):
            out.append(PlanViolation("arc_link", f"{i}->{j}", f"x_ij = {q} with a_ij = 0"))
    for p in instance.pops:
        inflow = sum(q for (_, j), q in plan.shipments.items() if j == p.id)
        outflow = sum(q for (j, _), q in plan.withdrawals.items() if j == p.id)
        if inflow > p.capacity:
            out.append(PlanViolation("pop_capacity", p.id, f"inflow {inflow} > capacity {p.capacity}"))
        if inflow != outflow:
            out.append(PlanViolation("flow", p.id, f"inflow {inflow} != outflow {outflow}"))

    for (j, k), q in plan.withdrawals.items():
        if q < 0:
            out.append(PlanViolation("nonnegativity", f"{j}->{k}", f"y_jk = {q}"))
        if q > y_fair * ((j, k) in plan.pickups):
            out.append(PlanViolation("pickup_link", f"{j}->{k}", f"y_jk = {q} with b_jk = 0"))
    for j, k in set(plan.withdrawals) | set(plan.pickups):
        p, b = pops.get(j), buyers.get(k)
        if p is None or b is None:
            out.append(PlanViolation("unknown_entity", f"{j}->{k}", "unknown POP or buyer"))
            continue
        if reach is not None:
            try:
                ok = reach.reachable([q.id for q in reach.pops].index(j), [q.id for q in reach.buyers].index(k))
            except ValueError:
                ok = False
        elif p.is_dummy:
            ok = p.owner == k
        else:
            ok = haversine_km(p.location, b.location) <= b.max_range_km
        if not ok:
            out.append(PlanViolation("reachability", f"{j}->{k}", "POP out of the buyer's range"))
    for b in instance.buyers:
        got = sum(q for (_, k), q in plan.withdrawals.items() if k == b.id)
        if got != b.demand:
            out.append(PlanViolation("demand", b.id, f"sum_j y_jk = {got} != y_k = {b.demand}"))
        n = sum(1 for _, k in plan.pickups if k == b.id)
        if n != 1:
            out.append(PlanViolation("single_pop", b.id, f"sum_j b_jk = {n} != 1"))

    n_tickets = sum(1 for j, _ in plan.pickups if j in pops and not pops[j].is_dummy)
    if instance.ticket_curve is not None:
        out += _cascade_violations("ticket_cascade", "tickets", instance.ticket_curve,
                                   plan.gamma, plan.u, max(n_tickets, 1))
        if sum(plan.gamma) != n_tickets:
            out.append(PlanViolation("ticket_count", "tickets",
                                     f"sum_m gamma_m = {sum(plan.gamma)} != {n_tickets} withdrawals"))

    try:
        expected = plan_cost(instance, plan)
    except (KeyError, StopIteration):
        expected = None
    if expected is not None and expected != plan.cost:
        out.append(PlanViolation("cost", "plan", f"recomputed {expected.to_dict()} != {plan.cost.to_dict()}"))
    if expected is not None:
        for s in instance.sellers:
            xi = plan.x.get(s.id, 0)
            if 0 <= xi and (s.fair_curve.max_quantity is None or xi <= s.fair_curve.max_quantity):
                exact = fair_total_price(s.fair_curve, xi)
                got = sum(f * q for f, q in zip(s.fair_curve.slopes, plan.delta.get(s.id, ())))
                if got != exact:
                    out.append(PlanViolation("purchase_price", s.id, f"{got} != fair price {exact}"))
    if plan.per_buyer_charge and sum(plan.per_buyer_charge.values()) != plan.cost.total:
        out.append(PlanViolation("charges", "plan", "per-buyer charges do not add up to the total"))
    return out


# -- cost split -----------------------------------------------------------------


def largest_remainder(shares: Mapping[str, Fraction], total: int) -> dict[str, int]:
    """Round exact shares to integers that add up to ``total``.

    Leftover units go to the largest fractional parts; ties in key order.
    """
    base = {k: floor(v) for k, v in shares.items()}
    left = total - sum(base.values())
    order = sorted(shares, key=lambda k: (-(shares[k] - base[k]), k))
    for k in order[: max(left, 0)]:
        base[k] += 1
    return base


def split_charges(instance: FairInstance, plan: Plan) -> dict[str, int]:
    """Per-buyer share of the plan cost in cents, adding up to ``plan.cost.total``.

    Purchase is split by demand.  Each used shipment arc is split among the
    buyers collecting at its POP by withdrawn quantity.  Pickup is paid by the
    buyer; ticket cost is shared equally by the buyers holding a ticket.
    """
    buyers = [b.id for b in instance.buyers]
    if not buyers:
        return {}
    y_fair = instance.total_demand
    share = {k: Fraction(plan.cost.purchase * instance.buyer(k).demand, y_fair) for k in buyers}

    pop_out: dict[str, int] = {}
    for (j, _), q in plan.withdrawals.items():
        pop_out[j] = pop_out.get(j, 0) + q
    S = instance.shipment_cost
    for _, j in plan.arcs:
        total_out = pop_out.get(j, 0)
        takers = [(k, q) for (jj, k), q in plan.withdrawals.items() if jj == j]
        if total_out == 0:
            # unused arc: spread over everyone by demand
            for k in buyers:
                share[k] += Fraction(S * instance.buyer(k).demand, y_fair)
            continue
        for k, q in takers:
            share[k] += Fraction(S * q, total_out)

    for j, k in plan.pickups:
        share[k] += pickup_cost(instance.buyer(k), instance.pop(j), instance.beta)

    holders = sorted(k for j, k in plan.pickups if not instance.pop(j).is_dummy)
    if plan.cost.tickets:
        targets = holders or buyers
        for k in targets:
            share[k] += Fraction(plan.cost.tickets, len(targets))
    return largest_remainder(share, plan.cost.total)
