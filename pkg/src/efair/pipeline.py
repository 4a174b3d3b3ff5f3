"""End-to-end fair optimization: prefilter, assignment, transshipment."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

from efair.errors import (
    DemandExceedsSupplyError,
    LogisticsInfeasibleError,
    SoldOut,
    SolverLimitError,
)
from efair.geo import Buyer, Reachability, home_pop, prefilter_pops
from efair.model import (
    FairInstance,
    Plan,
    assemble_plan,
    build_assignment_problem,
    build_joint_problem,
    build_transshipment_problem,
    check_plan,
    plan_from_solutions,
)
from efair.pricing import buyer_savings, manager_revenue
from efair.solver import INFEASIBLE, MilpSolution, MilpSolver, solve_milp

REPORT_FIELDS = [
    "run",
    "buyers",
    "total_cost",
    "direct_cost",
    "purchase_savings",
    "shipment_savings",
    "fair_revenue",
    "status",
    "reason",
]


@dataclass(frozen=True)
class SolveStats:
    assignment_status: str
    assignment_nodes: int
    transshipment_status: str
    transshipment_nodes: int
    used_direct_fallback: bool = False
    joint_total: int | None = None  # diagnostic: cost of the joint model, if requested

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FairOutcome:
    """Optimized plan with savings against the all-direct comparator (cents)."""

    plan: Plan
    direct_plan: Plan
    purchase_savings: int
    manager_revenue: int
    stats: SolveStats

    @property
    def total_cost(self) -> int:
        return self.plan.cost.total

    @property
    def direct_cost(self) -> int:
        return self.direct_plan.cost.total

    @property
    def shipment_savings(self) -> int:
        return self.direct_plan.cost.logistics - self.plan.cost.logistics

    @property
    def per_buyer_charge(self) -> Mapping[str, int]:
        return self.plan.per_buyer_charge

    @property
    def status(self) -> str:
        ok = self.stats.transshipment_status == "optimal" and self.stats.assignment_status == "optimal"
        return "optimal" if ok else "feasible"

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "total_cost": self.total_cost,
            "direct_cost": self.direct_cost,
            "purchase_savings": self.purchase_savings,
            "shipment_savings": self.shipment_savings,
            "manager_revenue": self.manager_revenue,
            "cost": self.plan.cost.to_dict(),
            "per_buyer_charge": dict(sorted(self.per_buyer_charge.items())),
            "plan": self.plan.to_dict(),
            "stats": self.stats.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def summary_row(self, run: int | str = 0, reason: str = "") -> dict[str, Any]:
        return {
            "run": run,
            "buyers": len(self.per_buyer_charge),
            "total_cost": self.total_cost,
            "direct_cost": self.direct_cost,
            "purchase_savings": self.purchase_savings,
            "shipment_savings": self.shipment_savings,
            "fair_revenue": self.manager_revenue,
            "status": self.status,
            "reason": reason,
        }


def _assign(instance: FairInstance, solver: MilpSolver) -> tuple[MilpSolution, dict[str, int]]:
    problem = build_assignment_problem(instance)
    if problem.infeasible_reason:
        raise DemandExceedsSupplyError(problem.infeasible_reason, "total_demand")
    sol = solver(problem)
    if sol.status == INFEASIBLE:
        raise DemandExceedsSupplyError(sol.message or "assignment infeasible", "total_demand")
    if not sol.has_solution:
        raise SolverLimitError(f"assignment phase: {sol.status} without a solution")
    return sol, {s.id: sol.int_value(f"x[{s.id}]") for s in instance.sellers}


def _home_only(instance: FairInstance) -> Reachability:
    full = prefilter_pops(instance.buyers, [p for p in instance.pops if p.is_dummy])
    return full


def direct_plan(instance: FairInstance, x: Mapping[str, int], solver: MilpSolver = solve_milp) -> Plan:
    """Cheapest plan in which every buyer is served only at home."""
    active = [s.id for s in instance.sellers if int(x.get(s.id, 0)) > 0]
    if len(active) == 1:
        (sid,) = active
        shipments = {(sid, home_pop(b).id): b.demand for b in instance.buyers}
        withdrawals = {(home_pop(b).id, b.id): b.demand for b in instance.buyers}
        return assemble_plan(instance, x, shipments, withdrawals)
    problem = build_transshipment_problem(instance, x, _home_only(instance))
    sol = solver(problem)
    if not sol.has_solution:
        raise SolverLimitError(f"direct comparator: {sol.status}")
    return _read_logistics(instance, x, sol)


def _read_logistics(instance: FairInstance, x: Mapping[str, int], sol: MilpSolution) -> Plan:
    shipments, arcs, withdrawals, pickups = {}, [], {}, []
    for s in instance.sellers:
        for p in instance.pops:
            q = round(sol.values.get(f"xs[{s.id},{p.id}]", 0.0))
            if q:
                shipments[(s.id, p.id)] = q
            if round(sol.values.get(f"a[{s.id},{p.id}]", 0.0)):
                arcs.append((s.id, p.id))
    for p in instance.pops:
        for b in instance.buyers:
            q = round(sol.values.get(f"y[{p.id},{b.id}]", 0.0))
            if q:
                withdrawals[(p.id, b.id)] = q
            if round(sol.values.get(f"b[{p.id},{b.id}]", 0.0)):
                pickups.append((p.id, b.id))
    return assemble_plan(instance, x, shipments, withdrawals, arcs, pickups)


def baseline_direct_cost(
    instance: FairInstance, x: Mapping[str, int], solver: MilpSolver = solve_milp
) -> int:
    """Total cost (cents) when nothing is aggregated: home delivery only, same purchases."""
    return direct_plan(instance, x, solver).cost.total


def optimize_fair(
    instance: FairInstance,
    solver: MilpSolver = solve_milp,
    joint_check: bool = False,
) -> FairOutcome:
    """Run the three phases and return the plan with savings and revenue.

    ``joint_check`` also solves purchase and logistics together and records
    that cost in the stats, to measure what the sequential split gives up.
    """
    reach = prefilter_pops(instance.buyers, instance.pops)
    assignment, x = _assign(instance, solver)

    problem = build_transshipment_problem(instance, x, reach)
    if problem.infeasible_reason:
        cls = "pop_capacity" if "capacity" in problem.infeasible_reason else "single_pop"
        raise LogisticsInfeasibleError(problem.infeasible_reason, cls)
    trans = solver(problem)
    if trans.status == INFEASIBLE:
        raise LogisticsInfeasibleError(trans.message or "transshipment infeasible", "flow")

    base = direct_plan(instance, x, solver)
    fallback = False
    if trans.has_solution:
        plan = plan_from_solutions(instance, assignment, trans)
        if plan.cost.total > base.cost.total:
            # only possible when the search stopped early
            plan, fallback = base, True
    else:
        plan, fallback = base, True

    problems = check_plan(instance, plan, reach)
    if problems:
        raise AssertionError(f"solver returned an invalid plan: {problems[:3]}")

    joint_total = None
    if joint_check:
        joint = solver(build_joint_problem(instance, reach))
        if joint.has_solution:
            joint_total = round(joint.objective)

    purchase_savings = 0
    revenue = 0
    for s in instance.sellers:
        q = x[s.id]
        purchase_savings += buyer_savings(s.fair_curve, q)
        if s.seller_curve is not None:
            revenue += manager_revenue(s.fair_curve, s.seller_curve, q)
    stats = SolveStats(
        assignment.status,
        assignment.node_count,
        trans.status,
        trans.node_count,
        fallback,
        joint_total,
    )
    return FairOutcome(plan, base, purchase_savings, revenue, stats)


@dataclass
class RunningFair:
    """A fair that re-optimizes from scratch on every join after the first.

    Joins are serialized by a lock, so concurrent callers are handled in the
    order they acquire it.
    """

    template: FairInstance
    solver: MilpSolver = solve_milp
    buyers: list[Buyer] = field(default_factory=list)
    outcome: FairOutcome | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def demand(self) -> int:
        return sum(b.demand for b in self.buyers)

    @property
    def instance(self) -> FairInstance:
        return self.template.with_buyers(self.buyers)

    def join(self, buyer: Buyer) -> FairOutcome | None:
        """Add ``buyer``; returns the new outcome, or ``None`` for the first buyer.

        Raises :class:`SoldOut` (and leaves the fair unchanged) if the
        buyer's demand would exceed total supply.
        """
        with self._lock:
            if self.demand + buyer.demand > self.template.total_supply:
                raise SoldOut(
                    f"buyer {buyer.id} wants {buyer.demand}; "
                    f"{self.template.total_supply - self.demand} left"
                )
            self.buyers.append(buyer)
            if len(self.buyers) == 1:
                return None
            self.outcome = optimize_fair(self.instance, self.solver)
            return self.outcome


def reoptimize_on_join(state: RunningFair, new_buyer: Buyer) -> FairOutcome | None:
    return state.join(new_buyer)
