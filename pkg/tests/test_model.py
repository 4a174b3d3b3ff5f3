from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from strategies import MILAN, STAPLES, offset, price_curves, random_instance

from efair.errors import ConfigurationError
from efair.geo import Buyer, Pop, prefilter_pops
from efair.model import (
    FairInstance,
    Plan,
    Seller,
    assemble_plan,
    build_assignment_problem,
    build_joint_problem,
    build_transshipment_problem,
    check_plan,
    largest_remainder,
    plan_from_solutions,
    split_charges,
)
from efair.pricing import PriceCurve, fair_total_price
from efair.solver import INFEASIBLE, OPTIMAL, solve_bruteforce, solve_milp


def instance(sellers, buyers, pops=(), S=1000, beta=15, ticket=None):
    return FairInstance(tuple(sellers), tuple(pops), tuple(buyers), S, beta, ticket)


def solve_both(inst):
    assignment = solve_milp(build_assignment_problem(inst))
    x = {s.id: assignment.int_value(f"x[{s.id}]") for s in inst.sellers}
    reach = prefilter_pops(inst.buyers, inst.pops)
    trans = solve_milp(build_transshipment_problem(inst, x, reach))
    return assignment, trans, plan_from_solutions(inst, assignment, trans), reach


def two_buyer_scenario(S):
    b1 = Buyer("b1", offset(MILAN, east_km=-1.0), 1, 5.0)
    b2 = Buyer("b2", offset(MILAN, east_km=1.0), 1, 5.0)
    return instance(
        [Seller("s", STAPLES, 100)], [b1, b2], [Pop("p", MILAN, 10)], S, 15, PriceCurve.flat(200)
    )


class TestAssignment:
    def test_single_seller_segment_one(self):
        inst = instance([Seller("s", STAPLES, 100)], [Buyer("b", MILAN, 5, 1)])
        sol = solve_milp(build_assignment_problem(inst))
        assert sol.int_value("x[s]") == 5
        assert sol.objective == 2345

    def test_scale_beats_flat(self):
        scale = Seller("scale", STAPLES, 100)
        flat = Seller("flat", PriceCurve.flat(450), 100)
        inst = instance([scale, flat], [Buyer("b", MILAN, 60, 1)])
        sol = solve_milp(build_assignment_problem(inst))
        assert sol.int_value("x[scale]") == 60 and sol.int_value("x[flat]") == 0
        assert sol.objective == fair_total_price(scale.fair_curve, 60) == 23980
        assert fair_total_price(flat.fair_curve, 60) == 27000

    def test_identical_sellers_split(self):
        sellers = [Seller("s1", STAPLES, 10), Seller("s2", STAPLES, 10)]
        inst = instance(sellers, [Buyer("b", MILAN, 15, 1)])
        prob = build_assignment_problem(inst)
        sol = solve_milp(prob)
        brute = min(
            fair_total_price(STAPLES, a) + fair_total_price(STAPLES, 15 - a)
            for a in range(5, 11)
        )
        assert sol.objective == brute == 6985
        assert sorted([sol.int_value("x[s1]"), sol.int_value("x[s2]")]) == [5, 10]
        assert solve_bruteforce(prob).objective == brute

    def test_demand_exceeds_supply_marker(self):
        inst = instance([Seller("s", STAPLES, 3)], [Buyer("b", MILAN, 5, 1)])
        prob = build_assignment_problem(inst)
        assert prob.infeasible_reason and "supply" in prob.infeasible_reason
        assert solve_milp(prob).status == INFEASIBLE

    def test_bounded_curve_limits_supply(self):
        curve = PriceCurve(((500, 4), (450, 6)))
        inst = instance([Seller("s", curve, 100)], [Buyer("b", MILAN, 7, 1)])
        assert build_assignment_problem(inst).infeasible_reason

    @settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(price_curves(max_segments=4, max_bound=40), st.integers(1, 60))
    def test_objective_is_fair_price(self, curve, q):
        if curve.max_quantity is not None and q > curve.max_quantity:
            q = curve.max_quantity
        inst = instance([Seller("s", curve, 1000)], [Buyer("b", MILAN, q, 1)])
        sol = solve_milp(build_assignment_problem(inst))
        assert sol.status == OPTIMAL
        assert round(sol.objective) == fair_total_price(curve, q)
        # intervals fill left to right
        widths = curve.widths
        fills = [sol.int_value(f"d[s,{l + 1}]") for l in range(curve.num_segments)]
        switches = [sol.int_value(f"w[s,{l + 1}]") for l in range(curve.num_segments - 1)]
        for l, on in enumerate(switches):
            if on:
                assert fills[l] == widths[l]
            if l:
                assert switches[l] <= switches[l - 1]
        assert sum(fills) == q


class TestTransshipment:
    def test_home_only(self):
        b = Buyer("b", MILAN, 3, 0.0)
        inst = instance([Seller("s", STAPLES, 10)], [b], S=1000)
        _, trans, plan, _ = solve_both(inst)
        assert plan.cost.purchase == fair_total_price(STAPLES, 3)
        assert plan.cost.shipment == 1000 and plan.cost.pickup == 0 and plan.cost.tickets == 0
        assert plan.shipments == {("s", "home:b"): 3}
        assert round(trans.objective) == plan.cost.total

    def test_shared_pop_when_shipping_is_dear(self):
        inst = two_buyer_scenario(1000)
        _, _, plan, _ = solve_both(inst)
        assert plan.pickups == {("p", "b1"), ("p", "b2")}
        assert (plan.cost.shipment, plan.cost.tickets, plan.cost.pickup) == (1000, 400, 30)
        assert plan.cost.logistics == 1430

    def test_direct_when_shipping_is_cheap(self):
        inst = two_buyer_scenario(100)
        _, _, plan, _ = solve_both(inst)
        assert plan.pickups == {("home:b1", "b1"), ("home:b2", "b2")}
        assert plan.cost.logistics == 200

    def test_hand_enumeration_of_topologies(self):
        # both home, both shared, one of each (two ways)
        for S, expected in ((1000, 1430), (100, 200)):
            options = [2 * S, S + 2 * 200 + 30, S + S + 200 + 15, S + S + 200 + 15]
            assert min(options) == expected

    def test_quantities_must_match_demand(self):
        inst = two_buyer_scenario(1000)
        with pytest.raises(ConfigurationError):
            build_transshipment_problem(inst, {"s": 1}, prefilter_pops(inst.buyers, inst.pops))

    def test_zero_seller_dropped(self):
        sellers = [Seller("s1", STAPLES, 10), Seller("s2", PriceCurve.flat(900), 10)]
        inst = instance(sellers, [Buyer("b", MILAN, 2, 0)])
        prob = build_transshipment_problem(inst, {"s1": 2, "s2": 0}, prefilter_pops(inst.buyers, inst.pops))
        assert "xs[s1,home:b]" in prob and "xs[s2,home:b]" not in prob

    def test_dummies_use_no_tickets(self):
        inst = two_buyer_scenario(100)
        _, _, plan, _ = solve_both(inst)
        assert plan.gamma == (0,) and plan.tickets_used == 0

    def test_lp_export(self):
        inst = two_buyer_scenario(1000)
        prob = build_transshipment_problem(inst, {"s": 2}, prefilter_pops(inst.buyers, inst.pops))
        text = prob.to_lp()
        assert "Binaries" in text and "Generals" in text
        assert "a(s,p)" in text and "ticket_count" in text

    @pytest.mark.parametrize("seed", range(40))
    def test_random_matches_bruteforce_and_checks(self, seed):
        rng = np.random.default_rng(seed)
        inst = random_instance(rng, max_sellers=2, max_pops=3, max_buyers=3)
        assignment, trans, plan, reach = solve_both(inst)
        assert check_plan(inst, plan, reach) == []
        prob = build_transshipment_problem(inst, plan.x, reach)
        if len(prob.binary_columns) <= 14:
            assert trans.objective == pytest.approx(solve_bruteforce(prob).objective, abs=1e-6)
        # arc consistency and ticket count
        for arc in plan.shipments:
            assert arc in plan.arcs
        for arc in plan.withdrawals:
            assert arc in plan.pickups
        real = sum(1 for j, _ in plan.pickups if not inst.pop(j).is_dummy)
        if inst.ticket_curve is not None:
            assert plan.tickets_used == real

    @pytest.mark.parametrize("seed", range(10))
    def test_joint_never_worse(self, seed):
        rng = np.random.default_rng(100 + seed)
        inst = random_instance(rng, max_sellers=2, max_pops=2, max_buyers=2)
        _, _, plan, reach = solve_both(inst)
        joint = solve_milp(build_joint_problem(inst, reach))
        assert joint.objective <= plan.cost.total + 1e-6


class TestCheckPlan:
    def base(self):
        inst = two_buyer_scenario(1000)
        _, _, plan, reach = solve_both(inst)
        return inst, plan, reach

    def test_solver_output_is_clean(self):
        inst, plan, reach = self.base()
        assert check_plan(inst, plan, reach) == []

    def test_flow_violation(self):
        b1 = Buyer("b1", MILAN, 4, 5.0)
        b2 = Buyer("b2", offset(MILAN, 0.5), 1, 5.0)
        inst = instance([Seller("s", STAPLES, 10)], [b1, b2], [Pop("p", MILAN, 10)], ticket=None)
        plan = assemble_plan(
            inst,
            {"s": 5},
            {("s", "p"): 5},
            {("p", "b1"): 4, ("home:b2", "b2"): 1},
        )
        report = check_plan(inst, plan)
        flow = [v for v in report if v.constraint == "flow"]
        assert {v.where for v in flow} == {"p", "home:b2"}
        assert "in" in flow[0].detail

    def test_double_pickup(self):
        inst, plan, _ = self.base()
        bad = Plan(
            plan.x, plan.delta, plan.w, plan.shipments, plan.arcs, plan.withdrawals,
            plan.pickups | {("home:b1", "b1")}, plan.gamma, plan.u, plan.cost,
        )
        report = check_plan(inst, bad)
        assert any(v.constraint == "single_pop" and v.where == "b1" for v in report)

    def test_cost_mismatch(self):
        from dataclasses import replace
        from efair.pricing import CostBreakdown

        inst, plan, _ = self.base()
        bad = replace(plan, cost=CostBreakdown(plan.cost.purchase + 1, plan.cost.shipment,
                                               plan.cost.tickets, plan.cost.pickup))
        assert any(v.constraint == "cost" for v in check_plan(inst, bad))

    def test_unreachable(self):
        b = Buyer("b", MILAN, 1, 0.5)
        far = Pop("far", offset(MILAN, 5.0), 10)
        inst = instance([Seller("s", STAPLES, 10)], [b], [far])
        plan = assemble_plan(inst, {"s": 1}, {("s", "far"): 1}, {("far", "b"): 1})
        assert any(v.constraint == "reachability" for v in check_plan(inst, plan))

    def test_arc_without_indicator(self):
        inst, plan, _ = self.base()
        bad = Plan(
            plan.x, plan.delta, plan.w, plan.shipments, frozenset(), plan.withdrawals,
            plan.pickups, plan.gamma, plan.u, plan.cost,
        )
        assert any(v.constraint == "arc_link" for v in check_plan(inst, bad))


class TestSplitCharges:
    def test_single_buyer_pays_all(self):
        inst = instance([Seller("s", STAPLES, 10)], [Buyer("b", MILAN, 3, 0)])
        _, _, plan, _ = solve_both(inst)
        assert plan.per_buyer_charge == {"b": plan.cost.total}

    def test_symmetric_equal(self):
        _, _, plan, _ = solve_both(two_buyer_scenario(1000))
        assert plan.per_buyer_charge["b1"] == plan.per_buyer_charge["b2"]
        assert sum(plan.per_buyer_charge.values()) == plan.cost.total

    def test_pro_rata_purchase(self):
        curve = PriceCurve.flat(1000)
        buyers = [Buyer("b1", MILAN, 1, 0), Buyer("b2", offset(MILAN, 1), 3, 0)]
        inst = instance([Seller("s", curve, 10)], buyers, S=0, beta=0)
        plan = assemble_plan(
            inst, {"s": 4}, {("s", "home:b1"): 1, ("s", "home:b2"): 3},
            {("home:b1", "b1"): 1, ("home:b2", "b2"): 3},
        )
        assert plan.cost.purchase == 4000
        assert plan.per_buyer_charge == {"b1": 1000, "b2": 3000}

    def test_largest_remainder(self):
        shares = {"a": Fraction(10, 3), "b": Fraction(10, 3), "c": Fraction(10, 3)}
        assert largest_remainder(shares, 10) == {"a": 4, "b": 3, "c": 3}

    @pytest.mark.parametrize("seed", range(20))
    def test_sum_exact(self, seed):
        inst = random_instance(np.random.default_rng(500 + seed), 2, 3, 3)
        _, _, plan, _ = solve_both(inst)
        charges = split_charges(inst, plan)
        assert sum(charges.values()) == plan.cost.total
        assert set(charges) == {b.id for b in inst.buyers}


class TestSerialization:
    def test_plan_roundtrip(self):
        _, _, plan, _ = solve_both(two_buyer_scenario(1000))
        assert Plan.from_json(plan.to_json()) == plan

    def test_instance_roundtrip(self):
        inst = random_instance(np.random.default_rng(3))
        assert FairInstance.from_json(inst.to_json()) == inst

    def test_seller_rejects_bad_fair_curve(self):
        seller_curve = PriceCurve(((500, 10), (400, None)))
        fair = PriceCurve(((500, 10), (300, None)))  # dips below the seller price
        with pytest.raises(ConfigurationError):
            Seller("s", fair, 10, seller_curve)

    def test_duplicate_ids(self):
        with pytest.raises(ConfigurationError):
            instance([Seller("s", STAPLES, 1), Seller("s", STAPLES, 1)], [Buyer("b", MILAN, 1, 0)])
