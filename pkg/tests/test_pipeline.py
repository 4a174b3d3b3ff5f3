import json

import numpy as np
import pytest
from strategies import MILAN, STAPLES, offset, random_instance

from efair.errors import DemandExceedsSupplyError, SoldOut
from efair.geo import Buyer, Pop, prefilter_pops
from efair.model import FairInstance, Seller, check_plan
from efair.pipeline import (
    REPORT_FIELDS,
    RunningFair,
    baseline_direct_cost,
    optimize_fair,
    reoptimize_on_join,
)
from efair.pricing import PriceCurve, buyer_savings, fair_total_price
from efair.solver import solve_highs


def two_buyers(S):
    b1 = Buyer("b1", offset(MILAN, east_km=-1.0), 1, 5.0)
    b2 = Buyer("b2", offset(MILAN, east_km=1.0), 1, 5.0)
    return FairInstance(
        (Seller("s", STAPLES, 100, STAPLES),), (Pop("p", MILAN, 10),), (b1, b2), S, 15,
        PriceCurve.flat(200),
    )


class TestOptimize:
    def test_single_buyer_home(self):
        inst = FairInstance((Seller("s", STAPLES, 50),), (), (Buyer("b", MILAN, 12, 0),), 1000, 15)
        out = optimize_fair(inst)
        assert out.shipment_savings == 0
        assert out.purchase_savings == buyer_savings(STAPLES, 12) == 469 * 12 - fair_total_price(STAPLES, 12)
        assert out.total_cost == fair_total_price(STAPLES, 12) + 1000
        assert out.status == "optimal"

    def test_shared_scenario_savings(self):
        out = optimize_fair(two_buyers(1000))
        assert out.direct_cost - out.plan.cost.purchase == 2000
        assert out.plan.cost.logistics == 1430
        assert out.shipment_savings == 570

    def test_cheap_shipping_no_savings(self):
        out = optimize_fair(two_buyers(100))
        assert out.shipment_savings == 0

    def test_demand_exceeds_supply(self):
        inst = FairInstance((Seller("s", STAPLES, 1),), (), (Buyer("b", MILAN, 2, 0),), 0, 0)
        with pytest.raises(DemandExceedsSupplyError):
            optimize_fair(inst)

    def test_breakpoint_crossing_improves_savings_and_revenue(self):
        # fair and seller curves share breakpoints; the seller keeps its all-units prices
        seller_curve = PriceCurve(((469, 9), (419, 29), (369, 59), (309, None)))
        fair_curve = PriceCurve(((469, 9), (430, 29), (390, 59), (330, None)))
        seller = Seller("s", fair_curve, 1000, seller_curve)

        def fair(k):
            buyers = [Buyer(f"b{i:02d}", offset(MILAN, i * 0.3), 4, 0.0) for i in range(k)]
            return optimize_fair(FairInstance((seller,), (), tuple(buyers), 500, 15))

        small, big = fair(5), fair(16)  # 20 units vs 64 units
        assert big.purchase_savings > small.purchase_savings
        assert big.manager_revenue > small.manager_revenue

    @pytest.mark.parametrize("seed", range(25))
    def test_random_properties(self, seed):
        inst = random_instance(np.random.default_rng(900 + seed), 2, 3, 3)
        out = optimize_fair(inst)
        reach = prefilter_pops(inst.buyers, inst.pops)
        assert check_plan(inst, out.plan, reach) == []
        assert out.purchase_savings >= 0 and out.manager_revenue >= 0
        assert out.shipment_savings >= 0
        assert out.total_cost <= out.direct_cost
        expected = sum(
            s.fair_curve.slopes[0] * q - fair_total_price(s.fair_curve, q)
            for s in inst.sellers for q in [out.plan.x[s.id]]
        )
        assert out.purchase_savings == expected
        assert optimize_fair(inst) == out

    @pytest.mark.parametrize("seed", range(10))
    def test_highs_backend_agrees(self, seed):
        inst = random_instance(np.random.default_rng(1300 + seed), 2, 3, 3)
        a, b = optimize_fair(inst), optimize_fair(inst, solver=solve_highs)
        assert a.total_cost == b.total_cost
        assert a.direct_cost == b.direct_cost

    def test_joint_check_recorded(self):
        out = optimize_fair(two_buyers(1000), joint_check=True)
        assert out.stats.joint_total is not None
        assert out.stats.joint_total <= out.total_cost

    def test_serialization(self):
        out = optimize_fair(two_buyers(1000))
        data = json.loads(out.to_json())
        assert data["shipment_savings"] == 570
        assert list(out.summary_row(3)) == REPORT_FIELDS


class TestBaseline:
    def test_one_buyer(self):
        inst = FairInstance((Seller("s", STAPLES, 9),), (), (Buyer("b", MILAN, 4, 0),), 1000, 0)
        assert baseline_direct_cost(inst, {"s": 4}) == fair_total_price(STAPLES, 4) + 1000

    def test_k_buyers_one_seller(self):
        buyers = tuple(Buyer(f"b{k}", offset(MILAN, k), 2, 0) for k in range(4))
        inst = FairInstance((Seller("s", STAPLES, 20),), (), buyers, 700, 0)
        assert baseline_direct_cost(inst, {"s": 8}) == fair_total_price(STAPLES, 8) + 4 * 700

    def test_scenario(self):
        inst = two_buyers(1000)
        assert baseline_direct_cost(inst, {"s": 2}) - fair_total_price(STAPLES, 2) == 2000

    def test_two_sellers_need_extra_arc(self):
        buyers = tuple(Buyer(f"b{k}", offset(MILAN, k), 3, 0) for k in range(2))
        sellers = (Seller("s1", STAPLES, 4), Seller("s2", STAPLES, 4))
        inst = FairInstance(sellers, (), buyers, 1000, 0)
        # 4 + 2 units over two homes of 3: at least three arcs
        cost = baseline_direct_cost(inst, {"s1": 4, "s2": 2})
        assert cost == fair_total_price(STAPLES, 4) + fair_total_price(STAPLES, 2) + 3000


class TestRunningFair:
    def template(self, S=1000, supply=100):
        return FairInstance((Seller("s", STAPLES, supply),), (Pop("p", MILAN, 10),), (), S, 15,
                            PriceCurve.flat(200))

    def test_first_join_has_no_outcome(self):
        fair = RunningFair(self.template())
        assert reoptimize_on_join(fair, Buyer("b1", offset(MILAN, east_km=-1.0), 1, 5.0)) is None

    def test_second_join_flips_to_shared(self):
        fair = RunningFair(self.template())
        fair.join(Buyer("b1", offset(MILAN, east_km=-1.0), 1, 5.0))
        solo = FairInstance(fair.template.sellers, fair.template.pops, tuple(fair.buyers), 1000, 15,
                            fair.template.ticket_curve)
        assert optimize_fair(solo).plan.pickups == {("home:b1", "b1")}
        out = fair.join(Buyer("b2", offset(MILAN, east_km=1.0), 1, 5.0))
        assert out.plan.pickups == {("p", "b1"), ("p", "b2")}

    def test_sold_out(self):
        fair = RunningFair(self.template(supply=3))
        fair.join(Buyer("b1", MILAN, 2, 0))
        with pytest.raises(SoldOut):
            fair.join(Buyer("b2", MILAN, 2, 0))
        assert [b.id for b in fair.buyers] == ["b1"]

    @pytest.mark.parametrize("seed", range(8))
    def test_incumbents_never_pay_more(self, seed):
        rng = np.random.default_rng(seed)
        S = int(rng.integers(100, 2000))
        tickets = PriceCurve(((int(rng.integers(150, 300)), 3), (int(rng.integers(20, 150)), None)))
        template = FairInstance((Seller("s", STAPLES, 500),), (Pop("p", offset(MILAN, 0.5), 500),),
                                (), S, float(rng.uniform(5, 50)), tickets)
        fair = RunningFair(template)
        demand = int(rng.integers(1, 8))
        prev = None
        for k in range(6):
            out = fair.join(Buyer(f"b{k}", MILAN, demand, 2.0))
            if out is None:
                continue
            worst = max(out.per_buyer_charge.values())
            if prev is not None:
                assert worst <= prev
            prev = worst
