import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from efair.errors import ConfigurationError, ProblemSizeError
from efair.solver import (
    BINARY,
    INTEGER,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    ProblemBuilder,
    solve_bruteforce,
    solve_lp,
    solve_milp,
)


def basis_enumeration(c, A, b):
    """min c x  s.t.  A x <= b, x >= 0 by enumerating every basis of [A | I]."""
    m, n = A.shape
    full = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    combos = np.array(list(itertools.combinations(range(n + m), m)))
    B = full[:, combos].transpose(1, 0, 2)
    det = np.linalg.det(B)
    ok = np.abs(det) > 1e-9
    xb = np.linalg.solve(B[ok], np.broadcast_to(b, (ok.sum(), m))[..., None])[..., 0]
    feas = np.all(xb >= -1e-9, axis=1)
    vals = (cost[combos[ok]] * xb).sum(axis=1)
    return float(vals[feas].min())


def build(c, A, b, rel="<=", kinds=None, lower=None, upper=None):
    pb = ProblemBuilder()
    n = len(c)
    for j in range(n):
        pb.add_var(
            f"x{j}",
            kinds[j] if kinds else "continuous",
            0.0 if lower is None else lower[j],
            math.inf if upper is None else upper[j],
            c[j],
        )
    rels = [rel] * len(b) if isinstance(rel, str) else rel
    for i in range(len(b)):
        pb.add_constraint({f"x{j}": A[i, j] for j in range(n)}, rels[i], b[i])
    return pb.build()


class TestLP:
    def test_single_bound(self):
        pb = ProblemBuilder()
        pb.add_var("x", cost=1)
        pb.add_constraint({"x": 1}, ">=", 3)
        sol = solve_lp(pb.build())
        assert sol.status == OPTIMAL
        assert sol["x"] == pytest.approx(3)
        assert sol.objective == pytest.approx(3)

    def test_facet(self):
        pb = ProblemBuilder()
        pb.add_var("x", cost=-1)
        pb.add_var("y", cost=-1)
        pb.add_constraint({"x": 1, "y": 1}, "<=", 1)
        sol = solve_lp(pb.build())
        assert sol.objective == pytest.approx(-1)
        assert sol["x"] + sol["y"] == pytest.approx(1)

    def test_infeasible(self):
        pb = ProblemBuilder()
        pb.add_var("x", upper=1)
        pb.add_constraint({"x": 1}, ">=", 2)
        assert solve_lp(pb.build()).status == INFEASIBLE

    def test_unbounded(self):
        pb = ProblemBuilder()
        pb.add_var("x", cost=-1)
        pb.add_var("y")
        pb.add_constraint({"x": 1, "y": -1}, "<=", 1)
        assert solve_lp(pb.build()).status == UNBOUNDED

    def test_free_variable(self):
        pb = ProblemBuilder()
        pb.add_var("x", lower=-math.inf, cost=1)
        pb.add_constraint({"x": 1}, ">=", -4)
        sol = solve_lp(pb.build())
        assert sol["x"] == pytest.approx(-4)

    def test_upper_bounded_negative_lower_infinite(self):
        pb = ProblemBuilder()
        pb.add_var("x", lower=-math.inf, upper=5, cost=-1)
        assert solve_lp(pb.build())["x"] == pytest.approx(5)

    @pytest.mark.parametrize("seed", range(25))
    def test_random_vs_basis_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.uniform(0.1, 5.0, size=(8, 10))
        b = rng.uniform(5.0, 20.0, size=8)
        c = rng.uniform(-5.0, 2.0, size=10)
        sol = solve_lp(build(c, A, b))
        oracle = basis_enumeration(c, A, b)
        assert sol.objective == pytest.approx(oracle, rel=1e-6, abs=1e-9)

    @pytest.mark.parametrize("seed", range(40))
    def test_random_mixed_vs_linprog(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n, m = rng.integers(2, 9), rng.integers(1, 7)
        A = rng.integers(-4, 6, size=(m, n)).astype(float)
        x0 = rng.uniform(0, 3, size=n)
        slack = rng.uniform(0, 2, size=m)
        rels = rng.choice(["<=", ">=", "="], size=m)
        lhs = A @ x0
        b = np.where(rels == "<=", lhs + slack, np.where(rels == ">=", lhs - slack, lhs))
        c = rng.integers(-5, 6, size=n).astype(float)
        upper = rng.uniform(3, 6, size=n)
        lower = -rng.uniform(0, 1, size=n)
        sol = solve_lp(build(c, A, b, list(rels), lower=lower, upper=upper))
        ub = rels != "="
        sgn = np.where(rels == "<=", 1.0, -1.0)
        ref = linprog(
            c,
            A_ub=(A[ub] * sgn[ub, None]) if ub.any() else None,
            b_ub=(b[ub] * sgn[ub]) if ub.any() else None,
            A_eq=A[~ub] if (~ub).any() else None,
            b_eq=b[~ub] if (~ub).any() else None,
            bounds=list(zip(lower, upper)),
            method="highs",
        )
        assert ref.status == 0 and sol.status == OPTIMAL
        assert sol.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-7)

    @pytest.mark.parametrize("seed", range(20))
    def test_dual_certificate(self, seed):
        rng = np.random.default_rng(2000 + seed)
        n, m = 6, 5
        A = rng.integers(-3, 5, size=(m, n)).astype(float)
        x0 = rng.uniform(0, 2, size=n)
        rels = rng.choice(["<=", ">="], size=m)
        b = np.where(rels == "<=", A @ x0 + 1, A @ x0 - 1)
        c = rng.integers(-4, 5, size=n).astype(float)
        lower, upper = np.zeros(n), np.full(n, 4.0)
        prob = build(c, A, b, list(rels), lower=lower, upper=upper)
        sol = solve_lp(prob)
        y = np.array([sol.duals[con.name] for con in prob.constraints])
        # dual feasibility signs for a minimization
        assert np.all(y[rels == "<="] <= 1e-9)
        assert np.all(y[rels == ">="] >= -1e-9)
        r = c - A.T @ y
        x = np.array([sol[f"x{j}"] for j in range(n)])
        dual_obj = b @ y + np.sum(np.where(r > 0, r * lower, r * upper))
        assert abs(dual_obj - sol.objective) <= 1e-6 * max(1.0, abs(sol.objective))
        # complementary slackness on the bounds
        interior = (x > lower + 1e-7) & (x < upper - 1e-7)
        assert np.all(np.abs(r[interior]) <= 1e-6)


def random_milp(rng, n_bin, n_int=0, n_cont=2, m=4):
    pb = ProblemBuilder()
    names = []
    for j in range(n_bin):
        names.append(pb.add_var(f"b{j}", BINARY, cost=float(rng.integers(-10, 11))))
    for j in range(n_int):
        names.append(pb.add_var(f"i{j}", INTEGER, 0, float(rng.integers(1, 6)),
                                float(rng.integers(-10, 11))))
    for j in range(n_cont):
        names.append(pb.add_var(f"c{j}", upper=float(rng.integers(1, 6)),
                                cost=float(rng.integers(-10, 11))))
    x0 = {nm: 0.0 for nm in names}
    for k in range(m):
        coefs = {nm: float(rng.integers(-4, 5)) for nm in names if rng.random() < 0.7}
        lhs = sum(coefs[nm] * x0[nm] for nm in coefs)
        pb.add_constraint(coefs, rng.choice(["<=", ">="]) if k else "<=",
                          lhs + float(rng.integers(0, 6)) if k % 2 == 0 else lhs - float(rng.integers(0, 6)) * 0,
                          f"r{k}")
    return pb.build()


class TestMILP:
    def test_toy(self):
        pb = ProblemBuilder()
        pb.add_var("x1", BINARY, cost=-1)
        pb.add_var("x2", BINARY, cost=-2)
        pb.add_constraint({"x1": 1, "x2": 1}, "<=", 1)
        sol = solve_milp(pb.build())
        assert (sol["x1"], sol["x2"]) == (0, 1)
        assert sol.objective == -2

    def test_knapsack_needs_branching(self):
        pb = ProblemBuilder()
        weights = [5, 4, 3]
        values = [10, 40, 30]
        for j, v in enumerate(values):
            pb.add_var(f"x{j}", BINARY, cost=-v)
        pb.add_constraint({f"x{j}": w for j, w in enumerate(weights)}, "<=", 6)
        prob = pb.build()
        sol = solve_milp(prob)
        assert sol.objective == -40
        assert solve_bruteforce(prob).objective == -40

    def test_general_integer(self):
        pb = ProblemBuilder()
        pb.add_var("x", INTEGER, 0, 10, cost=-1)
        pb.add_var("y", INTEGER, 0, 10, cost=-1)
        pb.add_constraint({"x": 2, "y": 2}, "<=", 7)
        sol = solve_milp(pb.build())
        assert sol.objective == -3

    def test_infeasible_integer(self):
        pb = ProblemBuilder()
        pb.add_var("x", INTEGER, 0, 10)
        pb.add_constraint({"x": 2}, "=", 3)
        assert solve_milp(pb.build()).status == INFEASIBLE
        assert solve_bruteforce(pb.build()).status == INFEASIBLE

    def test_marker(self):
        pb = ProblemBuilder()
        pb.add_var("x")
        pb.infeasible_reason = "demand exceeds supply"
        sol = solve_milp(pb.build())
        assert sol.status == INFEASIBLE and "demand" in sol.message

    def test_trace_lines(self):
        pb = ProblemBuilder()
        for j in range(3):
            pb.add_var(f"x{j}", BINARY, cost=-(j + 2))
        pb.add_constraint({"x0": 2, "x1": 2, "x2": 2}, "<=", 3)
        lines = []
        solve_milp(pb.build(), trace=lines.append)
        assert lines
        for line in lines:
            parts = line.split(",")
            assert len(parts) == 5
            int(parts[0]), int(parts[1])

    def test_node_limit_reports_bound(self):
        rng = np.random.default_rng(7)
        pb = ProblemBuilder()
        w = rng.integers(10, 40, size=18)
        for j in range(18):
            pb.add_var(f"x{j}", BINARY, cost=-float(w[j] + rng.integers(0, 5)))
        pb.add_constraint({f"x{j}": float(w[j]) for j in range(18)}, "<=", float(w.sum() // 2))
        sol = solve_milp(pb.build(), node_limit=3)
        assert sol.status in ("iteration_limit", "optimal")
        assert sol.bound is not None
        if sol.objective is not None:
            assert sol.bound <= sol.objective + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        prob = random_milp(rng, 8, 2, 2, 5)
        a, b = solve_milp(prob), solve_milp(prob)
        assert a == b

    @pytest.mark.parametrize("seed", range(60))
    def test_matches_bruteforce(self, seed):
        rng = np.random.default_rng(seed)
        prob = random_milp(rng, int(rng.integers(1, 9)), int(rng.integers(0, 3)), 2,
                           int(rng.integers(2, 6)))
        bb, brute = solve_milp(prob), solve_bruteforce(prob)
        assert bb.status == brute.status
        if bb.status == OPTIMAL:
            assert bb.objective == pytest.approx(brute.objective, abs=1e-6)
            assert prob.max_violation(bb.values) <= 1e-6

    def test_bound_sandwich(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            prob = random_milp(rng, 6, 1, 2, 4)
            sol = solve_milp(prob)
            if sol.status != OPTIMAL:
                continue
            relax = solve_lp(prob)
            assert relax.objective <= sol.objective + 1e-7


class TestBruteforce:
    def test_no_binaries_delegates(self):
        pb = ProblemBuilder()
        pb.add_var("x", cost=1)
        pb.add_constraint({"x": 1}, ">=", 3)
        prob = pb.build()
        assert solve_bruteforce(prob).objective == solve_lp(prob).objective

    def test_one_binary(self):
        pb = ProblemBuilder()
        pb.add_var("z", BINARY, cost=5)
        pb.add_var("x", cost=1, upper=10)
        pb.add_constraint({"x": 1, "z": 8}, ">=", 9)
        # z=0: x=9 -> 9 ; z=1: x=1 -> 6
        assert solve_bruteforce(pb.build()).objective == pytest.approx(6)

    def test_cap(self):
        pb = ProblemBuilder()
        for j in range(5):
            pb.add_var(f"z{j}", BINARY)
        with pytest.raises(ProblemSizeError):
            solve_bruteforce(pb.build(), cap=4)


class TestProblem:
    def test_undeclared(self):
        pb = ProblemBuilder()
        pb.add_var("x")
        with pytest.raises(ConfigurationError):
            pb.add_constraint({"y": 1}, "<=", 1)

    def test_bad_bounds(self):
        pb = ProblemBuilder()
        pb.add_var("x", lower=2, upper=1)
        with pytest.raises(ConfigurationError):
            pb.build()

    def test_lp_export_sections(self):
        pb = ProblemBuilder("demo")
        pb.add_var("x[1,2]", INTEGER, 0, 5, cost=3)
        pb.add_var("a[1,2]", BINARY, cost=1000)
        pb.add_var("f", lower=-math.inf, cost=-0.5)
        pb.add_constraint({"x[1,2]": 1, "a[1,2]": -5}, "<=", 0, "link")
        pb.add_constraint({"f": 1, "x[1,2]": 1}, ">=", -2, "floor")
        text = pb.build().to_lp()
        lines = text.splitlines()
        for section in ("Minimize", "Subject To", "Bounds", "Generals", "Binaries", "End"):
            assert section in lines
        assert " obj: 3 x(1,2) + 1000 a(1,2) - 0.5 f" in lines
        assert " link: x(1,2) - 5 a(1,2) <= 0" in lines
        assert " 0 <= x(1,2) <= 5" in lines
        assert " f >= -inf" in lines
