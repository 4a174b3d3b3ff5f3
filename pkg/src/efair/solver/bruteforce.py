"""Exhaustive verification oracle.

Every assignment of the binary variables is considered.  Assignments that
violate a row even at its most favourable activity are discarded up front
(vectorised); the rest are visited in order of their binary cost and the
residual LP is solved for each.  Visiting stops once the binary cost plus the
smallest possible continuous cost can no longer beat the incumbent, which
keeps the result exact.  If a residual LP optimum is fractional in a
general-integer column, that column is split and both halves are enumerated
without any objective-based pruning.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from efair.errors import ProblemSizeError
from efair.solver.bnb import INT_TOL, MilpSolution, _values
from efair.solver.problem import MilpProblem
from efair.solver.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, DenseProblem, solve_dense

CHUNK = 1 << 14


def _residual(dp: DenseProblem, lo: np.ndarray, hi: np.ndarray, depth: int = 0):
    res = solve_dense(dp, lo, hi)
    if res.status != OPTIMAL:
        return res.status, None
    x = res.x
    assert x is not None
    cols = np.flatnonzero(dp.integral & (np.abs(x - np.round(x)) > INT_TOL))
    if not len(cols):
        x = x.copy()
        x[dp.integral] = np.round(x[dp.integral])
        return OPTIMAL, x
    if depth > 200:
        raise ProblemSizeError("integer enumeration too deep for the brute-force oracle")
    k = int(cols[0])
    best = None
    for new_lo, new_hi in ((lo[k], math.floor(x[k])), (math.ceil(x[k]), hi[k])):
        if new_lo > new_hi:
            continue
        lo2, hi2 = lo.copy(), hi.copy()
        lo2[k], hi2[k] = new_lo, new_hi
        st, xs = _residual(dp, lo2, hi2, depth + 1)
        if st == UNBOUNDED:
            return st, None
        if xs is not None and (best is None or dp.c @ xs < dp.c @ best):
            best = xs
    return (OPTIMAL, best) if best is not None else (INFEASIBLE, None)


def _assignments(nb: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(nb)) & 1).astype(float)


def solve_bruteforce(problem: MilpProblem, cap: int = 20) -> MilpSolution:
    """Exact optimum by enumerating all binary assignments (at most ``2**cap``)."""
    dp = DenseProblem.from_problem(problem)
    bins = np.flatnonzero(dp.binary & (dp.lo < dp.hi))
    nb = len(bins)
    if nb > cap:
        raise ProblemSizeError(f"{nb} free binaries exceed the brute-force cap of {cap}")
    if problem.infeasible_reason:
        return MilpSolution(INFEASIBLE, message=problem.infeasible_reason)
    if nb == 0:
        st, x = _residual(dp, dp.lo.copy(), dp.hi.copy())
        if x is None:
            return MilpSolution(st, node_count=1)
        value = float(dp.c @ x)
        return MilpSolution(OPTIMAL, value, _values(dp, x), 1, value)

    others = np.setdiff1d(np.arange(len(dp.names)), bins)
    A_bin = dp.A[:, bins]
    A_oth = dp.A[:, others]
    lo_o, hi_o = dp.lo[others], dp.hi[others]
    with np.errstate(invalid="ignore"):
        pos = np.where(A_oth > 0, A_oth, 0.0)
        neg = np.where(A_oth < 0, A_oth, 0.0)
        min_act = np.nan_to_num(pos * lo_o, nan=0.0).sum(axis=1) + np.nan_to_num(neg * hi_o, nan=0.0).sum(axis=1)
        max_act = np.nan_to_num(pos * hi_o, nan=0.0).sum(axis=1) + np.nan_to_num(neg * lo_o, nan=0.0).sum(axis=1)
    tol = 1e-7 * np.maximum(1.0, np.abs(dp.b))
    need_le = dp.rel >= 0
    need_ge = dp.rel <= 0
    c_bin = dp.c[bins]
    c_oth = dp.c[others]
    with np.errstate(invalid="ignore"):
        cont_floor = float(np.sum(np.minimum(c_oth * lo_o, c_oth * hi_o)))
    if math.isnan(cont_floor):
        cont_floor = -math.inf
    # Any residual problem is a restriction of the relaxation, so the
    # relaxation's best continuous cost (binaries free of charge) is a floor too.
    c_free = dp.c.copy()
    c_free[bins] = 0.0
    relaxed = solve_dense(replace(dp, c=c_free))
    if relaxed.status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, node_count=0, message="relaxation infeasible")
    if relaxed.status == OPTIMAL:
        cont_floor = max(cont_floor, relaxed.objective - 1e-7 * max(1.0, abs(relaxed.objective)))

    cand_z: list[np.ndarray] = []
    cand_cost: list[np.ndarray] = []
    total = 1 << nb
    for start in range(0, total, CHUNK):
        Z = _assignments(nb, start, min(total, start + CHUNK))
        act = Z @ A_bin.T
        ok = np.ones(len(Z), dtype=bool)
        if need_le.any():
            ok &= np.all((act + min_act)[:, need_le] <= (dp.b + tol)[need_le], axis=1)
        if need_ge.any():
            ok &= np.all((act + max_act)[:, need_ge] >= (dp.b - tol)[need_ge], axis=1)
        cand_z.append(Z[ok])
        cand_cost.append(Z[ok] @ c_bin)
    Z = np.concatenate(cand_z)
    costs = np.concatenate(cand_cost)
    order = np.argsort(costs, kind="stable")

    best_x = None
    best = math.inf
    visited = 0
    for pos_ in order:
        if costs[pos_] + cont_floor >= best - 1e-9 * max(1.0, abs(best)):
            break
        lo, hi = dp.lo.copy(), dp.hi.copy()
        lo[bins] = Z[pos_]
        hi[bins] = Z[pos_]
        visited += 1
        st, x = _residual(dp, lo, hi)
        if st == UNBOUNDED:
            return MilpSolution(UNBOUNDED, node_count=visited)
        if x is None:
            continue
        value = float(dp.c @ x)
        if value < best - 1e-9 * max(1.0, abs(value)):
            best, best_x = value, x
    if best_x is None:
        return MilpSolution(INFEASIBLE, node_count=visited, message="no feasible assignment")
    return MilpSolution(OPTIMAL, best, _values(dp, best_x), visited, best)
