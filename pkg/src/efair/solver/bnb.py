"""Branch-and-bound over the bounded simplex.

Nodes are explored depth-first until the first incumbent appears, then in
best-bound order.  The branching variable is the most fractional integer
column (ties: lowest column index).  Children are warm-started from the
parent's optimal basis with the dual simplex.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from efair.solver.problem import MilpProblem
from efair.solver.simplex import (
    INFEASIBLE,
    ITERATION_LIMIT,
    OPTIMAL,
    UNBOUNDED,
    DenseProblem,
    presolve,
    solve_dense,
)

INT_TOL = 1e-6


@dataclass(frozen=True)
class MilpSolution:
    status: str
    objective: float | None = None
    values: dict[str, float] = field(default_factory=dict)
    node_count: int = 0
    bound: float | None = None
    duals: dict[str, float] | None = None
    reduced_costs: dict[str, float] | None = None
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def has_solution(self) -> bool:
        return bool(self.values)

    @property
    def gap(self) -> float | None:
        if self.objective is None or self.bound is None:
            return None
        return self.objective - self.bound

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def int_value(self, name: str) -> int:
        return int(round(self.values[name]))


def _values(dp: DenseProblem, x: np.ndarray) -> dict[str, float]:
    return {name: float(v) for name, v in zip(dp.names, x)}


def solve_lp(problem: MilpProblem, max_iter: int = 50_000) -> MilpSolution:
    """Solve the continuous relaxation of ``problem``."""
    dp = DenseProblem.from_problem(problem)
    res = solve_dense(dp, max_iter=max_iter, with_duals=True)
    if res.status != OPTIMAL:
        return MilpSolution(res.status, message=f"LP {res.status}")
    assert res.x is not None and res.duals is not None and res.reduced_costs is not None
    return MilpSolution(
        OPTIMAL,
        res.objective,
        _values(dp, res.x),
        node_count=1,
        bound=res.objective,
        duals={name: float(y) for name, y in zip(dp.row_names, res.duals)},
        reduced_costs={name: float(r) for name, r in zip(dp.names, res.reduced_costs)},
    )


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lo: np.ndarray = field(compare=False, repr=False)
    hi: np.ndarray = field(compare=False, repr=False)
    parent: int = field(compare=False, default=-1)
    basis: np.ndarray | None = field(compare=False, default=None, repr=False)
    at_upper: np.ndarray | None = field(compare=False, default=None, repr=False)
    branch: str = field(compare=False, default="")


TraceSink = Callable[[str], None]


def solve_milp(
    problem: MilpProblem,
    node_limit: int = 200_000,
    time_limit: float | None = None,
    trace: TraceSink | None = None,
) -> MilpSolution:
    """Minimize ``problem`` exactly (within ``node_limit`` nodes).

    ``trace`` receives one ``node,depth,bound,incumbent,branch_var`` line per
    evaluated node.  ``time_limit`` (seconds) makes results depend on machine
    speed; leave it ``None`` for reproducible runs.
    """
    if problem.infeasible_reason:
        return MilpSolution(INFEASIBLE, message=problem.infeasible_reason)
    dp = DenseProblem.from_problem(problem)
    pre = presolve(dp, dp.lo, dp.hi)
    if pre.infeasible:
        return MilpSolution(INFEASIBLE, message="empty row infeasible")
    tab = pre.tableau
    assert tab is not None
    free = pre.free
    n = tab.n
    integral = dp.integral[free]
    int_cols = np.flatnonzero(integral)
    step = problem.objective_step
    started = time.perf_counter()

    status = tab.solve()
    if status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, node_count=1, message="root relaxation infeasible")
    if status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, node_count=1, message="root relaxation unbounded")
    if status != OPTIMAL:
        return MilpSolution(ITERATION_LIMIT, node_count=1, message="simplex iteration limit")

    root_bound = tab.objective() + pre.const
    incumbent = math.inf
    best_x: np.ndarray | None = None
    nodes = 0
    seq = 0
    loaded = -1  # id of the node whose optimal basis is in the tableau

    def full_x(xs: np.ndarray) -> np.ndarray:
        x = pre.fixed_x.copy()
        x[free] = xs
        return x

    def prunable(bound: float) -> bool:
        if incumbent == math.inf:
            return False
        tol = 1e-9 * max(1.0, abs(incumbent))
        if step:
            return bound > incumbent - step + 1e-6 * max(1.0, abs(incumbent))
        return bound >= incumbent - tol

    def evaluate(node: _Node) -> str:
        nonlocal loaded
        tab.lo[:n] = node.lo
        tab.hi[:n] = node.hi
        if node.parent == -2:
            return OPTIMAL  # root, already solved
        if loaded != node.parent:
            assert node.basis is not None and node.at_upper is not None
            if not tab.load_basis(node.basis, node.at_upper):
                return _cold(node)
        st = tab.reoptimize()
        if st not in (OPTIMAL, INFEASIBLE) or (st == OPTIMAL and not tab.primal_feasible()):
            return _cold(node)
        return st

    def _cold(node: _Node) -> str:
        tab.lo[:n] = node.lo
        tab.hi[:n] = node.hi
        tab.hi[tab.art0:] = 0.0
        return tab.solve()

    root = _Node(root_bound, seq, 0, tab.lo[:n].copy(), tab.hi[:n].copy(), parent=-2)
    stack: list[_Node] = [root]
    heap: list[_Node] = []
    diving = True
    limit_hit = False
    unresolved: list[float] = []

    while stack or heap:
        if nodes >= node_limit or (
            time_limit is not None and time.perf_counter() - started > time_limit
        ):
            limit_hit = True
            break
        node = stack.pop() if diving else heapq.heappop(heap)
        if prunable(node.bound):
            continue
        st = evaluate(node)
        nodes += 1
        node_id = node.seq
        loaded = node_id
        if st not in (OPTIMAL, INFEASIBLE):
            # could not settle this node; never prune it silently
            unresolved.append(node.bound)
            loaded = -1
            if trace:
                trace(f"{nodes},{node.depth},{_fmt(node.bound)},{_fmt(incumbent)},")
            continue
        if st != OPTIMAL:
            if trace:
                trace(f"{nodes},{node.depth},inf,{_fmt(incumbent)},")
            continue
        obj = tab.objective() + pre.const
        xs = tab.x[:n]
        if prunable(obj):
            if trace:
                trace(f"{nodes},{node.depth},{_fmt(obj)},{_fmt(incumbent)},")
            continue
        frac = np.abs(xs[int_cols] - np.round(xs[int_cols]))
        frac = np.where(frac > INT_TOL, np.minimum(frac, 1 - frac), 0.0)
        if not frac.any():
            cand = xs.copy()
            cand[int_cols] = np.round(cand[int_cols])
            x_full = full_x(cand)
            value = float(dp.c @ x_full)
            if value < incumbent - 1e-9 * max(1.0, abs(value)) and _feasible(dp, x_full):
                incumbent = value
                best_x = x_full
            if trace:
                trace(f"{nodes},{node.depth},{_fmt(obj)},{_fmt(incumbent)},")
            if diving and best_x is not None:
                diving = False
                for pending in stack:
                    heapq.heappush(heap, pending)
                stack.clear()
            continue
        k = int(int_cols[int(np.argmax(frac))])
        v = xs[k]
        if trace:
            trace(f"{nodes},{node.depth},{_fmt(obj)},{_fmt(incumbent)},{dp.names[free[k]]}")
        basis = tab.basis.copy()
        at_upper = tab.at_upper.copy()
        down_hi = node.hi.copy()
        down_hi[k] = math.floor(v)
        up_lo = node.lo.copy()
        up_lo[k] = math.ceil(v)
        children = []
        for lo, hi, tag in ((node.lo, down_hi, "down"), (up_lo, node.hi, "up")):
            seq += 1
            children.append(
                _Node(obj, seq, node.depth + 1, lo, hi, node_id, basis, at_upper,
                      f"{dp.names[free[k]]}:{tag}")
            )
        if diving:
            # explore the child on the side the relaxation leans to first
            first_up = v - math.floor(v) >= 0.5
            order = children if first_up else children[::-1]
            stack.extend(order)
        else:
            for child in children:
                heapq.heappush(heap, child)

    open_bounds = [nd.bound for nd in stack] + [nd.bound for nd in heap] + unresolved
    limit_hit = limit_hit or bool(unresolved)
    if best_x is None:
        if limit_hit:
            bound = min(open_bounds, default=root_bound)
            return MilpSolution(ITERATION_LIMIT, None, {}, nodes, bound, message="node budget exhausted")
        return MilpSolution(INFEASIBLE, None, {}, nodes, None, message="no integer solution")
    values = _values(dp, best_x)
    if limit_hit and open_bounds:
        bound = min(min(open_bounds), incumbent)
        return MilpSolution(ITERATION_LIMIT, incumbent, values, nodes, bound,
                            message="node budget exhausted; incumbent returned")
    return MilpSolution(OPTIMAL, incumbent, values, nodes, incumbent)


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else f"{v:.6g}"


def _feasible(dp: DenseProblem, x: np.ndarray, tol: float = 1e-6) -> bool:
    if np.any(x < dp.lo - tol) or np.any(x > dp.hi + tol):
        return False
    lhs = dp.A @ x
    scale = tol * np.maximum(1.0, np.abs(dp.b))
    le = dp.rel == 1
    ge = dp.rel == -1
    eq = dp.rel == 0
    return bool(
        np.all(lhs[le] <= dp.b[le] + scale[le])
        and np.all(lhs[ge] >= dp.b[ge] - scale[ge])
        and np.all(np.abs(lhs[eq] - dp.b[eq]) <= scale[eq])
    )
