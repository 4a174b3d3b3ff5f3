"""Optional backend delegating to HiGHS through :func:`scipy.optimize.milp`.

Same input and output types as :func:`efair.solver.solve_milp`.  Integer
columns are rounded and the rounded point is re-checked before it is
reported as optimal.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from efair.solver.bnb import MilpSolution, _feasible, _values
from efair.solver.problem import MilpProblem
from efair.solver.simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, DenseProblem

_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_highs(problem: MilpProblem, time_limit: float | None = None) -> MilpSolution:
    if problem.infeasible_reason:
        return MilpSolution(INFEASIBLE, message=problem.infeasible_reason)
    dp = DenseProblem.from_problem(problem)
    lb = np.where(dp.rel == 1, -np.inf, dp.b)
    ub = np.where(dp.rel == -1, np.inf, dp.b)
    constraints = [LinearConstraint(dp.A, lb, ub)] if len(dp.b) else []
    options = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(
        dp.c,
        integrality=dp.integral.astype(int),
        bounds=Bounds(dp.lo, dp.hi),
        constraints=constraints,
        options=options,
    )
    status = _STATUS.get(res.status, ITERATION_LIMIT)
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    bound = getattr(res, "mip_dual_bound", None)
    if res.x is None:
        return MilpSolution(status, node_count=nodes, bound=bound, message=str(res.message))
    x = np.asarray(res.x, dtype=float).copy()
    x[dp.integral] = np.round(x[dp.integral])
    if not _feasible(dp, x):
        return MilpSolution(ITERATION_LIMIT, node_count=nodes, bound=bound,
                            message="rounded HiGHS point failed verification")
    value = float(dp.c @ x)
    if status == OPTIMAL:
        bound = value
    return MilpSolution(status, value, _values(dp, x), nodes,
                        None if bound is None else float(bound), message=str(res.message))
