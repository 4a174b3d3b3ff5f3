"""Self-contained MILP solver: bounded simplex, branch-and-bound, brute-force oracle.

An optional HiGHS backend (via SciPy) is available under the same contract.
"""

from typing import Callable

from efair.errors import ConfigurationError
from efair.solver.bnb import MilpSolution, solve_lp, solve_milp
from efair.solver.bruteforce import solve_bruteforce
from efair.solver.highs import solve_highs
from efair.solver.problem import (
    BINARY,
    CONTINUOUS,
    INTEGER,
    Constraint,
    MilpProblem,
    ProblemBuilder,
    Variable,
    write_lp,
)
from efair.solver.simplex import INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED

MilpSolver = Callable[[MilpProblem], MilpSolution]

SOLVERS: dict[str, MilpSolver] = {"builtin": solve_milp, "highs": solve_highs}


def get_solver(name: str) -> MilpSolver:
    """Look up a MILP backend by name (``builtin`` or ``highs``)."""
    try:
        return SOLVERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None


__all__ = [
    "BINARY",
    "CONTINUOUS",
    "INTEGER",
    "INFEASIBLE",
    "ITERATION_LIMIT",
    "OPTIMAL",
    "UNBOUNDED",
    "SOLVERS",
    "Constraint",
    "MilpProblem",
    "MilpSolution",
    "MilpSolver",
    "ProblemBuilder",
    "Variable",
    "get_solver",
    "solve_bruteforce",
    "solve_highs",
    "solve_lp",
    "solve_milp",
    "write_lp",
]
