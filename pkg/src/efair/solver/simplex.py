"""Bounded-variable simplex on a dense tableau.

The LP is put in equality form ``A x = b, lo <= x <= hi`` by appending one
slack per inequality row and one artificial per row.  Phase 1 minimizes the
artificials starting from a slack/artificial diagonal basis; phase 2 applies
the real costs.  A bounded dual simplex re-optimizes after bound changes,
which is what branch-and-bound uses to warm-start child nodes.

Entering variables are chosen by largest reduced cost with ties broken by the
smallest column index; after a run of degenerate pivots the engine switches to
Bland's rule until it makes progress again.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from efair.solver.problem import MilpProblem

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGENERATE_RUN = 50
REFRESH_EVERY = 100

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class DenseProblem:
    """Array view of a :class:`MilpProblem` (rows as written, no slacks)."""

    A: np.ndarray
    b: np.ndarray
    rel: np.ndarray  # +1 for <=, 0 for =, -1 for >=
    c: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integral: np.ndarray
    binary: np.ndarray
    names: list[str]
    row_names: list[str]

    @classmethod
    def from_problem(cls, problem: MilpProblem) -> "DenseProblem":
        n = problem.num_variables
        m = len(problem.constraints)
        A = np.zeros((m, n))
        b = np.zeros(m)
        rel = np.zeros(m, dtype=int)
        for i, con in enumerate(problem.constraints):
            for col, coef in con.coefs:
                A[i, col] += coef
            b[i] = con.rhs
            rel[i] = {"<=": 1, "=": 0, ">=": -1}[con.relation]
        vs = problem.variables
        return cls(
            A=A,
            b=b,
            rel=rel,
            c=np.array([v.cost for v in vs], dtype=float),
            lo=np.array([v.lower for v in vs], dtype=float),
            hi=np.array([v.upper for v in vs], dtype=float),
            integral=np.array([v.is_integral for v in vs], dtype=bool),
            binary=np.array([v.kind == "binary" for v in vs], dtype=bool),
            names=[v.name for v in vs],
            row_names=[c.name for c in problem.constraints],
        )


@dataclass
class LPResult:
    status: str
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0


class Tableau:
    """Simplex state over the columns ``[structural | slack | artificial]``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, rel: np.ndarray, c: np.ndarray,
                 lo: np.ndarray, hi: np.ndarray, max_iter: int = 50_000):
        m, n = A.shape
        self.m, self.n = m, n
        slack_rows = np.flatnonzero(rel != 0)
        ns = len(slack_rows)
        self.ns = ns
        N = n + ns + m
        self.N = N
        self.art0 = n + ns
        full = np.zeros((m, N))
        full[:, :n] = A
        self.slack_sign = np.zeros(m)
        for k, i in enumerate(slack_rows):
            full[i, n + k] = rel[i]
            self.slack_sign[i] = rel[i]
        self.slack_col = np.full(m, -1)
        self.slack_col[slack_rows] = n + np.arange(ns)
        self.A = full
        self.b = b.astype(float).copy()
        self.cost = np.zeros(N)
        self.cost[:n] = c
        self.lo = np.concatenate([lo, np.zeros(ns), np.zeros(m)]).astype(float)
        self.hi = np.concatenate([hi, np.full(ns, np.inf), np.zeros(m)]).astype(float)
        self.basis = np.zeros(m, dtype=int)
        self.is_basic = np.zeros(N, dtype=bool)
        self.at_upper = np.zeros(N, dtype=bool)
        self.x = np.zeros(N)
        self.T = np.zeros((m, N + 1))
        self.d = np.zeros(N)
        self.max_iter = max_iter
        self.iterations = 0

    # -- bookkeeping --------------------------------------------------------------

    def _nonbasic_values(self) -> None:
        nb = ~self.is_basic
        lo, hi = self.lo, self.hi
        up = self.at_upper & np.isfinite(hi)
        val = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        val = np.where(up, hi, val)
        self.at_upper = np.where(nb, up | (~np.isfinite(lo) & np.isfinite(hi)), self.at_upper)
        self.x[nb] = val[nb]

    def _update_basic(self) -> None:
        xn = np.where(self.is_basic, 0.0, self.x)
        self.x[self.basis] = self.T[:, -1] - self.T[:, :-1] @ xn

    def _update_reduced(self, cost: np.ndarray) -> None:
        self.d = cost - cost[self.basis] @ self.T[:, :-1]
        self.d[self.basis] = 0.0

    def refactor(self) -> bool:
        B = self.A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, np.column_stack([self.A, self.b]))
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(np.isfinite(self.T)))

    def load_basis(self, basis: np.ndarray, at_upper: np.ndarray) -> bool:
        self.basis = basis.copy()
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        self.at_upper = at_upper.copy()
        if not self.refactor():
            return False
        self._nonbasic_values()
        self._update_basic()
        self._update_reduced(self.cost)
        return True

    def _pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.d -= self.d[j] * T[r, :-1]
        self.d[j] = 0.0
        old = self.basis[r]
        self.is_basic[old] = False
        self.is_basic[j] = True
        self.basis[r] = j
        self.iterations += 1

    # -- cold start ----------------------------------------------------------------

    def cold_start(self) -> bool:
        """Slack/artificial starting basis; returns True if phase 1 is needed."""
        m, n, ns = self.m, self.n, self.ns
        self.is_basic[:] = False
        self.at_upper[:] = False
        self._nonbasic_values()
        resid = self.b - self.A[:, : n + ns] @ self.x[: n + ns]
        need_phase1 = False
        sign = np.ones(m)
        for i in range(m):
            s = self.slack_col[i]
            if s >= 0 and resid[i] * self.slack_sign[i] >= 0:
                self.basis[i] = s
                sign[i] = self.slack_sign[i]
            else:
                a = self.art0 + i
                sgn = 1.0 if resid[i] >= 0 else -1.0
                self.A[:, a] = 0.0
                self.A[i, a] = sgn
                self.basis[i] = a
                sign[i] = sgn
                self.hi[a] = np.inf
                need_phase1 = True
        self.is_basic[self.basis] = True
        # B is diagonal with +-1 entries, so B^-1 = B.
        self.T = np.column_stack([self.A, self.b]) * sign[:, None]
        self._update_basic()
        return need_phase1

    def solve(self) -> str:
        """Two-phase primal simplex from scratch."""
        if self.cold_start():
            phase1 = np.zeros(self.N)
            arts = np.flatnonzero(np.isinf(self.hi[self.art0:])) + self.art0
            phase1[arts] = 1.0
            self._update_reduced(phase1)
            status = self.primal(phase1)
            if status == ITERATION_LIMIT:
                return status
            infeas = float(self.x[arts].sum())
            if infeas > FEAS_TOL * max(1.0, float(np.abs(self.b).max(initial=0.0))):
                return INFEASIBLE
            self.hi[self.art0:] = 0.0
            self.x[self.art0:] = np.where(self.is_basic[self.art0:], self.x[self.art0:], 0.0)
            self._drive_out_artificials()
            self._update_basic()
        self._update_reduced(self.cost)
        return self.primal(self.cost)

    def _drive_out_artificials(self) -> None:
        for r in range(self.m):
            if self.basis[r] < self.art0:
                continue
            row = np.abs(self.T[r, : self.art0]) * ~self.is_basic[: self.art0]
            j = int(np.argmax(row))
            if row[j] > 1e-7:
                art = self.basis[r]
                self._pivot(r, j)
                self.x[art] = 0.0
                self.at_upper[art] = False
        # leftover basic artificials sit on redundant rows, fixed at zero

    # -- primal -------------------------------------------------------------------

    def primal(self, cost: np.ndarray) -> str:
        degenerate = 0
        since_refresh = 0
        stop = self.iterations + self.max_iter
        while True:
            if self.iterations >= stop:
                return ITERATION_LIMIT
            if since_refresh >= REFRESH_EVERY:
                self.refactor()
                self._update_basic()
                self._update_reduced(cost)
                since_refresh = 0
            d = self.d
            nb = ~self.is_basic
            movable = nb & (self.hi > self.lo)
            free = ~np.isfinite(self.lo) & ~np.isfinite(self.hi)
            can_inc = movable & (~self.at_upper | free)
            can_dec = movable & (self.at_upper | free)
            score = np.where(can_inc & (d < -OPT_TOL), -d, 0.0)
            score = np.maximum(score, np.where(can_dec & (d > OPT_TOL), d, 0.0))
            if not score.any():
                return OPTIMAL
            bland = degenerate >= DEGENERATE_RUN
            j = int(np.flatnonzero(score)[0]) if bland else int(np.argmax(score))
            sigma = 1.0 if d[j] < 0 else -1.0
            alpha = self.T[:, j]
            sa = sigma * alpha
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = sa > PIVOT_TOL
            inc = sa < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios = np.where(dec & np.isfinite(lob), (xb - lob) / sa, ratios)
                ratios = np.where(inc & np.isfinite(hib), (hib - xb) / -sa, ratios)
            ratios = np.maximum(ratios, 0.0)
            t_row = float(ratios.min()) if self.m else np.inf
            t_flip = self.hi[j] - self.lo[j]
            if not np.isfinite(t_row) and not np.isfinite(t_flip):
                return UNBOUNDED
            if t_flip <= t_row:
                self.x[j] = self.hi[j] if sigma > 0 else self.lo[j]
                self.at_upper[j] = sigma > 0
                self._update_basic()
                degenerate = 0
                continue
            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(sa[ties]))])
            leaving = self.basis[r]
            to_upper = sa[r] < 0
            self._pivot(r, j)
            self.at_upper[leaving] = to_upper
            self.x[leaving] = self.hi[leaving] if to_upper else self.lo[leaving]
            self._update_basic()
            since_refresh += 1
            degenerate = degenerate + 1 if t_row <= 1e-12 else 0

    # -- dual ---------------------------------------------------------------------

    def dual(self) -> str:
        """Bounded dual simplex; assumes the current reduced costs are dual feasible."""
        since_refresh = 0
        stop = self.iterations + self.max_iter
        while True:
            if self.iterations >= stop:
                return ITERATION_LIMIT
            if since_refresh >= REFRESH_EVERY:
                self.refactor()
                self._update_basic()
                self._update_reduced(self.cost)
                since_refresh = 0
            xb = self.x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            below = lob - xb
            above = xb - hib
            viol = np.maximum(below, above)
            tol = FEAS_TOL * np.maximum(1.0, np.abs(xb))
            viol = np.where(viol > tol, viol, 0.0)
            if not viol.any():
                return OPTIMAL
            r = int(np.argmax(viol))
            row = self.T[r, :-1]
            nb = ~self.is_basic & (self.hi > self.lo)
            free = ~np.isfinite(self.lo) & ~np.isfinite(self.hi)
            can_inc = nb & (~self.at_upper | free)
            can_dec = nb & (self.at_upper | free)
            increase = below[r] > above[r]
            if increase:
                elig = (can_inc & (row < -PIVOT_TOL)) | (can_dec & (row > PIVOT_TOL))
            else:
                elig = (can_inc & (row > PIVOT_TOL)) | (can_dec & (row < -PIVOT_TOL))
            if not elig.any():
                return INFEASIBLE
            cols = np.flatnonzero(elig)
            ratios = np.abs(self.d[cols]) / np.abs(row[cols])
            best = ratios.min()
            ties = cols[ratios <= best + 1e-12]
            j = int(ties[np.argmax(np.abs(row[ties]))])
            leaving = self.basis[r]
            self._pivot(r, j)
            self.at_upper[leaving] = not increase
            self.x[leaving] = self.lo[leaving] if increase else self.hi[leaving]
            self._update_basic()
            since_refresh += 1

    def reoptimize(self) -> str:
        """Dual simplex followed by a primal clean-up pass."""
        self._nonbasic_values()
        self._update_basic()
        status = self.dual()
        if status != OPTIMAL:
            return status
        return self.primal(self.cost)

    # -- results ------------------------------------------------------------------

    def objective(self) -> float:
        return float(self.cost[: self.n] @ self.x[: self.n])

    def duals(self) -> np.ndarray:
        B = self.A[:, self.basis]
        return np.linalg.solve(B.T, self.cost[self.basis])

    def primal_feasible(self) -> bool:
        x = self.x
        tol = FEAS_TOL * np.maximum(1.0, np.abs(x))
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))


@dataclass
class Presolved:
    """Problem with fixed columns removed and empty rows dropped."""

    tableau: Tableau | None
    free: np.ndarray
    fixed_x: np.ndarray
    rows: np.ndarray
    const: float
    infeasible: bool = False


def presolve(dp: DenseProblem, lo: np.ndarray, hi: np.ndarray, max_iter: int = 50_000) -> Presolved:
    fixed = lo >= hi
    free = np.flatnonzero(~fixed)
    fixed_x = np.where(fixed, lo, 0.0)
    b = dp.b - dp.A @ fixed_x
    A = dp.A[:, free]
    nonempty = np.any(A != 0.0, axis=1)
    rows = np.flatnonzero(nonempty)
    empty = np.flatnonzero(~nonempty)
    tol = FEAS_TOL * np.maximum(1.0, np.abs(dp.b[empty]))
    be = b[empty]
    re = dp.rel[empty]
    bad = ((re == 1) & (be < -tol)) | ((re == -1) & (be > tol)) | ((re == 0) & (np.abs(be) > tol))
    const = float(dp.c @ fixed_x)
    if bad.any():
        return Presolved(None, free, fixed_x, rows, const, infeasible=True)
    tab = Tableau(A[rows], b[rows], dp.rel[rows], dp.c[free], lo[free], hi[free], max_iter)
    return Presolved(tab, free, fixed_x, rows, const)


def solve_dense(dp: DenseProblem, lo: np.ndarray | None = None, hi: np.ndarray | None = None,
                max_iter: int = 50_000, with_duals: bool = False) -> LPResult:
    lo = dp.lo if lo is None else lo
    hi = dp.hi if hi is None else hi
    pre = presolve(dp, lo, hi, max_iter)
    if pre.infeasible:
        return LPResult(INFEASIBLE)
    tab = pre.tableau
    assert tab is not None
    status = tab.solve()
    if status != OPTIMAL:
        return LPResult(status, iterations=tab.iterations)
    x = pre.fixed_x.copy()
    x[pre.free] = tab.x[: tab.n]
    result = LPResult(OPTIMAL, float(dp.c @ x), x, iterations=tab.iterations)
    if with_duals:
        y = np.zeros(len(dp.b))
        y[pre.rows] = tab.duals()
        result.duals = y
        result.reduced_costs = dp.c - dp.A.T @ y
    return result
