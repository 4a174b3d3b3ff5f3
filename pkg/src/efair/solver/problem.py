"""Mixed-integer linear program carrier.

A :class:`MilpProblem` is immutable: build it through :class:`ProblemBuilder`,
which maps variable names to column indices and rejects undeclared names.
The objective is always minimized.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from efair.errors import ConfigurationError

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"
KINDS = (CONTINUOUS, INTEGER, BINARY)
RELATIONS = ("<=", "=", ">=")


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf
    cost: float = 0.0

    @property
    def is_integral(self) -> bool:
        return self.kind != CONTINUOUS


@dataclass(frozen=True)
class Constraint:
    coefs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float
    name: str = ""


@dataclass(frozen=True)
class MilpProblem:
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    name: str = "problem"
    # Set when the builder already knows the instance cannot be satisfied.
    infeasible_reason: str | None = None
    # Spacing of attainable objective values (e.g. 1.0 for whole cents), or None.
    objective_step: float | None = None
    _index: Mapping[str, int] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        index: dict[str, int] = {}
        for pos, var in enumerate(self.variables):
            if var.name in index:
                raise ConfigurationError(f"duplicate variable {var.name!r}")
            if var.kind not in KINDS:
                raise ConfigurationError(f"{var.name}: unknown kind {var.kind!r}")
            if var.lower > var.upper:
                raise ConfigurationError(f"{var.name}: lower bound exceeds upper bound")
            if var.kind == BINARY and (var.lower < 0 or var.upper > 1):
                raise ConfigurationError(f"{var.name}: binary bounds must lie in [0, 1]")
            index[var.name] = pos
        n = len(self.variables)
        for con in self.constraints:
            if con.relation not in RELATIONS:
                raise ConfigurationError(f"{con.name}: unknown relation {con.relation!r}")
            for col, _ in con.coefs:
                if not 0 <= col < n:
                    raise ConfigurationError(f"{con.name}: undeclared variable column {col}")
        object.__setattr__(self, "_index", index)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        return self._index[name]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def integer_columns(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.is_integral]

    @property
    def binary_columns(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == BINARY]

    def relaxed(self) -> "MilpProblem":
        """Same problem with every variable continuous (bounds kept)."""
        return MilpProblem(
            tuple(
                Variable(v.name, CONTINUOUS, v.lower, v.upper, v.cost) for v in self.variables
            ),
            self.constraints,
            name=self.name,
            infeasible_reason=self.infeasible_reason,
        )

    def objective(self, values: Mapping[str, float]) -> float:
        return sum(v.cost * values[v.name] for v in self.variables)

    def max_violation(self, values: Mapping[str, float]) -> float:
        """Largest bound or constraint residual at ``values`` (0 when feasible)."""
        x = [values[v.name] for v in self.variables]
        worst = 0.0
        for v, val in zip(self.variables, x):
            worst = max(worst, v.lower - val, val - v.upper)
        for con in self.constraints:
            lhs = sum(coef * x[col] for col, coef in con.coefs)
            if con.relation == "<=":
                worst = max(worst, lhs - con.rhs)
            elif con.relation == ">=":
                worst = max(worst, con.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - con.rhs))
        return worst

    def to_lp(self) -> str:
        """CPLEX LP-format text (objective, constraints, bounds, generals, binaries)."""
        return write_lp(self)


class ProblemBuilder:
    """Incrementally assemble a :class:`MilpProblem` using variable names."""

    def __init__(self, name: str = "problem"):
        self.name = name
        self._vars: list[Variable] = []
        self._index: dict[str, int] = {}
        self._cons: list[Constraint] = []
        self.infeasible_reason: str | None = None
        self.objective_step: float | None = None

    def add_var(
        self,
        name: str,
        kind: str = CONTINUOUS,
        lower: float = 0.0,
        upper: float = math.inf,
        cost: float = 0.0,
    ) -> str:
        if name in self._index:
            raise ConfigurationError(f"duplicate variable {name!r}")
        if kind == BINARY:
            upper = min(upper, 1.0)
        self._index[name] = len(self._vars)
        self._vars.append(Variable(name, kind, float(lower), float(upper), float(cost)))
        return name

    def has_var(self, name: str) -> bool:
        return name in self._index

    def add_constraint(
        self, terms: Mapping[str, float] | Iterable[tuple[str, float]], relation: str, rhs: float,
        name: str = "",
    ) -> None:
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for var_name, coef in items:
            try:
                col = self._index[var_name]
            except KeyError:
                raise ConfigurationError(f"{name}: undeclared variable {var_name!r}") from None
            merged[col] = merged.get(col, 0.0) + float(coef)
        coefs = tuple((c, v) for c, v in merged.items() if v != 0.0)
        self._cons.append(Constraint(coefs, relation, float(rhs), name or f"c{len(self._cons)}"))

    def build(self) -> MilpProblem:
        return MilpProblem(
            tuple(self._vars),
            tuple(self._cons),
            name=self.name,
            infeasible_reason=self.infeasible_reason,
            objective_step=self.objective_step,
        )


# -- LP format ------------------------------------------------------------------

_LP_BAD = re.compile(r"[^A-Za-z0-9_.()!\"#$%&/,;?@'{}|~]")


def lp_name(name: str) -> str:
    out = name.replace("[", "(").replace("]", ")")
    out = _LP_BAD.sub("_", out)
    if out and (out[0].isdigit() or out[0] in ".e" and len(out) > 1 and out[1].isdigit()):
        out = "v" + out
    return out


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _terms(pairs: Iterable[tuple[float, str]]) -> str:
    parts: list[str] = []
    for coef, name in pairs:
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = name if mag == 1 else f"{_fmt(mag)} {name}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(problem: MilpProblem) -> str:
    names = [lp_name(v.name) for v in problem.variables]
    lines = [f"\\ {problem.name}", "Minimize"]
    obj = [(v.cost, names[i]) for i, v in enumerate(problem.variables) if v.cost != 0]
    lines.append(f" obj: {_terms(obj)}")
    lines.append("Subject To")
    for k, con in enumerate(problem.constraints):
        label = lp_name(con.name) if con.name else f"c{k}"
        body = _terms((coef, names[col]) for col, coef in con.coefs)
        lines.append(f" {label}: {body} {con.relation} {_fmt(con.rhs)}")
    lines.append("Bounds")
    for name, v in zip(names, problem.variables):
        if v.kind == BINARY and v.lower == 0 and v.upper == 1:
            continue
        lo = "-inf" if v.lower == -math.inf else _fmt(v.lower)
        if v.lower == v.upper:
            lines.append(f" {name} = {_fmt(v.lower)}")
        elif v.upper == math.inf:
            if v.lower != 0:
                lines.append(f" {name} >= {lo}")
        else:
            lines.append(f" {lo} <= {name} <= {_fmt(v.upper)}")
    generals = [n for n, v in zip(names, problem.variables) if v.kind == INTEGER]
    binaries = [n for n, v in zip(names, problem.variables) if v.kind == BINARY]
    if generals:
        lines.append("Generals")
        lines.append(" " + " ".join(generals))
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
