"""Small dense linear programs.

Maximize ``objective . x`` subject to ``<=`` and ``=`` rows with every
variable boxed in ``[0, upper]``.  Two-phase tableau simplex with Bland's
rule; the final basis is re-solved against the original data so returned
values carry no accumulated pivoting error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-9
_PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[str, float]
    relation: str  # "<=" or "="
    rhs: float
    label: str = ""

    def __post_init__(self) -> None:
        if self.relation not in ("<=", "="):
            raise ValueError(f"unsupported relation {self.relation!r}")


@dataclass(frozen=True)
class LinearProgram:
    variables: tuple[str, ...]
    constraints: tuple[Constraint, ...]
    objective: Mapping[str, float]
    upper: Mapping[str, float] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self) -> None:
        known = set(self.variables)
        if len(known) != len(self.variables):
            raise ValueError("duplicate variable names")
        for c in self.constraints:
            unknown = set(c.coeffs) - known
            if unknown:
                raise ValueError(f"constraint {c.label or c} uses undeclared {sorted(unknown)}")
        if set(self.objective) - known:
            raise ValueError("objective uses undeclared variables")

    def bound(self, var: str) -> float:
        return self.upper.get(var, math.inf)

    def to_text(self) -> str:
        """Plain maximize / subject to / bounds listing, for inspection."""

        def term(coef: float, var: str, first: bool) -> str:
            sign = "-" if coef < 0 else ("" if first else "+")
            mag = abs(coef)
            body = var if mag == 1 else f"{mag:g} {var}"
            return f"{sign} {body}".strip() if first else f"{sign} {body}"

        def expr(coeffs: Mapping[str, float]) -> str:
            items = [(v, coeffs[v]) for v in self.variables if coeffs.get(v, 0.0) != 0.0]
            if not items:
                return "0"
            return " ".join(term(c, v, i == 0) for i, (v, c) in enumerate(items))

        lines = [f"\\ {self.name}" if self.name else "\\ program", "maximize", f"  obj: {expr(self.objective)}", "subject to"]
        for i, c in enumerate(self.constraints):
            op = "<=" if c.relation == "<=" else "="
            lines.append(f"  {c.label or f'c{i}'}: {expr(c.coeffs)} {op} {c.rhs:.17g}")
        lines.append("bounds")
        for v in self.variables:
            ub = self.bound(v)
            lines.append(f"  0 <= {v} <= {ub:.17g}" if math.isfinite(ub) else f"  0 <= {v}")
        lines.append("end")
        return "\n".join(lines)


@dataclass(frozen=True)
class LpSolution:
    status: str
    values: dict[str, float]
    objective_value: float
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class SimplexInvariantError(RuntimeError):
    """The solver reached a state boxed programs cannot produce."""


def solve(program: LinearProgram) -> LpSolution:
    names = program.variables
    n = len(names)
    if n == 0:
        raise ValueError("program has no variables")
    col = {v: j for j, v in enumerate(names)}

    rows: list[np.ndarray] = []
    rhs: list[float] = []
    is_eq: list[bool] = []
    for c in program.constraints:
        a = np.zeros(n)
        for v, coef in c.coeffs.items():
            a[col[v]] += coef
        rows.append(a)
        rhs.append(float(c.rhs))
        is_eq.append(c.relation == "=")
    for j, v in enumerate(names):
        ub = program.bound(v)
        if math.isfinite(ub):
            a = np.zeros(n)
            a[j] = 1.0
            rows.append(a)
            rhs.append(float(ub))
            is_eq.append(False)

    A = np.array(rows, dtype=float).reshape(len(rows), n)
    b = np.array(rhs, dtype=float)
    eq = np.array(is_eq, dtype=bool)
    cvec = np.array([float(program.objective.get(v, 0.0)) for v in names])

    status, x, iters = _simplex(cvec, A, b, eq)
    if status != OPTIMAL:
        return LpSolution(status, {}, math.nan, iters)
    x = np.clip(x, 0.0, None)
    values = {v: float(x[j]) for j, v in enumerate(names)}
    return LpSolution(OPTIMAL, values, float(cvec @ x), iters)


def _simplex(c: np.ndarray, A: np.ndarray, b: np.ndarray, eq: np.ndarray) -> tuple[str, np.ndarray, int]:
    """Maximize c.x s.t. A x (<= or =) b, x >= 0."""
    m, n = A.shape
    n_slack = int((~eq).sum())
    # structural | slacks | artificials | rhs
    T = np.zeros((m, n + n_slack + m + 1))
    T[:, :n] = A
    slack_of_row = np.full(m, -1)
    k = n
    for i in range(m):
        if not eq[i]:
            T[i, k] = 1.0
            slack_of_row[i] = k
            k += 1
    T[:, -1] = b
    neg = T[:, -1] < 0
    T[neg] *= -1.0

    art0 = n + n_slack
    basis = np.empty(m, dtype=int)
    needs_art = []
    for i in range(m):
        s = slack_of_row[i]
        if s >= 0 and T[i, s] > 0:
            basis[i] = s
        else:
            basis[i] = art0 + i
            T[i, art0 + i] = 1.0
            needs_art.append(i)
    n_cols = n + n_slack + m
    scale = max(1.0, float(np.abs(b).max(initial=0.0)))
    iters = 0

    if needs_art:
        cost = np.zeros(n_cols)
        cost[art0 + np.array(needs_art)] = -1.0
        status, iters = _run(T, basis, cost, allowed=n_cols, iters=iters)
        if status != OPTIMAL:
            raise SimplexInvariantError("phase one cannot be unbounded")
        infeas = sum(T[i, -1] for i in range(m) if basis[i] >= art0)
        if infeas > FEAS_TOL * scale:
            return INFEASIBLE, np.zeros(n), iters
        # drive zero-level artificials out of the basis; rows with no pivot are redundant
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= art0:
                piv = next((j for j in range(art0) if abs(T[i, j]) > 1e-9), None)
                if piv is None:
                    keep[i] = False
                else:
                    _pivot(T, basis, i, piv)
                    iters += 1
        T = T[keep]
        basis = basis[keep]

    cost = np.zeros(n_cols)
    cost[:n] = c
    status, iters = _run(T, basis, cost, allowed=art0, iters=iters)
    if status != OPTIMAL:
        return status, np.zeros(n), iters

    x = _polish(A, b, basis, T, n, n_slack, slack_of_row)
    return OPTIMAL, x, iters


def _run(T: np.ndarray, basis: np.ndarray, cost: np.ndarray, allowed: int, iters: int) -> tuple[str, int]:
    """Primal simplex iterations with Bland's rule over columns < ``allowed``."""
    m = T.shape[0]
    limit = 50_000
    while True:
        if iters > limit:
            raise SimplexInvariantError("iteration limit reached despite Bland's rule")
        cb = cost[basis]
        reduced = cost[:allowed] - cb @ T[:, :allowed]
        reduced[basis[basis < allowed]] = 0.0
        candidates = np.flatnonzero(reduced > 1e-10)
        entering = int(candidates[0]) if candidates.size else -1
        if entering < 0:
            return OPTIMAL, iters
        column = T[:, entering]
        best_ratio = math.inf
        leave = -1
        for i in range(m):
            if column[i] > _PIVOT_TOL:
                ratio = T[i, -1] / column[i]
                if ratio < best_ratio - 1e-12 or (abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[leave]):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return UNBOUNDED, iters
        _pivot(T, basis, leave, entering)
        iters += 1


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _polish(A, b, basis, T, n, n_slack, slack_of_row) -> np.ndarray:
    """Recompute the basic solution from the original rows for the final basis."""
    m = A.shape[0]
    x_tab = np.zeros(T.shape[1] - 1)
    x_tab[basis] = T[:, -1]
    if len(basis) == m:
        full = np.zeros((m, n + n_slack))
        full[:, :n] = A
        for i in range(m):
            if slack_of_row[i] >= 0:
                full[i, slack_of_row[i]] = 1.0
        try:
            xb = np.linalg.solve(full[:, basis], b)
        except np.linalg.LinAlgError:
            return x_tab[:n]
        cand = np.zeros_like(x_tab)
        cand[basis] = xb
        if np.all(np.isfinite(cand)) and np.abs(cand - x_tab).max() <= 1e-6 * max(1.0, np.abs(x_tab).max()):
            x_tab = cand
    return x_tab[:n]
