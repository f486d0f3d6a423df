"""Dense two-phase simplex with Bland's rule.

Every decision variable is free unless the caller lists a restricted set of
free indices; free variables are split into positive and negative parts.
Strict relations (``lt``/``gt``) are accepted only by :func:`feasible_point`,
which tightens them by an explicit margin before solving.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._backend import kernels

STRICT_MARGIN = 1e-6
PIVOT_TOL = 1e-11
NOISE_TOL = 1e-14
COST_TOL = 1e-9
FEAS_TOL = 1e-9
CHECK_TOL = 1e-8


class Relation(enum.Enum):
    LE = "le"
    GE = "ge"
    EQ = "eq"
    LT = "lt"
    GT = "gt"


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpError(RuntimeError):
    pass


class DegeneratePivotError(LpError):
    def __init__(self, row: int, tag: str, magnitude: float):
        self.row = row
        self.tag = tag
        self.magnitude = magnitude
        label = f" ({tag})" if tag else ""
        super().__init__(f"degenerate pivot {magnitude:.3e} in constraint row {row}{label}")


class LpNumericalError(LpError):
    pass


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    coefficients: np.ndarray
    relation: Relation
    rhs: float
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "relation", Relation(self.relation))
        object.__setattr__(self, "rhs", float(self.rhs))

    def violation(self, x) -> float:
        """Amount by which ``x`` misses the (non-strict reading of the) relation."""
        lhs = float(self.coefficients @ x)
        if self.relation in (Relation.LE, Relation.LT):
            return max(0.0, lhs - self.rhs)
        if self.relation in (Relation.GE, Relation.GT):
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


def le(coefficients, rhs, tag=""):
    return LinearConstraint(coefficients, Relation.LE, rhs, tag)


def ge(coefficients, rhs, tag=""):
    return LinearConstraint(coefficients, Relation.GE, rhs, tag)


def eq(coefficients, rhs, tag=""):
    return LinearConstraint(coefficients, Relation.EQ, rhs, tag)


@dataclass
class LpProblem:
    num_vars: int
    objective: np.ndarray | None = None
    constraints: list[LinearConstraint] = field(default_factory=list)
    free_vars: frozenset[int] | None = None  # None: every variable free

    def __post_init__(self):
        if self.objective is None:
            self.objective = np.zeros(self.num_vars)
        self.objective = np.asarray(self.objective, dtype=np.float64).reshape(-1)
        if self.objective.shape[0] != self.num_vars:
            raise ValueError("objective length must equal num_vars")
        for k, con in enumerate(self.constraints):
            if con.coefficients.shape[0] != self.num_vars:
                raise ValueError(f"constraint {k} has {con.coefficients.shape[0]} coefficients, expected {self.num_vars}")
        if self.free_vars is not None:
            self.free_vars = frozenset(int(j) for j in self.free_vars)


@dataclass
class LpOutcome:
    status: LpStatus
    point: np.ndarray | None = None
    objective_value: float | None = None
    iterations: int = 0
    violated: tuple[str, ...] = ()
    max_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status is not LpStatus.INFEASIBLE


class _Tableau:
    """Constraint rows plus one reduced-cost row; last column is the rhs."""

    def __init__(self, t: np.ndarray, basis: list[int], tags: list[str], log):
        self.t = t
        self.basis = basis
        self.tags = tags
        self.log = log
        self.iterations = 0

    @property
    def m(self):
        return self.t.shape[0] - 1

    def pivot(self, r: int, c: int):
        kernels.pivot(self.t, r, c)
        self.basis[r] = c
        self.iterations += 1

    def choose_row(self, c: int) -> int | None:
        col = self.t[: self.m, c]
        rhs = self.t[: self.m, -1]
        best, best_ratio = None, np.inf
        tiny = None
        for i in range(self.m):
            a = col[i]
            if a > PIVOT_TOL:
                ratio = rhs[i] / a
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and self.basis[i] < self.basis[best]
                ):
                    best, best_ratio = i, ratio
            elif a > NOISE_TOL and tiny is None:
                tiny = i
        if best is None and tiny is not None:
            raise DegeneratePivotError(tiny, self.tags[tiny], float(col[tiny]))
        return best

    def run(self, allowed: int, max_iter: int) -> bool:
        """Bland iterations over columns ``< allowed``; False when unbounded."""
        while True:
            costs = self.t[-1, :allowed]
            entering = np.flatnonzero(costs < -COST_TOL)
            if entering.size == 0:
                return True
            c = int(entering[0])
            r = self.choose_row(c)
            if r is None:
                return False
            if self.log is not None:
                self.log.append(
                    f"iter {self.iterations}: enter col {c}, leave row {r} (basic {self.basis[r]}), "
                    f"pivot {self.t[r, c]:.6g}, objective {-self.t[-1, -1]:.9g}"
                )
            self.pivot(r, c)
            if self.iterations > max_iter:
                raise LpError(f"simplex did not terminate within {max_iter} pivots")


def _to_standard(problem: LpProblem):
    n = problem.num_vars
    free = set(range(n)) if problem.free_vars is None else set(problem.free_vars)
    cols = []
    for j in range(n):
        cols.append((j, 1.0))
        if j in free:
            cols.append((j, -1.0))
    expand = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        expand[j, k] = s
    return expand


def solve(problem: LpProblem, log: list[str] | None = None) -> LpOutcome:
    """Minimise ``objective @ x`` under the problem's constraints."""
    cons = problem.constraints
    for con in cons:
        if con.relation in (Relation.LT, Relation.GT):
            raise ValueError("strict relations must go through feasible_point")
    expand = _to_standard(problem)
    n_struct = expand.shape[1]
    m = len(cons)
    if m == 0:
        c_std = problem.objective @ expand
        if np.any(np.abs(c_std) > COST_TOL):
            return LpOutcome(LpStatus.UNBOUNDED)
        return LpOutcome(LpStatus.OPTIMAL, np.zeros(problem.num_vars), 0.0)

    a = np.array([con.coefficients @ expand for con in cons]).reshape(m, n_struct)
    b = np.array([con.rhs for con in cons])
    slack_sign = np.array([{Relation.LE: 1.0, Relation.GE: -1.0, Relation.EQ: 0.0}[c.relation] for c in cons])
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    slack_sign[flip] *= -1.0
    slack_rows = np.flatnonzero(slack_sign != 0.0)
    n_slack = slack_rows.size
    need_art = [i for i in range(m) if slack_sign[i] != 1.0]
    n_art = len(need_art)
    width = n_struct + n_slack + n_art

    t = np.zeros((m + 1, width + 1))
    t[:m, :n_struct] = a
    basis = [-1] * m
    for k, i in enumerate(slack_rows):
        t[i, n_struct + k] = slack_sign[i]
        if slack_sign[i] == 1.0:
            basis[i] = n_struct + k
    for k, i in enumerate(need_art):
        t[i, n_struct + n_slack + k] = 1.0
        basis[i] = n_struct + n_slack + k
    t[:m, -1] = b
    # phase-one cost row: sum of artificials expressed in nonbasic terms
    for i in need_art:
        t[-1] -= t[i]
    t[-1, n_struct + n_slack:width] = 0.0
    tags = [con.tag for con in cons]
    tab = _Tableau(np.ascontiguousarray(t), basis, tags, log)
    max_iter = 50 * (m + width) + 1000
    if log is not None:
        log.append(f"phase 1: {m} rows, {width} columns, {n_art} artificials")
    tab.run(width, max_iter)
    scale = max(1.0, float(np.max(np.abs(b))))
    art_start = n_struct + n_slack
    residual = -tab.t[-1, -1]
    if residual > FEAS_TOL * scale:
        violated = tuple(
            tags[need_art[tab.basis[i] - art_start]] or f"row {need_art[tab.basis[i] - art_start]}"
            for i in range(m)
            if tab.basis[i] >= art_start and tab.t[i, -1] > FEAS_TOL * scale
        )
        return LpOutcome(LpStatus.INFEASIBLE, iterations=tab.iterations, violated=violated)

    # drive zero-level artificials out; rows that cannot pivot are redundant
    keep = []
    for i in range(m):
        if tab.basis[i] >= art_start:
            row = tab.t[i, :art_start]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                tab.pivot(i, int(cand[0]))
                keep.append(i)
        else:
            keep.append(i)
    rows = keep + [m]
    t2 = np.ascontiguousarray(np.hstack([tab.t[rows, :art_start], tab.t[rows, -1:]]))
    basis2 = [tab.basis[i] for i in keep]
    tab2 = _Tableau(t2, basis2, [tags[i] for i in keep], log)
    tab2.iterations = tab.iterations
    c_full = np.zeros(art_start)
    c_full[:n_struct] = problem.objective @ expand
    tab2.t[-1, :] = 0.0
    tab2.t[-1, :art_start] = c_full
    for i, bv in enumerate(basis2):
        if c_full[bv] != 0.0:
            tab2.t[-1] -= c_full[bv] * tab2.t[i]
    if log is not None:
        log.append(f"phase 2: {len(keep)} rows after removing {m - len(keep)} redundant")
    if not tab2.run(art_start, max_iter):
        return LpOutcome(LpStatus.UNBOUNDED, iterations=tab2.iterations)

    z = _basic_solution(a, b, slack_rows, slack_sign, n_struct, keep, basis2, tab2)
    x = expand @ z[:n_struct]
    worst = max((con.violation(x) for con in cons), default=0.0)
    if problem.free_vars is not None:
        fixed = [j for j in range(problem.num_vars) if j not in problem.free_vars]
        if fixed:
            worst = max(worst, float(np.max(np.maximum(-x[fixed], 0.0))))
    if worst > CHECK_TOL:
        raise LpNumericalError(f"solution violates a constraint by {worst:.3e} after re-substitution")
    return LpOutcome(
        LpStatus.OPTIMAL,
        x,
        float(problem.objective @ x),
        iterations=tab2.iterations,
        max_violation=worst,
    )


def _basic_solution(a, b, slack_rows, slack_sign, n_struct, keep, basis, tab):
    """Recompute the final vertex from the original rows, not the tableau."""
    n_slack = slack_rows.size
    full = np.zeros((a.shape[0], n_struct + n_slack))
    full[:, :n_struct] = a
    for k, i in enumerate(slack_rows):
        full[i, n_struct + k] = slack_sign[i]
    z = np.zeros(n_struct + n_slack)
    sub = full[np.ix_(keep, basis)]
    try:
        zb = np.linalg.solve(sub, b[keep])
        if not np.all(np.isfinite(zb)):
            raise np.linalg.LinAlgError
        # one refinement pass against the original rows
        zb += np.linalg.solve(sub, b[keep] - sub @ zb)
    except np.linalg.LinAlgError:
        zb = tab.t[:-1, -1].copy()
    z[basis] = np.maximum(zb, 0.0)
    return z


def _tighten(con: LinearConstraint, margin: float) -> LinearConstraint:
    if con.relation is Relation.LT:
        return LinearConstraint(con.coefficients, Relation.LE, con.rhs - margin, con.tag)
    if con.relation is Relation.GT:
        return LinearConstraint(con.coefficients, Relation.GE, con.rhs + margin, con.tag)
    return con


def feasible_point(
    constraints: Sequence[LinearConstraint],
    strict_margin: float = STRICT_MARGIN,
    num_vars: int | None = None,
    free_vars: Iterable[int] | None = None,
    objective=None,
    log: list[str] | None = None,
) -> LpOutcome:
    """Find a point meeting every constraint, strict ones tightened by ``strict_margin``."""
    if strict_margin <= 0:
        raise ValueError("strict_margin must be positive")
    if num_vars is None:
        num_vars = constraints[0].coefficients.shape[0] if constraints else 0
    tightened = [_tighten(c, strict_margin) for c in constraints]
    problem = LpProblem(
        num_vars,
        objective,
        tightened,
        None if free_vars is None else frozenset(free_vars),
    )
    return solve(problem, log=log)
