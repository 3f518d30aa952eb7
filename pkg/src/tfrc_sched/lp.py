"""LP relaxation kernel.

Problems are ``maximize c @ x  s.t.  A_ub @ x <= b_ub,  lb <= x <= ub`` with
finite lower bounds.  Two backends share the contract: a bounded-variable
revised simplex with Bland's rule (``"simplex"``) and HiGHS through scipy
(``"highs"``), which the offline solver uses at simulation scale.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

MAX_ITERATIONS = 1_000_000
TOL = 1e-9


class LpStatus(str, enum.Enum):
    OPTIMAL = "OPTIMAL"
    INFEASIBLE = "INFEASIBLE"
    UNBOUNDED = "UNBOUNDED"
    ITER_LIMIT = "ITER_LIMIT"


@dataclass
class LinearProgram:
    c: np.ndarray
    A_ub: sp.csc_matrix
    b_ub: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        if self.A_ub is None:
            self.A_ub = sp.csc_matrix((0, n))
        self.A_ub = sp.csc_matrix(self.A_ub, dtype=float)
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_rows(self) -> int:
        return self.b_ub.size


@dataclass
class LpSolution:
    status: LpStatus
    objective: float
    x: np.ndarray
    iterations: int = 0


def max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint or bound residual of ``x`` (0 when feasible)."""
    worst = 0.0
    if lp.num_rows:
        worst = max(worst, float(np.max(lp.A_ub @ x - lp.b_ub, initial=0.0)))
    worst = max(worst, float(np.max(lp.lb - x, initial=0.0)))
    worst = max(worst, float(np.max(x - lp.ub, initial=0.0)))
    return worst


def solve_lp(lp: LinearProgram, method: str = "highs",
             max_iterations: int = MAX_ITERATIONS) -> LpSolution:
    if lp.num_vars == 0:
        raise ValueError("LP has no variables")
    if np.any(~np.isfinite(lp.lb)):
        raise ValueError("lower bounds must be finite")
    if method == "highs":
        return _solve_highs(lp)
    if method == "simplex":
        return RevisedSimplex(lp, max_iterations).solve()
    raise ValueError(f"unknown LP method {method!r}")


def _solve_highs(lp: LinearProgram) -> LpSolution:
    bounds = [(lo, None if np.isinf(hi) else hi) for lo, hi in zip(lp.lb, lp.ub)]
    kwargs = dict(A_ub=lp.A_ub if lp.num_rows else None, b_ub=lp.b_ub if lp.num_rows else None,
                  bounds=bounds, method="highs")
    res = linprog(-lp.c, **kwargs)
    if res.status == 4:
        # HiGHS presolve occasionally ends with model status "unknown"
        res = linprog(-lp.c, options={"presolve": False}, **kwargs)
    if res.status == 4:
        return RevisedSimplex(lp).solve()
    status = {0: LpStatus.OPTIMAL, 1: LpStatus.ITER_LIMIT,
              2: LpStatus.INFEASIBLE, 3: LpStatus.UNBOUNDED}[res.status]
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, float("nan"), np.full(lp.num_vars, np.nan), res.nit)
    x = np.clip(res.x, lp.lb, lp.ub)
    return LpSolution(status, float(lp.c @ x), x, res.nit)


class RevisedSimplex:
    """Two-phase bounded-variable revised simplex, Bland's anti-cycling rule.

    Columns are kept in a sparse CSC matrix ``[A | I | -E]`` (structural,
    slack, artificial); the basis matrix is refactored densely each pivot,
    which is fine for the small LPs this backend is meant for.
    """

    def __init__(self, lp: LinearProgram, max_iterations: int = MAX_ITERATIONS):
        self.lp = lp
        self.max_iterations = max_iterations
        self.iterations = 0

        n, m = lp.num_vars, lp.num_rows
        self.n, self.m = n, m
        self.upper_struct = lp.ub - lp.lb
        rhs = lp.b_ub - (lp.A_ub @ lp.lb if m else 0.0)
        self.rhs = np.asarray(rhs, dtype=float)
        neg = np.flatnonzero(self.rhs < 0)
        self.art_rows = neg
        k = neg.size
        art = sp.csc_matrix((-np.ones(k), (neg, np.arange(k))), shape=(m, k))
        self.A = sp.hstack([lp.A_ub, sp.identity(m, format="csc"), art], format="csc")
        self.N = n + m + k
        self.upper = np.concatenate([self.upper_struct, np.full(m + k, np.inf)])

        self.basis = np.arange(n, n + m)
        self.basis[neg] = n + m + np.arange(k)
        self.at_upper = np.zeros(self.N, dtype=bool)
        self.x = np.zeros(self.N)

    def solve(self) -> LpSolution:
        if np.any(self.upper_struct < -TOL):
            return self._fail(LpStatus.INFEASIBLE)
        self.upper_struct = np.maximum(self.upper_struct, 0.0)
        self.upper[: self.n] = self.upper_struct
        self._recompute_basics()

        n, m = self.n, self.m
        if self.art_rows.size:
            cost = np.zeros(self.N)
            cost[n + m:] = -1.0
            status = self._iterate(cost)
            if status is not LpStatus.OPTIMAL:
                return self._fail(status)
            if self.x[n + m:].sum() > 1e-7:
                return self._fail(LpStatus.INFEASIBLE)
            self.upper[n + m:] = 0.0
            self.x[n + m:] = 0.0
            self._recompute_basics()

        cost = np.zeros(self.N)
        cost[:n] = self.lp.c
        status = self._iterate(cost)
        if status is not LpStatus.OPTIMAL:
            return self._fail(status)
        x = np.clip(self.x[:n] + self.lp.lb, self.lp.lb, self.lp.ub)
        return LpSolution(LpStatus.OPTIMAL, float(self.lp.c @ x), x, self.iterations)

    def _fail(self, status: LpStatus) -> LpSolution:
        return LpSolution(status, float("nan"), np.full(self.n, np.nan), self.iterations)

    def _basis_matrix(self) -> np.ndarray:
        return self.A[:, self.basis].toarray()

    def _recompute_basics(self):
        nonbasic = np.ones(self.N, dtype=bool)
        nonbasic[self.basis] = False
        xn = np.where(nonbasic, self.x, 0.0)
        r = self.rhs - self.A @ xn
        self.x[self.basis] = np.linalg.solve(self._basis_matrix(), r) if self.m else []

    def _iterate(self, cost: np.ndarray) -> LpStatus:
        m = self.m
        while True:
            if self.iterations >= self.max_iterations:
                return LpStatus.ITER_LIMIT
            B = self._basis_matrix()
            pi = np.linalg.solve(B.T, cost[self.basis]) if m else np.zeros(0)
            reduced = cost - self.A.T @ pi
            in_basis = np.zeros(self.N, dtype=bool)
            in_basis[self.basis] = True

            can_rise = ~in_basis & ~self.at_upper & (reduced > TOL) & (self.upper > TOL)
            can_fall = ~in_basis & self.at_upper & (reduced < -TOL)
            eligible = np.flatnonzero(can_rise | can_fall)
            if eligible.size == 0:
                return LpStatus.OPTIMAL
            j = int(eligible[0])  # Bland: lowest index enters
            direction = 1.0 if can_rise[j] else -1.0

            alpha = np.linalg.solve(B, self.A[:, j].toarray().ravel()) if m else np.zeros(0)
            step = direction * alpha
            xb = self.x[self.basis]
            ub_b = self.upper[self.basis]
            ratios = np.full(m, np.inf)
            dec = step > TOL
            ratios[dec] = np.maximum(xb[dec], 0.0) / step[dec]
            inc = (step < -TOL) & np.isfinite(ub_b)
            ratios[inc] = np.maximum(ub_b[inc] - xb[inc], 0.0) / -step[inc]

            t_flip = self.upper[j]
            t_pivot = ratios.min() if m else np.inf
            if not np.isfinite(t_pivot) and not np.isfinite(t_flip):
                return LpStatus.UNBOUNDED
            self.iterations += 1

            if t_flip <= t_pivot:
                self.x[j] += direction * t_flip
                self.x[self.basis] = xb - t_flip * step
                self.at_upper[j] = not self.at_upper[j]
                continue

            ties = np.flatnonzero(ratios <= t_pivot + TOL)
            r = int(ties[np.argmin(self.basis[ties])])  # Bland: lowest index leaves
            leaving = self.basis[r]
            self.x[j] += direction * t_pivot
            self.x[self.basis] = xb - t_pivot * step
            if step[r] > 0:
                self.x[leaving] = 0.0
                self.at_upper[leaving] = False
            else:
                self.x[leaving] = self.upper[leaving]
                self.at_upper[leaving] = True
            self.at_upper[j] = False
            self.basis[r] = j
            self._recompute_basics()
