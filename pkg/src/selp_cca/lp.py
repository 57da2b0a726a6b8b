"""Dense simplex solver for small and medium linear programs.

Problems are posed as::

    minimize    c @ x
    subject to  A @ x <= b
                E @ x == f
                x >= 0

Two algorithms share one tableau representation:

* ``"primal"``: two-phase primal simplex (artificial variables in phase 1).
* ``"dual"``: dual simplex started from the all-slack basis. It needs
  ``c >= 0`` and no equality rows, which is exactly the shape of the
  l1-minimization problems built by :mod:`selp_cca.selp`.

Pricing defaults to Bland's lowest-index rule for entering and leaving
variables. The faster ``"dantzig"`` rule breaks ties by lowest index as well
and reverts to Bland's rule after a run of degenerate pivots, so both
terminate on degenerate problems and both are fully deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger as _dger

__all__ = ["LpStatus", "LpProblem", "LpSolution", "solve_lp"]

_PIVOT_TOL = 1e-9
_OPT_TOL = 1e-9
_STALL_LIMIT = 50


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL = "Numerical"


def _as_matrix(a, ncols: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, ncols)
    if a.ndim != 2 or a.shape[1] != ncols:
        raise ValueError(f"{name} must have shape (k, {ncols}), got {a.shape}")
    return a


def _as_vector(b, nrows: int, name: str) -> np.ndarray:
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    if b.shape != (nrows,):
        raise ValueError(f"{name} must have length {nrows}, got {b.shape[0]}")
    return b


@dataclass(frozen=True)
class LpProblem:
    """Linear program in inequality/equality form with nonnegative variables."""

    objective: np.ndarray
    ineq_lhs: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None
    eq_lhs: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        m = c.size
        if m == 0:
            raise ValueError("objective must have at least one variable")
        A = _as_matrix(self.ineq_lhs, m, "ineq_lhs")
        b = _as_vector(self.ineq_rhs, A.shape[0], "ineq_rhs")
        E = _as_matrix(self.eq_lhs, m, "eq_lhs")
        f = _as_vector(self.eq_rhs, E.shape[0], "eq_rhs")
        for name, arr in (("objective", c), ("ineq_lhs", A), ("ineq_rhs", b),
                          ("eq_lhs", E), ("eq_rhs", f)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "ineq_lhs", A)
        object.__setattr__(self, "ineq_rhs", b)
        object.__setattr__(self, "eq_lhs", E)
        object.__setattr__(self, "eq_rhs", f)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_constraints(self) -> int:
        return self.ineq_lhs.shape[0] + self.eq_lhs.shape[0]

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of any constraint (including x >= 0) at ``x``."""
        viol = [0.0, float(np.max(-x, initial=0.0))]
        if self.ineq_lhs.shape[0]:
            viol.append(float(np.max(self.ineq_lhs @ x - self.ineq_rhs)))
        if self.eq_lhs.shape[0]:
            viol.append(float(np.max(np.abs(self.eq_lhs @ x - self.eq_rhs))))
        return max(viol)


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective_value: float = float("nan")
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _IterationLimit(Exception):
    pass


class _Tableau:
    """Row-reduced simplex tableau.

    Rows ``0..m-1`` are constraints, row ``m`` holds reduced costs; the last
    column is the right-hand side (``-objective`` in the cost row).
    """

    def __init__(self, T: np.ndarray, basis: np.ndarray, budget: int,
                 rule: str = "bland"):
        self.T = np.asfortranarray(T)
        self.basis = basis
        self.budget = budget
        self.iterations = 0
        self.bland = rule == "bland"
        self.stall = 0

    def _track(self, step: float) -> None:
        # permanent switch to Bland's rule once progress stalls
        self.stall = self.stall + 1 if step <= 1e-14 else 0
        if self.stall >= _STALL_LIMIT:
            self.bland = True

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, j: int) -> None:
        if self.iterations >= self.budget:
            raise _IterationLimit
        self.iterations += 1
        T = self.T
        prow = T[r] / T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        # in-place rank-1 update; needs Fortran order
        T = self.T = _dger(-1.0, col, prow, a=T, overwrite_a=1)
        T[r] = prow
        T[:, j] = 0.0
        T[r, j] = 1.0
        self.basis[r] = j

    def primal_loop(self, ncols: int) -> LpStatus:
        """Primal simplex over columns ``0..ncols-1``."""
        T = self.T
        m = self.m
        while True:
            d = T[m, :ncols]
            cand = np.flatnonzero(d < -_OPT_TOL)
            if cand.size == 0:
                return LpStatus.OPTIMAL
            j = int(cand[0]) if self.bland else int(cand[np.argmin(d[cand])])
            col = T[:m, j]
            rows = np.flatnonzero(col > _PIVOT_TOL)
            if rows.size == 0:
                return LpStatus.UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(tied[np.argmin(self.basis[tied])])
            self._track(best)
            self.pivot(r, j)

    def dual_loop(self, ncols: int, feas_tol: float) -> LpStatus:
        """Dual simplex over columns ``0..ncols-1``."""
        T = self.T
        m = self.m
        while True:
            rhs = T[:m, -1]
            bad = np.flatnonzero(rhs < -feas_tol)
            if bad.size == 0:
                return LpStatus.OPTIMAL
            if self.bland:
                r = int(bad[np.argmin(self.basis[bad])])
            else:
                r = int(bad[np.argmin(rhs[bad])])
            row = T[r, :ncols]
            cols = np.flatnonzero(row < -_PIVOT_TOL)
            if cols.size == 0:
                return LpStatus.INFEASIBLE
            ratios = np.maximum(T[m, cols], 0.0) / -row[cols]
            best = ratios.min()
            j = int(cols[np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))[0]])
            self._track(best)
            self.pivot(r, j)


def _extract(tab: _Tableau, n: int) -> np.ndarray:
    x = np.zeros(n)
    rhs = tab.T[:tab.m, -1]
    for r, j in enumerate(tab.basis):
        if j < n:
            x[j] = rhs[r]
    return np.maximum(x, 0.0)


def _finish(problem: LpProblem, tab: _Tableau, status: LpStatus) -> LpSolution:
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, iterations=tab.iterations)
    if not np.all(np.isfinite(tab.T)):
        return LpSolution(LpStatus.NUMERICAL, iterations=tab.iterations)
    x = _extract(tab, problem.n_vars)
    scale = 1.0 + max(np.max(np.abs(problem.ineq_rhs), initial=0.0),
                      np.max(np.abs(problem.eq_rhs), initial=0.0))
    if problem.max_violation(x) > 1e-7 * scale:
        return LpSolution(LpStatus.NUMERICAL, x=x, iterations=tab.iterations)
    return LpSolution(LpStatus.OPTIMAL, x=x,
                      objective_value=float(problem.objective @ x),
                      iterations=tab.iterations, basis=tab.basis.copy())


def _solve_primal(problem: LpProblem, budget: int, feas_tol: float,
                  rule: str) -> LpSolution:
    c, A, b = problem.objective, problem.ineq_lhs, problem.ineq_rhs
    E, f = problem.eq_lhs, problem.eq_rhs
    n, mi, me = c.size, A.shape[0], E.shape[0]
    m = mi + me

    ineq_sign = np.where(b < 0, -1.0, 1.0)
    eq_sign = np.where(f < 0, -1.0, 1.0)
    needs_art = np.concatenate([b < 0, np.ones(me, dtype=bool)])
    n_art = int(needs_art.sum())
    ncols = n + mi + n_art

    T = np.zeros((m + 1, ncols + 1))
    T[:mi, :n] = A * ineq_sign[:, None]
    T[:mi, n:n + mi] = np.diag(ineq_sign)
    T[:mi, -1] = b * ineq_sign
    T[mi:m, :n] = E * eq_sign[:, None]
    T[mi:m, -1] = f * eq_sign

    basis = np.empty(m, dtype=np.intp)
    art_rows = np.flatnonzero(needs_art)
    basis[:mi] = n + np.arange(mi)
    for k, r in enumerate(art_rows):
        T[r, n + mi + k] = 1.0
        basis[r] = n + mi + k
    tab = _Tableau(T, basis, budget, rule)
    T = tab.T

    try:
        if n_art:
            # phase 1: minimize the sum of artificials
            T[m, n + mi:ncols] = 1.0
            T[m] -= T[art_rows].sum(axis=0)
            status = tab.primal_loop(ncols)
            if status is not LpStatus.OPTIMAL:
                return LpSolution(LpStatus.NUMERICAL, iterations=tab.iterations)
            scale = 1.0 + np.max(np.abs(T[:m, -1]), initial=0.0)
            if -T[m, -1] > max(feas_tol, 1e-9) * scale * max(1, n_art):
                return LpSolution(LpStatus.INFEASIBLE, iterations=tab.iterations)
            # drive zero-level artificials out of the basis; drop redundant rows
            keep = np.ones(m, dtype=bool)
            for r in range(m):
                if tab.basis[r] < n + mi:
                    continue
                nz = np.flatnonzero(np.abs(tab.T[r, :n + mi]) > _PIVOT_TOL)
                if nz.size:
                    tab.pivot(r, int(nz[0]))
                else:
                    keep[r] = False
            T = np.vstack([tab.T[:m][keep][:, list(range(n + mi)) + [ncols]],
                           np.zeros((1, n + mi + 1))])
            used = tab.iterations
            tab = _Tableau(T, tab.basis[keep].copy(), budget, rule)
            tab.iterations = used
        ncols = n + mi
        cost = np.concatenate([c, np.zeros(mi)])
        T = tab.T
        mm = tab.m
        T[mm, :ncols] = cost
        T[mm, -1] = 0.0
        T[mm] -= cost[tab.basis] @ T[:mm]
        status = tab.primal_loop(ncols)
    except _IterationLimit:
        return LpSolution(LpStatus.ITERATION_LIMIT, iterations=tab.iterations)
    return _finish(problem, tab, status)


def _solve_dual(problem: LpProblem, budget: int, feas_tol: float,
                rule: str) -> LpSolution:
    c, A, b = problem.objective, problem.ineq_lhs, problem.ineq_rhs
    if problem.eq_lhs.shape[0]:
        raise ValueError("dual simplex path does not accept equality rows")
    if np.any(c < 0):
        raise ValueError("dual simplex path requires a nonnegative objective")
    n, m = c.size, A.shape[0]
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = c
    tab = _Tableau(T, n + np.arange(m), budget, rule)
    try:
        status = tab.dual_loop(n + m, feas_tol)
    except _IterationLimit:
        return LpSolution(LpStatus.ITERATION_LIMIT, iterations=tab.iterations)
    return _finish(problem, tab, status)


def solve_lp(problem: LpProblem, max_iters: int | None = None,
             feas_tol: float = 1e-9, method: str = "auto",
             rule: str = "bland") -> LpSolution:
    """Solve ``problem`` with a dense simplex method.

    Args:
        problem: the linear program.
        max_iters: pivot budget; defaults to ``50 * (variables + constraints)``.
        feas_tol: primal feasibility tolerance.
        method: ``"primal"``, ``"dual"`` or ``"auto"``. ``"auto"`` picks the
            dual simplex when the all-slack basis is dual feasible (nonnegative
            costs, inequality rows only) and the two-phase primal otherwise.

    Returns:
        An :class:`LpSolution`. Failure modes are reported through
        ``status``; they are never raised.
    """
    if max_iters is None:
        max_iters = 50 * (problem.n_vars + problem.n_constraints)
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if feas_tol <= 0:
        raise ValueError("feas_tol must be positive")
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pricing rule {rule!r}")
    if method == "auto":
        dual_ok = problem.eq_lhs.shape[0] == 0 and np.all(problem.objective >= 0)
        method = "dual" if dual_ok else "primal"
    if method == "primal":
        return _solve_primal(problem, max_iters, feas_tol, rule)
    if method == "dual":
        return _solve_dual(problem, max_iters, feas_tol, rule)
    raise ValueError(f"unknown method {method!r}")
