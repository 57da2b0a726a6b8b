"""Sparse generalized-eigenvector estimation by linear programming.

Given a nonsparse eigenpair ``(lam, v0)`` of ``M v = lam S v``, the sparse
estimate solves::

    minimize ||v||_1  subject to  ||M v0 - lam * S v||_inf <= tau

Only the product ``t = M v0`` enters the problem, so an instance stores
``t`` directly. Splitting ``v = v_plus - v_minus`` turns it into an LP over
nonnegative variables with ``2 d`` inequality rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InfeasibleTau, LpFailure
from .lp import LpProblem, LpStatus, solve_lp

ZERO_TOL = 1e-10


@dataclass(frozen=True)
class SelpInstance:
    """One SELP subproblem.

    ``metric=None`` means the identity metric.
    """

    target: np.ndarray
    eigenvalue: float
    metric: np.ndarray | None = None
    tau: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.target, dtype=float).ravel()
        if t.size == 0 or not np.all(np.isfinite(t)):
            raise ValueError("target must be a non-empty finite vector")
        if not (np.isfinite(self.eigenvalue) and self.eigenvalue > 0):
            raise ValueError(f"eigenvalue must be positive, got {self.eigenvalue}")
        if not (np.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be nonnegative, got {self.tau}")
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "eigenvalue", float(self.eigenvalue))
        object.__setattr__(self, "tau", float(self.tau))
        if self.metric is not None:
            S = np.asarray(self.metric, dtype=float)
            if S.shape != (t.size, t.size):
                raise DimensionMismatch(f"metric must be {t.size}x{t.size}, got {S.shape}")
            object.__setattr__(self, "metric", S)

    @property
    def dim(self) -> int:
        return self.target.size

    def scaled_metric(self) -> np.ndarray:
        if self.metric is None:
            return self.eigenvalue * np.eye(self.dim)
        return self.eigenvalue * self.metric

    def residual(self, v) -> float:
        """``||t - lam S v||_inf``."""
        v = np.asarray(v, dtype=float)
        if self.metric is None:
            r = self.target - self.eigenvalue * v
        else:
            r = self.target - self.eigenvalue * (self.metric @ v)
        return float(np.max(np.abs(r)))

    def with_tau(self, tau: float) -> "SelpInstance":
        return SelpInstance(self.target, self.eigenvalue, self.metric, tau)


@dataclass(frozen=True)
class SparseVector:
    """Sparse vector stored as strictly increasing ``indices`` and ``values``."""

    length: int
    indices: np.ndarray
    values: np.ndarray

    @classmethod
    def from_dense(cls, v, tol: float = ZERO_TOL) -> "SparseVector":
        v = np.asarray(v, dtype=float).ravel()
        idx = np.flatnonzero(np.abs(v) > tol)
        return cls(v.size, idx.astype(np.intp), v[idx].copy())

    @classmethod
    def zeros(cls, length: int) -> "SparseVector":
        return cls(length, np.zeros(0, dtype=np.intp), np.zeros(0))

    def dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[self.indices] = self.values
        return out

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def support(self) -> set[int]:
        return {int(i) for i in self.indices}

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def is_zero(self) -> bool:
        return self.indices.size == 0

    def normalized(self) -> "SparseVector":
        nrm = self.norm
        if nrm == 0:
            return self
        return SparseVector(self.length, self.indices, self.values / nrm)

    def __neg__(self) -> "SparseVector":
        return SparseVector(self.length, self.indices, -self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.length == other.length
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.length, self.indices.tobytes(), self.values.tobytes()))


def tau_upper_bound(instance: SelpInstance) -> float:
    """Smallest ``tau`` at which the zero vector is feasible, ``||t||_inf``."""
    return float(np.max(np.abs(instance.target)))


def _split_lp(instance: SelpInstance, eq_lhs=None) -> LpProblem:
    d = instance.dim
    t, tau = instance.target, instance.tau
    M = instance.scaled_metric()
    A = np.empty((2 * d, 2 * d))
    A[:d, :d] = M
    A[:d, d:] = -M
    A[d:, :d] = -M
    A[d:, d:] = M
    b = np.concatenate([tau + t, tau - t])
    if eq_lhs is None:
        return LpProblem(np.ones(2 * d), A, b)
    E = np.hstack([eq_lhs, -eq_lhs])
    return LpProblem(np.ones(2 * d), A, b, E, np.zeros(E.shape[0]))


def _recover(instance: SelpInstance, x: np.ndarray) -> SparseVector:
    d = instance.dim
    return SparseVector.from_dense(x[:d] - x[d:])


def selp_solve(instance: SelpInstance, rule: str = "dantzig") -> SparseVector:
    """Minimum-l1 vector within ``tau`` of the eigen-equation residual.

    Entries with magnitude at or below ``1e-10`` are set to exact zero.
    Non-unique optima are resolved by the deterministic pivoting order.
    """
    if tau_upper_bound(instance) <= instance.tau:
        return SparseVector.zeros(instance.dim)
    sol = solve_lp(_split_lp(instance), method="dual", rule=rule)
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasibleTau(sol.status, "SELP constraint set reported empty")
    if not sol.ok:
        raise LpFailure(sol.status)
    return _recover(instance, sol.x)


def selp_solve_orthogonal(instance: SelpInstance, basis, rule: str = "dantzig") -> SparseVector:
    """:func:`selp_solve` with ``basis^T S v = 0`` for earlier solutions.

    ``basis`` is ``d x k``; with ``k == 0`` this is plain :func:`selp_solve`.
    Raises :class:`LpFailure` (status ``Infeasible``) when the orthogonality
    rows and the residual bound cannot hold together.
    """
    B = np.asarray(basis, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.size == 0:
        return selp_solve(instance, rule=rule)
    if B.shape[0] != instance.dim:
        raise DimensionMismatch(f"basis must have {instance.dim} rows, got {B.shape[0]}")
    S = np.eye(instance.dim) if instance.metric is None else instance.metric
    sol = solve_lp(_split_lp(instance, B.T @ S), method="primal", rule=rule)
    if not sol.ok:
        raise LpFailure(sol.status)
    return _recover(instance, sol.x)
