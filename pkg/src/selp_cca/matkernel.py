"""Dense linear-algebra kernels shared by the estimators.

Matrices are plain 2-D ``float64`` numpy arrays; :func:`as_matrix` is the
single validation point (shape and finiteness).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
    ZeroVarianceColumn,
)

EIG_TOL = 1e-10


class CovarianceModel(str, enum.Enum):
    """Within-block covariance estimate used by the CCA solver."""

    IDENTITY = "identity"
    RIDGE = "ridge"

    @classmethod
    def parse(cls, value: "CovarianceModel | str") -> "CovarianceModel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"selp-i": "identity", "i": "identity",
                   "selp-r": "ridge", "r": "ridge"}
        return cls(aliases.get(key, key))

    @property
    def label(self) -> str:
        return "SELP-I" if self is CovarianceModel.IDENTITY else "SELP-R"


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def standardize_columns(X):
    """Center each column and scale it to unit sample standard deviation.

    Returns:
        ``(Z, means, sds)`` with ``Z = (X - means) / sds``. Standard
        deviations use the ``n - 1`` denominator.
    """
    X = as_matrix(X, "X")
    n = X.shape[0]
    if n < 2:
        raise DimensionMismatch("standardization needs at least two rows")
    means = X.mean(axis=0)
    Xc = X - means
    sds = np.sqrt((Xc * Xc).sum(axis=0) / (n - 1))
    scale = np.maximum(1.0, np.abs(means))
    bad = np.flatnonzero(sds <= 1e-13 * scale)
    if bad.size:
        raise ZeroVarianceColumn(int(bad[0]))
    Z = Xc / sds
    # second centering pass removes the residual O(eps) mean
    Z -= Z.mean(axis=0)
    return Z, means, sds


def center_columns(X) -> np.ndarray:
    X = as_matrix(X, "X")
    return X - X.mean(axis=0)


def cross_covariance(X, Y) -> np.ndarray:
    """Sample cross-covariance ``X^T Y / (n - 1)`` of column-centered blocks."""
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatch(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    return X.T @ Y / (X.shape[0] - 1)


def ridge_coefficient(d: int, n: int) -> float:
    """Diagonal loading ``sqrt(log(d) / n)`` (natural log)."""
    return float(np.sqrt(np.log(d) / n))


def within_covariance(X, model) -> np.ndarray:
    """Regularized within-block covariance of a standardized block."""
    X = as_matrix(X, "X")
    model = CovarianceModel.parse(model)
    n, d = X.shape
    if model is CovarianceModel.IDENTITY:
        return np.eye(d)
    S = X.T @ X / (n - 1)
    S = 0.5 * (S + S.T)
    S[np.diag_indices(d)] += ridge_coefficient(d, n)
    return S


def _is_identity(S: np.ndarray) -> bool:
    return S.shape[0] == S.shape[1] and np.array_equal(S, np.eye(S.shape[0]))


def sym_inv_sqrt(S) -> np.ndarray:
    """Inverse symmetric square root of an SPD matrix."""
    S = as_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"S must be square, got {S.shape}")
    if np.max(np.abs(S - S.T)) > 1e-10:
        raise ValueError("S is not symmetric")
    if _is_identity(S):
        return np.eye(S.shape[0])
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] <= EIG_TOL:
        raise NotPositiveDefinite(float(w[0]))
    R = (V / np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def k_matrix(Sxx, Sxy, Syy) -> np.ndarray:
    """``Sxx^{-1/2} Sxy Syy^{-1/2}``; the identity metric passes through."""
    Sxy = as_matrix(Sxy, "Sxy")
    K = Sxy
    Sxx = as_matrix(Sxx, "Sxx")
    Syy = as_matrix(Syy, "Syy")
    if Sxx.shape[0] != Sxy.shape[0] or Syy.shape[0] != Sxy.shape[1]:
        raise DimensionMismatch("covariance blocks do not conform")
    if not _is_identity(Sxx):
        K = sym_inv_sqrt(Sxx) @ K
    if not _is_identity(Syy):
        K = K @ sym_inv_sqrt(Syy)
    return K


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray
    values: np.ndarray
    right: np.ndarray
    rank: int


def _rank_tol(shape, smax: float) -> float:
    return max(shape) * np.finfo(float).eps * smax


def _fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    # largest-|entry| of each left vector made nonnegative; first index wins ties
    idx = np.argmax(np.abs(U), axis=0)
    flip = U[idx, np.arange(U.shape[1])] < 0
    U[:, flip] *= -1
    V[:, flip] *= -1


def thin_svd(K) -> SvdResult:
    """Thin SVD ``K = U diag(s) V^T`` with deterministic signs.

    Singular values are nonincreasing. ``rank`` counts values above
    ``max(rows, cols) * eps * s_max``.
    """
    K = as_matrix(K, "K")
    try:
        U, s, Vt = np.linalg.svd(K, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    V = Vt.T.copy()
    _fix_signs(U, V)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > _rank_tol(K.shape, smax))) if smax > 0 else 0
    return SvdResult(U, s, V, rank)


def cross_covariance_svd(X, Y) -> SvdResult:
    """Thin SVD of ``cross_covariance(X, Y)`` without forming it when wide.

    When both blocks have more columns than rows, ``X^T Y`` factors through
    the thin QR decompositions of ``X^T`` and ``Y^T`` so only an ``n x n``
    core is decomposed.
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DimensionMismatch(f"row counts differ: {n} vs {Y.shape[0]}")
    p, q = X.shape[1], Y.shape[1]
    if min(p, q) <= n:
        return thin_svd(cross_covariance(X, Y))
    Qx, Rx = np.linalg.qr(X.T)
    Qy, Ry = np.linalg.qr(Y.T)
    core = thin_svd(Rx @ Ry.T / (n - 1))
    U = Qx @ core.left
    V = Qy @ core.right
    _fix_signs(U, V)
    return SvdResult(U, core.values, V, core.rank)


def orth_complement_projector(A) -> np.ndarray:
    """Projector ``I - A A^+`` onto the orthogonal complement of ``range(A)``."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    p = A.shape[0]
    if A.shape[1] == 0 or not np.any(A):
        return np.eye(p)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    Ur = U[:, s > _rank_tol(A.shape, s[0])]
    P = np.eye(p) - Ur @ Ur.T
    return 0.5 * (P + P.T)
