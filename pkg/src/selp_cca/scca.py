"""Sparse canonical correlation analysis via SELP.

Each component starts from the leading singular pair of
``Sxx^{-1/2} Sxy Syy^{-1/2}`` and alternates two SELP subproblems, one per
block, re-estimating the canonical correlation from the scores after every
pass. Later components are fit on data deflated by the projector onto the
orthogonal complement of the earlier canonical vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateCrossCovariance, DegenerateScores, DimensionMismatch
from .matkernel import (
    CovarianceModel,
    as_matrix,
    center_columns,
    cross_covariance,
    cross_covariance_svd,
    k_matrix,
    orth_complement_projector,
    standardize_columns,
    sym_inv_sqrt,
    thin_svd,
    within_covariance,
)
from .selp import SelpInstance, SparseVector, selp_solve

log = logging.getLogger(__name__)

ZERO_SOLUTION = "ZeroSolution"
DEGENERATE_SCORES = "DegenerateScores"
ABSENT = "Absent"


@dataclass(frozen=True)
class CcaConfig:
    model: CovarianceModel = CovarianceModel.IDENTITY
    tau_x: float = 0.0
    tau_y: float = 0.0
    components: int = 1
    max_iters: int = 20
    conv_tol: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "model", CovarianceModel.parse(self.model))
        if self.tau_x < 0 or self.tau_y < 0:
            raise ValueError("tau_x and tau_y must be nonnegative")
        if self.components < 1:
            raise ValueError("components must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.conv_tol > 0:
            raise ValueError("conv_tol must be positive")

    def with_taus(self, tau_x: float, tau_y: float) -> "CcaConfig":
        return replace(self, tau_x=float(tau_x), tau_y=float(tau_y))


@dataclass
class ComponentFit:
    """Result of the alternating SELP iterations for one component."""

    alpha: SparseVector
    beta: SparseVector
    rho: float
    iterations: int
    converged: bool
    flag: str | None = None
    tau_x: float = 0.0
    tau_y: float = 0.0

    @property
    def ok(self) -> bool:
        return self.flag is None


@dataclass
class CcaFit:
    alphas: list[SparseVector] = field(default_factory=list)
    betas: list[SparseVector] = field(default_factory=list)
    rhos: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    flags: list[str | None] = field(default_factory=list)
    taus: list[tuple[float, float]] = field(default_factory=list)
    model: CovarianceModel = CovarianceModel.IDENTITY

    def append(self, comp: ComponentFit) -> None:
        self.alphas.append(comp.alpha)
        self.betas.append(comp.beta)
        self.rhos.append(comp.rho)
        self.iterations.append(comp.iterations)
        self.converged.append(comp.converged)
        self.flags.append(comp.flag)
        self.taus.append((comp.tau_x, comp.tau_y))

    def __len__(self) -> int:
        return len(self.alphas)

    def component(self, j: int) -> ComponentFit:
        return ComponentFit(self.alphas[j], self.betas[j], self.rhos[j],
                            self.iterations[j], self.converged[j], self.flags[j],
                            *self.taus[j])


@dataclass(frozen=True)
class _Moments:
    """Per-component covariance blocks computed once and reused."""

    X: np.ndarray
    Y: np.ndarray
    Sxy: np.ndarray
    Sxx: np.ndarray | None  # None: identity metric
    Syy: np.ndarray | None

    @classmethod
    def from_data(cls, X, Y, model: CovarianceModel) -> "_Moments":
        X = as_matrix(X, "X")
        Y = as_matrix(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatch(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}")
        Sxy = cross_covariance(X, Y)
        if model is CovarianceModel.IDENTITY:
            return cls(X, Y, Sxy, None, None)
        return cls(X, Y, Sxy, within_covariance(X, model), within_covariance(Y, model))


def canonical_correlation(X, Y, alpha, beta) -> float:
    """Pearson correlation between the scores ``X alpha`` and ``Y beta``."""
    if isinstance(alpha, SparseVector):
        alpha = alpha.dense()
    if isinstance(beta, SparseVector):
        beta = beta.dense()
    a = as_matrix(X) @ np.asarray(alpha, dtype=float)
    b = as_matrix(Y) @ np.asarray(beta, dtype=float)
    a = a - a.mean()
    b = b - b.mean()
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    scale = max(1.0, float(np.max(np.abs(X)))) * np.sqrt(a.size)
    if na <= 1e-12 * scale or nb <= 1e-12 * scale:
        raise DegenerateScores("a score vector has zero variance")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def _orient(alpha: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip the pair jointly so the largest-|entry| of ``alpha`` is positive."""
    if alpha.size and alpha[np.argmax(np.abs(alpha))] < 0:
        return -alpha, -beta
    return alpha, beta


def _initial_from_moments(mom: _Moments, model: CovarianceModel):
    if model is CovarianceModel.IDENTITY:
        svd = cross_covariance_svd(mom.X, mom.Y)
        u, v = svd.left[:, 0], svd.right[:, 0]
        alpha, beta = u.copy(), v.copy()
    else:
        svd = thin_svd(k_matrix(mom.Sxx, mom.Sxy, mom.Syy))
        u, v = svd.left[:, 0], svd.right[:, 0]
        alpha = sym_inv_sqrt(mom.Sxx) @ u
        beta = sym_inv_sqrt(mom.Syy) @ v
    sigma = float(svd.values[0]) if svd.values.size else 0.0
    if sigma <= 1e-12:
        raise DegenerateCrossCovariance(
            f"leading singular value {sigma:.3e} of the cross-covariance kernel is zero")
    alpha = alpha / np.linalg.norm(alpha)
    beta = beta / np.linalg.norm(beta)
    alpha, beta = _orient(alpha, beta)
    return alpha, beta, min(sigma, 1.0)


def initial_pair(X, Y, model=CovarianceModel.IDENTITY):
    """Nonsparse starting pair ``(alpha, beta, rho)`` for one component.

    ``alpha`` and ``beta`` are the whitened leading singular vectors of the
    cross-covariance kernel, scaled to unit l2 norm; ``rho`` is the leading
    singular value clamped to at most 1.
    """
    model = CovarianceModel.parse(model)
    return _initial_from_moments(_Moments.from_data(X, Y, model), model)


def _fit_from_moments(mom: _Moments, config: CcaConfig, alpha0, beta0,
                      rho0: float) -> ComponentFit:
    alpha_t = np.asarray(alpha0, dtype=float)
    beta_t = np.asarray(beta0, dtype=float)
    rho_t = float(rho0)
    p, q = alpha_t.size, beta_t.size
    alpha_hat = SparseVector.zeros(p)
    beta_hat = SparseVector.zeros(q)
    rho_hat = 0.0
    taus = dict(tau_x=config.tau_x, tau_y=config.tau_y)
    for it in range(1, config.max_iters + 1):
        if rho_t <= 0:
            return ComponentFit(alpha_hat, beta_hat, 0.0, it, False, DEGENERATE_SCORES, **taus)
        inst_a = SelpInstance(mom.Sxy @ beta_t, rho_t, mom.Sxx, config.tau_x)
        inst_b = SelpInstance(mom.Sxy.T @ alpha_t, rho_t, mom.Syy, config.tau_y)
        alpha_hat = selp_solve(inst_a).normalized()
        beta_hat = selp_solve(inst_b).normalized()
        if alpha_hat.is_zero() or beta_hat.is_zero():
            return ComponentFit(alpha_hat, beta_hat, 0.0, it, False, ZERO_SOLUTION, **taus)
        a, b = alpha_hat.dense(), beta_hat.dense()
        try:
            rho_hat = canonical_correlation(mom.X, mom.Y, a, b)
        except DegenerateScores:
            return ComponentFit(alpha_hat, beta_hat, 0.0, it, False, DEGENERATE_SCORES, **taus)
        if rho_hat < 0:
            b, rho_hat = -b, -rho_hat
        a, b = _orient(a, b)
        alpha_hat = SparseVector.from_dense(a, tol=0.0)
        beta_hat = SparseVector.from_dense(b, tol=0.0)
        step = np.sqrt(np.sum((a - alpha_t) ** 2) + np.sum((b - beta_t) ** 2))
        alpha_t, beta_t, rho_t = a, b, rho_hat
        if step < config.conv_tol:
            return ComponentFit(alpha_hat, beta_hat, rho_hat, it, True, **taus)
    return ComponentFit(alpha_hat, beta_hat, rho_hat, config.max_iters, False, **taus)


def fit_component(X, Y, config: CcaConfig, alpha0, beta0, rho0: float) -> ComponentFit:
    """Alternating SELP refinement of one canonical pair.

    Each pass solves the ``alpha`` problem with target ``Sxy beta~`` and the
    ``beta`` problem with target ``Syx alpha~`` (both from the previous
    pass), normalizes, re-estimates ``rho`` from the scores and fixes signs
    (``rho >= 0``, largest-|alpha| entry positive). Iteration stops once the
    joint l2 change falls below ``config.conv_tol``.

    An all-zero solution is reported through ``flag`` rather than raised.
    """
    mom = _Moments.from_data(X, Y, config.model)
    return _fit_from_moments(mom, config, alpha0, beta0, rho0)


def deflate(X, A) -> np.ndarray:
    """Project the rows of ``X`` onto the orthogonal complement of ``range(A)``."""
    X = as_matrix(X, "X")
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return X.copy()
    if A.ndim == 1:
        A = A[:, None]
    if A.shape[0] != X.shape[1]:
        raise DimensionMismatch(f"A must have {X.shape[1]} rows, got {A.shape[0]}")
    return X @ orth_complement_projector(A)


TauSelector = Callable[[np.ndarray, np.ndarray, int], "tuple[float, float]"]


def fit(X, Y, config: CcaConfig, per_component_taus: Sequence[tuple[float, float]] | None = None,
        tau_selector: TauSelector | None = None, standardize: bool = True) -> CcaFit:
    """Fit ``config.components`` sparse canonical pairs.

    Args:
        X, Y: data blocks with matching row counts.
        config: solver settings; ``config.tau_x/tau_y`` apply to every
            component unless overridden.
        per_component_taus: optional ``(tau_x, tau_y)`` per component.
        tau_selector: optional callback ``(X_j, Y_j, j) -> (tau_x, tau_y)``
            invoked on the (deflated, centered) data of component ``j``;
            used for per-component cross-validation.
        standardize: standardize the input before the first component; if
            False, the blocks are only centered.

    Later components are fit on ``X P_j`` and ``Y Q_j`` where ``P_j``,
    ``Q_j`` project out the earlier canonical vectors. Deflated blocks are
    re-centered but not rescaled. If the starting pair of a component is
    degenerate the remaining components are recorded as absent.
    """
    X0 = standardize_columns(X)[0] if standardize else center_columns(X)
    Y0 = standardize_columns(Y)[0] if standardize else center_columns(Y)
    if X0.shape[0] != Y0.shape[0]:
        raise DimensionMismatch(f"row counts differ: {X0.shape[0]} vs {Y0.shape[0]}")
    J = config.components
    if per_component_taus is not None and len(per_component_taus) != J:
        raise ValueError(f"expected {J} tau pairs, got {len(per_component_taus)}")
    p, q = X0.shape[1], Y0.shape[1]
    result = CcaFit(model=config.model)
    Xj, Yj = X0, Y0
    for j in range(J):
        if j > 0:
            A = np.column_stack([a.dense() for a in result.alphas])
            B = np.column_stack([b.dense() for b in result.betas])
            Xj = center_columns(deflate(X0, A))
            Yj = center_columns(deflate(Y0, B))
        if tau_selector is not None:
            tx, ty = tau_selector(Xj, Yj, j)
        elif per_component_taus is not None:
            tx, ty = per_component_taus[j]
        else:
            tx, ty = config.tau_x, config.tau_y
        cfg = config.with_taus(tx, ty)
        try:
            mom = _Moments.from_data(Xj, Yj, cfg.model)
            a0, b0, r0 = _initial_from_moments(mom, cfg.model)
        except DegenerateCrossCovariance:
            log.info("component %d: degenerate starting pair, stopping", j + 1)
            for _ in range(j, J):
                result.append(ComponentFit(SparseVector.zeros(p), SparseVector.zeros(q),
                                           0.0, 0, False, ABSENT, tx, ty))
            break
        comp = _fit_from_moments(mom, cfg, a0, b0, r0)
        result.append(comp)
        if not comp.ok:
            # a zero or degenerate pair cannot be deflated meaningfully
            for _ in range(j + 1, J):
                result.append(ComponentFit(SparseVector.zeros(p), SparseVector.zeros(q),
                                           0.0, 0, False, ABSENT, tx, ty))
            break
    return result
