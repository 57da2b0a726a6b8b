"""V-fold cross-validation of the SELP sparsity parameters.

The criterion is the squared gap between the summed absolute training
correlations and the summed absolute held-out correlations. Candidates are
searched one axis at a time: ``tau_x`` with ``tau_y`` held at its grid
midpoint, then ``tau_y`` at the winning ``tau_x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllCandidatesDegenerate,
    DegenerateScores,
    InvalidFoldCount,
    LengthMismatch,
)
from .matkernel import center_columns, standardize_columns
from .scca import (
    CcaConfig,
    CcaFit,
    _initial_from_moments,
    _Moments,
    canonical_correlation,
    fit,
)

GRID_MARGIN = 0.05


@dataclass(frozen=True)
class FoldPlan:
    n: int
    folds: int
    assignment: np.ndarray
    seed: int

    def test_rows(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == v)

    def train_rows(self, v: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != v)

    def sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.folds).tolist()


def make_folds(n: int, V: int, seed: int) -> FoldPlan:
    """Seeded random partition of ``n`` rows into ``V`` near-equal folds."""
    if not (2 <= V <= n):
        raise InvalidFoldCount(f"need 2 <= V <= n, got V={V}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.intp)
    for v, block in enumerate(np.array_split(perm, V)):
        assignment[block] = v
    return FoldPlan(n, V, assignment, seed)


def cv_criterion(train_rhos, test_rhos) -> float:
    """``(sum |rho_train| - sum |rho_test|) ** 2``; non-finite inputs give inf."""
    train = np.asarray(train_rhos, dtype=float).ravel()
    test = np.asarray(test_rhos, dtype=float).ravel()
    if train.size != test.size:
        raise LengthMismatch(f"{train.size} training vs {test.size} test correlations")
    if not (np.all(np.isfinite(train)) and np.all(np.isfinite(test))):
        return math.inf
    return float((np.abs(train).sum() - np.abs(test).sum()) ** 2)


def tau_grid(upper: float, size: int, margin: float = GRID_MARGIN) -> np.ndarray:
    """``size`` evenly spaced points on ``[margin * upper, (1 - margin) * upper]``."""
    if size < 1:
        raise ValueError("grid size must be >= 1")
    if size == 1:
        return np.array([0.5 * upper])
    return np.linspace(margin * upper, (1.0 - margin) * upper, size)


def tau_bounds(X, Y, config: CcaConfig) -> tuple[float, float]:
    """Upper ends ``(||Sxy b~||_inf, ||Syx a~||_inf)`` of the useful tau range."""
    mom = _Moments.from_data(X, Y, config.model)
    a0, b0, _ = _initial_from_moments(mom, config.model)
    return (float(np.max(np.abs(mom.Sxy @ b0))),
            float(np.max(np.abs(mom.Sxy.T @ a0))))


@dataclass
class CvResult:
    grid_x: list[float]
    grid_y: list[float]
    criterion_values: dict[tuple[float, float], float]
    chosen: tuple[float, float]
    per_fold_train_rho: dict[tuple[float, float], list[float]] = field(default_factory=dict)
    per_fold_test_rho: dict[tuple[float, float], list[float]] = field(default_factory=dict)
    upper: tuple[float, float] = (math.nan, math.nan)


def _single(config: CcaConfig, tx: float, ty: float) -> CcaConfig:
    return replace(config, tau_x=float(tx), tau_y=float(ty), components=1)


class _FoldEvaluator:
    """Scores a ``(tau_x, tau_y)`` pair across all folds, memoized."""

    def __init__(self, X, Y, config: CcaConfig, plan: FoldPlan, standardize: bool):
        self.config = _single(config, 0.0, 0.0)
        self.standardize = standardize
        self.folds = []
        for v in range(plan.folds):
            tr, te = plan.train_rows(v), plan.test_rows(v)
            Xtr, Ytr = X[tr], Y[tr]
            if standardize:
                Xtr, mx, sx = standardize_columns(Xtr)
                Ytr, my, sy = standardize_columns(Ytr)
                Xte, Yte = (X[te] - mx) / sx, (Y[te] - my) / sy
            else:
                mx, my = Xtr.mean(axis=0), Ytr.mean(axis=0)
                Xtr, Ytr = Xtr - mx, Ytr - my
                Xte, Yte = X[te] - mx, Y[te] - my
            self.folds.append((Xtr, Ytr, Xte, Yte))
        self.train: dict[tuple[float, float], list[float]] = {}
        self.test: dict[tuple[float, float], list[float]] = {}
        self.values: dict[tuple[float, float], float] = {}

    def __call__(self, tx: float, ty: float) -> float:
        key = (float(tx), float(ty))
        if key in self.values:
            return self.values[key]
        cfg = self.config.with_taus(tx, ty)
        train, test = [], []
        for Xtr, Ytr, Xte, Yte in self.folds:
            # folds were prepared above; the fit must not rescale them again
            res = fit(Xtr, Ytr, cfg, standardize=False)
            if res.flags[0] is not None:
                train.append(math.nan)
                test.append(math.nan)
                continue
            train.append(res.rhos[0])
            try:
                test.append(canonical_correlation(Xte, Yte, res.alphas[0], res.betas[0]))
            except DegenerateScores:
                test.append(math.nan)
        self.train[key] = train
        self.test[key] = test
        self.values[key] = cv_criterion(train, test)
        return self.values[key]


def _argmin_sparsest(cands: list[float], values: list[float]) -> int | None:
    """Index of the smallest finite value; ties go to the largest candidate."""
    finite = [i for i, v in enumerate(values) if math.isfinite(v)]
    if not finite:
        return None
    best = min(values[i] for i in finite)
    tied = [i for i in finite if values[i] <= best + 1e-12 * max(1.0, abs(best))]
    return max(tied, key=lambda i: (cands[i], i))


def select_tau(X, Y, config: CcaConfig, grid_x: int = 8, grid_y: int = 8,
               folds: int = 5, seed: int = 0, standardize: bool = True,
               candidates_x=None, candidates_y=None) -> CvResult:
    """Choose ``(tau_x, tau_y)`` for one component by sequential grid search.

    The grids span ``(0.05 U, 0.95 U)`` where ``U`` is the per-block bound
    from :func:`tau_bounds` on the full data; explicit candidate lists
    override them. After the two passes the surviving candidates are ranked
    by criterion and the first whose full-data fit is not all-zero wins.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    Xs = standardize_columns(X)[0] if standardize else center_columns(X)
    Ys = standardize_columns(Y)[0] if standardize else center_columns(Y)
    ux, uy = tau_bounds(Xs, Ys, config)
    gx = np.asarray(candidates_x if candidates_x is not None else tau_grid(ux, grid_x), float)
    gy = np.asarray(candidates_y if candidates_y is not None else tau_grid(uy, grid_y), float)
    plan = make_folds(X.shape[0], folds, seed)
    ev = _FoldEvaluator(X, Y, config, plan, standardize)

    ty_mid = float(gy[(len(gy) - 1) // 2])
    vals_x = [ev(tx, ty_mid) for tx in gx]
    ix = _argmin_sparsest(list(gx), vals_x)
    tx_best = float(gx[ix]) if ix is not None else float(gx[0])
    vals_y = [ev(tx_best, ty) for ty in gy]

    ranked = sorted(((v, -k[0], -k[1], k) for k, v in ev.values.items()
                     if math.isfinite(v)))
    if not ranked:
        raise AllCandidatesDegenerate("every tau candidate produced a degenerate fit")
    # prefer the pass-2 winner; fall back through the rest of the surface
    iy = _argmin_sparsest(list(gy), vals_y)
    order = []
    if iy is not None:
        order.append((tx_best, float(gy[iy])))
    order += [k for *_, k in ranked if k not in order]
    chosen = None
    for key in order:
        res = fit(Xs, Ys, _single(config, *key), standardize=False)
        if res.flags[0] is None:
            chosen = key
            break
    if chosen is None:
        raise AllCandidatesDegenerate("no candidate gives a nonzero full-data fit")
    return CvResult([float(g) for g in gx], [float(g) for g in gy], dict(ev.values),
                    chosen, dict(ev.train), dict(ev.test), (ux, uy))


def fit_cv(X, Y, config: CcaConfig, grid_x: int = 8, grid_y: int = 8, folds: int = 5,
           seed: int = 0) -> tuple[CcaFit, list[CvResult]]:
    """Fit all components, cross-validating the taus of each on its deflated data."""
    results: list[CvResult] = []

    def selector(Xj, Yj, j):
        cv = select_tau(Xj, Yj, config, grid_x, grid_y, folds, seed, standardize=(j == 0))
        results.append(cv)
        return cv.chosen

    return fit(X, Y, config, tau_selector=selector), results
