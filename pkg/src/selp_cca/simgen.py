"""Simulation settings, data generation and evaluation metrics.

Three block-covariance scenarios for two Gaussian data blocks ``X`` (``p``
columns) and ``Y`` (``q`` columns):

1. compound-symmetric signal blocks (correlation 0.7), independent noise,
   between-block correlation 0.6 on the signal blocks;
2. as 1 with noise variables mildly correlated (0.1);
3. two canonical pairs with correlations 0.9 and 0.6.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite, ReplicateFailure, ZeroVector
from .matkernel import CovarianceModel, k_matrix, standardize_columns, sym_inv_sqrt, thin_svd
from .scca import CcaConfig
from .tuning import fit_cv

WITHIN_SIGNAL = 0.7
BETWEEN_SIGNAL = 0.6
NOISE_CORR_SETTING2 = 0.1
SETTING3_RHOS = (0.9, 0.6)
SETTING3_BLOCK = 10

METRIC_NAMES = ("estimation_error", "sensitivity", "specificity", "mcc")


@dataclass(frozen=True)
class SimulationSetting:
    id: int
    n: int = 80
    p: int = 200
    q: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.id not in (1, 2, 3):
            raise ValueError(f"setting id must be 1, 2 or 3, got {self.id}")
        if self.q is None:
            object.__setattr__(self, "q", 200 if self.id == 3 else 150)
        if self.n < 2:
            raise ValueError("n must be >= 2")
        min_dim = 2 * SETTING3_BLOCK if self.id == 3 else 10
        if self.p < min_dim or self.q < min_dim:
            raise ValueError(f"setting {self.id} needs p, q >= {min_dim}")

    @property
    def components(self) -> int:
        return 2 if self.id == 3 else 1


@dataclass
class GroundTruth:
    alpha_true: list[np.ndarray]
    beta_true: list[np.ndarray]
    rho_true: list[float]
    support_x: list[set[int]]
    support_y: list[set[int]]

    def to_json(self) -> dict:
        return {
            "rho_true": [float(r) for r in self.rho_true],
            "support_x": [sorted(s) for s in self.support_x],
            "support_y": [sorted(s) for s in self.support_y],
            "alpha_true": [a.tolist() for a in self.alpha_true],
            "beta_true": [b.tolist() for b in self.beta_true],
        }


def compound_symmetry(m: int, rho: float) -> np.ndarray:
    S = np.full((m, m), float(rho))
    np.fill_diagonal(S, 1.0)
    return S


def _block_diag(*blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


def _check_spd(S: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(float(np.linalg.eigvalsh(S)[0]), what) from None


def population_canonical(Sxx, Syy, Sxy, k: int):
    """Leading ``k`` population canonical pairs ``(alphas, betas, rhos)``.

    Vectors are scaled to unit l2 norm with the largest-|entry| of alpha
    positive.
    """
    svd = thin_svd(k_matrix(Sxx, Sxy, Syy))
    Rx, Ry = sym_inv_sqrt(Sxx), sym_inv_sqrt(Syy)
    alphas, betas = [], []
    for j in range(k):
        a = Rx @ svd.left[:, j]
        b = Ry @ svd.right[:, j]
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        if a[np.argmax(np.abs(a))] < 0:
            a, b = -a, -b
        alphas.append(a)
        betas.append(b)
    return alphas, betas, [float(s) for s in svd.values[:k]]


def build_covariance(setting: SimulationSetting):
    """Joint ``(p+q) x (p+q)`` covariance and the population truth."""
    p, q = setting.p, setting.q
    if setting.id in (1, 2):
        sx, sy = p // 10, q // 10
        noise = NOISE_CORR_SETTING2 if setting.id == 2 else 0.0
        Sxx = _block_diag(compound_symmetry(sx, WITHIN_SIGNAL), compound_symmetry(p - sx, noise))
        Syy = _block_diag(compound_symmetry(sy, WITHIN_SIGNAL), compound_symmetry(q - sy, noise))
        Sxy = np.zeros((p, q))
        Sxy[:sx, :sy] = BETWEEN_SIGNAL
        supp_x, supp_y = [set(range(sx))], [set(range(sy))]
        k = 1
    else:
        m = SETTING3_BLOCK
        cs = compound_symmetry(m, WITHIN_SIGNAL)
        # separate blocks keep the two canonical pairs Sigma-orthogonal
        Sxx = _block_diag(cs, cs, np.eye(p - 2 * m))
        Syy = _block_diag(cs, cs, np.eye(q - 2 * m))
        A = np.zeros((p, 2))
        B = np.zeros((q, 2))
        A[:m, 0], A[m:2 * m, 1] = -1.0, 1.0
        B[:m, 0], B[m:2 * m, 1] = -1.0, 1.0
        A /= np.sqrt(np.einsum("ij,ik,kj->j", A, Sxx, A))
        B /= np.sqrt(np.einsum("ij,ik,kj->j", B, Syy, B))
        Sxy = Sxx @ A @ np.diag(SETTING3_RHOS) @ B.T @ Syy
        supp_x = [set(range(m)), set(range(m, 2 * m))]
        supp_y = [set(range(m)), set(range(m, 2 * m))]
        k = 2
    Sigma = np.block([[Sxx, Sxy], [Sxy.T, Syy]])
    Sigma = 0.5 * (Sigma + Sigma.T)
    _check_spd(Sigma, f"setting {setting.id} covariance")
    alphas, betas, rhos = population_canonical(Sxx, Syy, Sxy, k)
    return Sigma, GroundTruth(alphas, betas, rhos, supp_x, supp_y)


def sample_mvn(Sigma, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. rows from ``N(0, Sigma)`` via the Cholesky factor."""
    Sigma = np.asarray(Sigma, dtype=float)
    L = _check_spd(Sigma, "Sigma")
    Z = np.random.default_rng(seed).standard_normal((n, Sigma.shape[0]))
    return Z @ L.T


def estimation_error(v_hat, v) -> float:
    """``||u u^T - w w^T||_F^2`` for the unit-normalized inputs ``u``, ``w``."""
    a = np.asarray(v_hat, dtype=float).ravel()
    b = np.asarray(v, dtype=float).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("estimation error needs nonzero vectors")
    c = float((a / na) @ (b / nb))
    # ||P1 - P2||_F^2 = 2 - 2 (u.w)^2 for rank-one projectors
    return float(max(0.0, 2.0 - 2.0 * c * c))


@dataclass(frozen=True)
class Selectivity:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def sensitivity(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def specificity(self) -> float:
        return self.tn / (self.tn + self.fp) if self.tn + self.fp else 0.0

    @property
    def mcc(self) -> float:
        tp, fp, tn, fn = self.tp, self.fp, self.tn, self.fn
        den = (tp + fn) * (tn + fp) * (tp + fp) * (tn + fn)
        if den == 0:
            return 0.0
        return (tp * tn - fp * fn) / math.sqrt(den)

    def __iter__(self):
        return iter((self.sensitivity, self.specificity, self.mcc))


def selectivity_metrics(estimated_support, true_support, d: int) -> Selectivity:
    """Confusion counts of a selected index set against the true one.

    Iterating the result yields ``(sensitivity, specificity, mcc)``.
    """
    est = {int(i) for i in estimated_support}
    true = {int(i) for i in true_support}
    for i in est | true:
        if not 0 <= i < d:
            raise ValueError(f"index {i} outside [0, {d})")
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    return Selectivity(tp, fp, d - tp - fp - fn, fn)


@dataclass
class MetricsReport:
    """Per-replicate metric rows plus aggregates.

    ``rows`` hold ``(replicate, method, component, block, metric, value)``
    where ``block`` is ``"alpha"``, ``"beta"`` or ``"pair"`` (for ``rho_hat``).
    ``selections`` hold ``(replicate, method, component, block, tp, fp)``.
    """

    setting: int
    replicates: int
    methods: list[str]
    components: int
    rows: list[tuple] = field(default_factory=list)
    selections: list[tuple] = field(default_factory=list)
    flags: list[tuple] = field(default_factory=list)

    def values(self, method: str, component: int, block: str, metric: str) -> np.ndarray:
        return np.array([r[5] for r in self.rows
                         if r[1] == method and r[2] == component and r[3] == block
                         and r[4] == metric], dtype=float)

    def mean(self, method: str, component: int, block: str, metric: str) -> float:
        v = self.values(method, component, block, metric)
        v = v[np.isfinite(v)]
        return float(v.mean()) if v.size else math.nan

    def std_error(self, method: str, component: int, block: str, metric: str) -> float:
        v = self.values(method, component, block, metric)
        v = v[np.isfinite(v)]
        return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan

    def mean_support(self, method: str, component: int, block: str) -> float:
        sizes = [s[4] + s[5] for s in self.selections
                 if s[1] == method and s[2] == component and s[3] == block]
        return float(np.mean(sizes)) if sizes else math.nan


def _score_block(est, truth_vec, truth_support, d):
    sel = selectivity_metrics(est.support, truth_support, d)
    try:
        err = estimation_error(est.dense(), truth_vec)
    except ZeroVector:
        err = math.nan
    return {"estimation_error": err, "sensitivity": sel.sensitivity,
            "specificity": sel.specificity, "mcc": sel.mcc}, sel


def run_replicate(setting: SimulationSetting, replicate: int, models, folds: int,
                  grid: int, seed: int):
    """Simulate, tune, fit and score one replicate; returns plain row tuples."""
    Sigma, truth = build_covariance(setting)
    Z = sample_mvn(Sigma, setting.n, seed + replicate)
    X, Y = Z[:, :setting.p], Z[:, setting.p:]
    X = standardize_columns(X)[0]
    Y = standardize_columns(Y)[0]
    J = setting.components
    rows, selections, flags = [], [], []
    for model in models:
        model = CovarianceModel.parse(model)
        method = model.label
        config = CcaConfig(model=model, components=J)
        fitted, _ = fit_cv(X, Y, config, grid, grid, folds, seed + replicate)
        for j in range(J):
            comp = fitted.component(j)
            flags.append((replicate, method, j + 1, comp.flag or ""))
            for block, est, vec, supp, d in (
                    ("alpha", comp.alpha, truth.alpha_true[j], truth.support_x[j], setting.p),
                    ("beta", comp.beta, truth.beta_true[j], truth.support_y[j], setting.q)):
                scores, sel = _score_block(est, vec, supp, d)
                for name in METRIC_NAMES:
                    rows.append((replicate, method, j + 1, block, name, scores[name]))
                selections.append((replicate, method, j + 1, block, sel.tp, sel.fp))
            rho = comp.rho if comp.ok else math.nan
            rows.append((replicate, method, j + 1, "pair", "rho_hat", rho))
    return rows, selections, flags


def worker_count() -> int:
    """Worker processes from ``SELP_CCA_THREADS`` (0 or unset: one per CPU)."""
    raw = os.environ.get("SELP_CCA_THREADS", "0").strip() or "0"
    n = int(raw)
    if n < 0:
        raise ValueError("SELP_CCA_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def run_study(setting: SimulationSetting, replicates: int = 20,
              models=(CovarianceModel.IDENTITY,), folds: int = 5, grid: int = 8,
              seed: int = 0, workers: int | None = None) -> MetricsReport:
    """Monte Carlo study: ``replicates`` datasets with seeds ``seed + r``.

    Replicates may run in worker processes; results are gathered in
    replicate order, so the report does not depend on ``workers``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    models = [CovarianceModel.parse(m) for m in models]
    workers = worker_count() if workers is None else workers
    args = [(setting, r, models, folds, grid, seed) for r in range(replicates)]
    if workers > 1 and replicates > 1:
        with ProcessPoolExecutor(max_workers=min(workers, replicates)) as pool:
            outputs = list(pool.map(_run_args, args))
    else:
        outputs = [_run_args(a) for a in args]
    report = MetricsReport(setting.id, replicates, [m.label for m in models],
                           setting.components)
    for rows, selections, flags in outputs:
        report.rows.extend(rows)
        report.selections.extend(selections)
        report.flags.extend(flags)
    return report


def _run_args(args):
    try:
        return run_replicate(*args)
    except Exception as exc:
        raise ReplicateFailure(args[1], type(exc).__name__, str(exc)) from exc
