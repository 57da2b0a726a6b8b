import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pearson
from selp_cca.errors import AllCandidatesDegenerate, InvalidFoldCount, LengthMismatch
from selp_cca.matkernel import standardize_columns
from selp_cca.scca import CcaConfig, fit
from selp_cca.simgen import SimulationSetting, build_covariance, sample_mvn
from selp_cca.tuning import (
    _argmin_sparsest,
    cv_criterion,
    make_folds,
    select_tau,
    tau_bounds,
    tau_grid,
)


def _blocks(seed, n=40, p=10, q=8):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 1))
    X = rng.normal(size=(n, p))
    Y = rng.normal(size=(n, q))
    X[:, :3] += 1.5 * z
    Y[:, :2] += 1.5 * z
    return X, Y


# ---------------------------------------------------------------- folds

def test_fold_sizes():
    assert make_folds(10, 5, 0).sizes() == [2] * 5
    assert sorted(make_folds(11, 5, 0).sizes()) == [2, 2, 2, 2, 3]


def test_folds_deterministic():
    a, b = make_folds(37, 5, 42), make_folds(37, 5, 42)
    np.testing.assert_array_equal(a.assignment, b.assignment)
    assert not np.array_equal(a.assignment, make_folds(37, 5, 43).assignment)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 10**6))
def test_folds_partition(n, V, seed):
    if V > n:
        with pytest.raises(InvalidFoldCount):
            make_folds(n, V, seed)
        return
    plan = make_folds(n, V, seed)
    sizes = plan.sizes()
    assert max(sizes) - min(sizes) <= 1 and sum(sizes) == n
    for v in range(V):
        rows = np.concatenate([plan.train_rows(v), plan.test_rows(v)])
        assert sorted(rows.tolist()) == list(range(n))


def test_invalid_fold_counts():
    with pytest.raises(InvalidFoldCount):
        make_folds(10, 1, 0)
    with pytest.raises(InvalidFoldCount):
        make_folds(3, 4, 0)


# ---------------------------------------------------------------- criterion

def test_criterion_examples():
    r = [0.8, 0.7, 0.9, 0.6, 0.75]
    assert cv_criterion(r, r) == 0.0
    assert cv_criterion([1.0, 1.0, 1.0, 1.0], [0.75] * 4) == pytest.approx(1.0, abs=1e-9)
    assert cv_criterion([0.9, 0.8], [0.5, -0.6]) == cv_criterion([0.9, 0.8], [0.5, 0.6])
    assert cv_criterion([0.9, math.nan], [0.5, 0.6]) == math.inf
    with pytest.raises(LengthMismatch):
        cv_criterion([0.1, 0.2], [0.1])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=10),
       st.randoms(use_true_random=False))
def test_criterion_properties(pairs, rnd):
    train = [p[0] for p in pairs]
    test = [p[1] for p in pairs]
    value = cv_criterion(train, test)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    assert cv_criterion([p[0] for p in shuffled], [p[1] for p in shuffled]) == \
        pytest.approx(value, abs=1e-12)
    assert cv_criterion(train, train) == 0.0
    assert value >= 0


def test_tau_grid():
    g = tau_grid(2.0, 8)
    assert g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(1.9)
    assert np.allclose(np.diff(g), np.diff(g)[0])


# ---------------------------------------------------------------- search

def _oracle_surface(X, Y, cfg, gx, gy, V, seed):
    """Criterion on every grid pair, recomputed from scratch."""
    n = X.shape[0]
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, V)
    out = {}
    for tx in gx:
        for ty in gy:
            tr_r, te_r = [], []
            for te in folds:
                tr = np.setdiff1d(np.arange(n), te)
                Xtr, mx, sx = standardize_columns(X[tr])
                Ytr, my, sy = standardize_columns(Y[tr])
                res = fit(Xtr, Ytr, cfg.with_taus(tx, ty), standardize=False)
                if res.flags[0] is not None:
                    tr_r.append(math.nan)
                    te_r.append(math.nan)
                    continue
                tr_r.append(res.rhos[0])
                te_r.append(pearson(((X[te] - mx) / sx) @ res.alphas[0].dense(),
                                    ((Y[te] - my) / sy) @ res.betas[0].dense()))
            if np.all(np.isfinite(tr_r + te_r)):
                out[(tx, ty)] = (sum(map(abs, tr_r)) - sum(map(abs, te_r))) ** 2
            else:
                out[(tx, ty)] = math.inf
    return out


def test_sequential_search_against_exhaustive_grid():
    X, Y = _blocks(1)
    cfg = CcaConfig()
    Xs, Ys = standardize_columns(X)[0], standardize_columns(Y)[0]
    ux, uy = tau_bounds(Xs, Ys, cfg)
    gx, gy = list(tau_grid(ux, 4)), list(tau_grid(uy, 4))
    cv = select_tau(X, Y, cfg, 4, 4, folds=4, seed=3)
    full = _oracle_surface(X, Y, cfg, gx, gy, 4, 3)
    # every value the search recorded agrees with the recomputation
    for key, value in cv.criterion_values.items():
        assert value == pytest.approx(full[key], rel=1e-9, abs=1e-12)
    assert cv.criterion_values[cv.chosen] >= min(full.values())
    # the chosen pair is the best recorded pair
    assert cv.criterion_values[cv.chosen] == min(cv.criterion_values.values())
    # pass 1 used the grid midpoint for tau_y
    assert all((tx, gy[1]) in cv.criterion_values for tx in gx)


def test_single_repeated_candidate():
    X, Y = _blocks(2)
    cv = select_tau(X, Y, CcaConfig(), candidates_x=[0.3] * 3, candidates_y=[0.2] * 3)
    assert cv.chosen == (0.3, 0.2)


def test_select_tau_deterministic():
    X, Y = _blocks(3)
    a = select_tau(X, Y, CcaConfig(model="ridge"), 4, 4, seed=5)
    b = select_tau(X, Y, CcaConfig(model="ridge"), 4, 4, seed=5)
    assert a.chosen == b.chosen and a.criterion_values == b.criterion_values


def test_all_degenerate_candidates():
    X, Y = _blocks(4)
    with pytest.raises(AllCandidatesDegenerate):
        select_tau(X, Y, CcaConfig(), candidates_x=[1e3, 2e3], candidates_y=[1e3])


def test_chosen_refit_is_nonzero():
    for seed in range(4):
        X, Y = _blocks(10 + seed)
        cv = select_tau(X, Y, CcaConfig(), 5, 5)
        res = fit(X, Y, CcaConfig().with_taus(*cv.chosen))
        assert not (res.alphas[0].is_zero() and res.betas[0].is_zero())


def test_ties_prefer_larger_tau():
    assert _argmin_sparsest([0.1, 0.2, 0.3], [1.0, 0.5, 0.5]) == 2
    assert _argmin_sparsest([0.1, 0.2], [math.inf, math.inf]) is None


def test_setting1_selected_support():
    s = SimulationSetting(1)
    Sigma, _ = build_covariance(s)
    Z = sample_mvn(Sigma, s.n, 2)
    X, Y = Z[:, :s.p], Z[:, s.p:]
    cv = select_tau(X, Y, CcaConfig(), 8, 8, folds=5, seed=2)
    res = fit(X, Y, CcaConfig().with_taus(*cv.chosen))
    assert 15 <= res.alphas[0].nnz <= 60
