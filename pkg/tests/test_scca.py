import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pearson
from selp_cca.errors import DegenerateCrossCovariance, DegenerateScores
from selp_cca.matkernel import CovarianceModel, cross_covariance, standardize_columns, thin_svd
from selp_cca.scca import (
    ABSENT,
    ZERO_SOLUTION,
    CcaConfig,
    canonical_correlation,
    deflate,
    fit,
    fit_component,
    initial_pair,
)
from selp_cca.simgen import SimulationSetting, build_covariance, sample_mvn
from selp_cca.tuning import fit_cv, tau_bounds


def _blocks(seed, n=40, p=12, q=9, shared=2.0):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(n, 1))
    X = rng.normal(size=(n, p))
    Y = rng.normal(size=(n, q))
    X[:, :3] += shared * z
    Y[:, :2] += shared * z
    return standardize_columns(X)[0], standardize_columns(Y)[0]


def _setting_draw(setting_id, seed, n=None):
    s = SimulationSetting(setting_id)
    Sigma, truth = build_covariance(s)
    Z = sample_mvn(Sigma, n or s.n, seed)
    return Z[:, :s.p], Z[:, s.p:], truth


def _angle(a, b):
    c = abs(a @ b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(min(1.0, c)))


# ---------------------------------------------------------------- initial pair

def test_initial_pair_symmetric_instance():
    X, _ = _blocks(1)
    a, b, rho = initial_pair(X, X)
    smax = np.linalg.svd(cross_covariance(X, X), compute_uv=False)[0]
    # the singular value is clamped into (0, 1]
    assert rho == pytest.approx(min(smax, 1.0))
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_initial_pair_degenerate():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    Y = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    with pytest.raises(DegenerateCrossCovariance):
        initial_pair(X, Y)


def test_initial_pair_ridge_whitening():
    X, Y = _blocks(2)
    a, b, rho = initial_pair(X, Y, "ridge")
    assert np.linalg.norm(a) == pytest.approx(1.0) and np.linalg.norm(b) == pytest.approx(1.0)
    assert 0 < rho <= 1.0
    assert a[np.argmax(np.abs(a))] > 0


def test_initial_pair_setting1():
    X, Y, _ = _setting_draw(1, 0)
    a, _, rho = initial_pair(standardize_columns(X)[0], standardize_columns(Y)[0])
    assert 0.6 <= rho <= 1.0
    top = np.argsort(-np.abs(a))[:20]
    assert np.sum(top < 20) >= 18


# ---------------------------------------------------------------- one component

def test_recovery_at_zero_tau():
    X, Y = _blocks(3)
    a0, b0, r0 = initial_pair(X, Y)
    comp = fit_component(X, Y, CcaConfig(), a0, b0, r0)
    assert comp.ok and comp.converged and comp.iterations == 1
    np.testing.assert_allclose(comp.alpha.dense(), a0, atol=1e-10)
    np.testing.assert_allclose(comp.beta.dense(), b0, atol=1e-10)


def test_zero_solution_at_bound():
    X, Y = _blocks(4)
    ux, _ = tau_bounds(X, Y, CcaConfig())
    a0, b0, r0 = initial_pair(X, Y)
    comp = fit_component(X, Y, CcaConfig(tau_x=ux), a0, b0, r0)
    assert comp.flag == ZERO_SOLUTION
    assert comp.alpha.is_zero()


def test_setting1_cv_fit_converges():
    X, Y, _ = _setting_draw(1, 1)
    result, cvs = fit_cv(X, Y, CcaConfig())
    assert result.converged[0] and result.iterations[0] <= 10
    assert 0.7 <= result.rhos[0] <= 0.95
    assert 15 <= result.alphas[0].nnz <= 60


def test_fit_single_component_matches_fit_component():
    X, Y = _blocks(5)
    cfg = CcaConfig(tau_x=0.2, tau_y=0.2)
    full = fit(X, Y, cfg)
    # fit standardizes its input first; feed fit_component the same blocks
    Xs, Ys = standardize_columns(X)[0], standardize_columns(Y)[0]
    a0, b0, r0 = initial_pair(Xs, Ys)
    comp = fit_component(Xs, Ys, cfg, a0, b0, r0)
    assert full.alphas[0] == comp.alpha and full.betas[0] == comp.beta
    assert full.rhos[0] == comp.rho and full.iterations[0] == comp.iterations


# ---------------------------------------------------------------- invariants

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 0.8), st.floats(0.0, 0.8),
       st.sampled_from(["identity", "ridge"]))
def test_normalization_and_rho(seed, fx, fy, model):
    X, Y = _blocks(seed)
    cfg = CcaConfig(model=model)
    ux, uy = tau_bounds(X, Y, cfg)
    res = fit(X, Y, cfg.with_taus(fx * ux, fy * uy))
    if res.flags[0] is not None:
        return
    a, b = res.alphas[0], res.betas[0]
    assert abs(a.norm - 1) <= 1e-10 and abs(b.norm - 1) <= 1e-10
    assert res.rhos[0] == pytest.approx(pearson(X @ a.dense(), Y @ b.dense()), abs=1e-12)
    assert res.rhos[0] >= 0
    dense = a.dense()
    assert dense[np.argmax(np.abs(dense))] > 0


def test_fit_is_bit_deterministic():
    X, Y = _blocks(6)
    cfg = CcaConfig(model="ridge", tau_x=0.1, tau_y=0.1, components=2)
    r1, r2 = fit(X, Y, cfg), fit(X, Y, cfg)
    assert r1.alphas == r2.alphas and r1.betas == r2.betas
    assert r1.rhos == r2.rhos and r1.iterations == r2.iterations


def test_recovery_angle_against_svd():
    for seed in range(5):
        X, Y = _blocks(seed, n=30, p=10, q=10)
        res = fit(X, Y, CcaConfig())
        svd = thin_svd(cross_covariance(X, Y))
        assert _angle(res.alphas[0].dense(), svd.left[:, 0]) <= 1e-6
        assert _angle(res.betas[0].dense(), svd.right[:, 0]) <= 1e-6


def test_sparsity_monotone_in_tau_x():
    fractions = [0.1, 0.3, 0.5, 0.7]
    sizes = np.zeros((20, len(fractions)))
    cfg = CcaConfig()
    for r in range(20):
        X, Y = _blocks(100 + r, n=50, p=30, q=20, shared=1.0)
        ux, uy = tau_bounds(X, Y, cfg)
        for k, fx in enumerate(fractions):
            sizes[r, k] = fit(X, Y, cfg.with_taus(fx * ux, 0.3 * uy)).alphas[0].nnz
    med = np.median(sizes, axis=0)
    assert np.all(np.diff(med) <= 0), med


# ---------------------------------------------------------------- deflation

def test_deflate_examples():
    X = np.random.default_rng(7).normal(size=(6, 3))
    np.testing.assert_array_equal(deflate(X, np.zeros((3, 0))), X)
    D = deflate(X, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(D[:, 0], 0.0, atol=1e-15)
    np.testing.assert_allclose(D[:, 1:], X[:, 1:], atol=1e-15)


def test_deflated_scores_vanish():
    X, Y, _ = _setting_draw(3, 0)
    X, Y = standardize_columns(X)[0], standardize_columns(Y)[0]
    cfg = CcaConfig()
    ux, uy = tau_bounds(X, Y, cfg)
    res = fit(X, Y, cfg.with_taus(0.5 * ux, 0.5 * uy))
    a1 = res.alphas[0].dense()
    Xd = deflate(X, a1)
    assert np.max(np.abs(Xd @ a1)) <= 1e-8


def test_two_component_orthogonality_on_deflated_data():
    X, Y, _ = _setting_draw(3, 1)
    cfg = CcaConfig(components=2)
    res = fit(X, Y, cfg, per_component_taus=[(0.5, 0.5), (0.3, 0.3)])
    assert all(f is None for f in res.flags)
    Xs = standardize_columns(X)[0]
    a1, a2 = res.alphas[0].dense(), res.alphas[1].dense()
    X2 = deflate(Xs, a1)
    # first-pair scores are exactly removed from the data the second pair is fit on
    assert np.max(np.abs(X2 @ a1)) <= 1e-8
    # the second pair lives on the second signal block
    assert set(res.alphas[1].support) & set(range(10, 20))
    assert res.rhos[0] > res.rhos[1]
    assert _angle(a1, a2) > 1.0


@pytest.mark.slow
def test_setting1_second_component_is_spurious():
    # in-sample rho_2 can be large in high dimensions; out of sample it vanishes
    X, Y, _ = _setting_draw(1, 0)
    res, _ = fit_cv(X, Y, CcaConfig(components=2))
    Xn, Yn, _ = _setting_draw(1, 10_000, n=5000)
    Xn, Yn = standardize_columns(Xn)[0], standardize_columns(Yn)[0]
    assert canonical_correlation(Xn, Yn, res.alphas[0], res.betas[0]) > 0.75
    if res.flags[1] is None:
        assert abs(canonical_correlation(Xn, Yn, res.alphas[1], res.betas[1])) < 0.2


def test_remaining_components_absent_after_zero_fit():
    X, Y = _blocks(9)
    res = fit(X, Y, CcaConfig(components=3), per_component_taus=[(1e6, 1e6), (0, 0), (0, 0)])
    assert len(res) == 3
    assert res.flags == [ZERO_SOLUTION, ABSENT, ABSENT]
    assert all(a.is_zero() for a in res.alphas)


# ---------------------------------------------------------------- correlation

def test_canonical_correlation_examples():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(20, 3))
    a = np.array([1.0, -2.0, 0.5])
    assert canonical_correlation(X, X, a, a) == pytest.approx(1.0, abs=1e-15)
    assert canonical_correlation(X, X, a, -a) == pytest.approx(-1.0, abs=1e-15)
    Y = rng.normal(size=(20, 2))
    b = np.array([0.3, 0.7])
    assert canonical_correlation(X, Y, a, b) == pytest.approx(pearson(X @ a, Y @ b), abs=1e-12)
    with pytest.raises(DegenerateScores):
        canonical_correlation(X, Y, np.zeros(3), b)


def test_config_validation():
    with pytest.raises(ValueError):
        CcaConfig(tau_x=-1.0)
    with pytest.raises(ValueError):
        CcaConfig(components=0)
    assert CcaConfig(model="selp-r").model is CovarianceModel.RIDGE
