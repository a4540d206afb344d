import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from semf.errors import ConfigError, DataError
from semf.learners import (FAMILIES, MlpRegressor, QuantileRegressor, RidgeRegressor, TreeEnsembleRegressor,
                           fit_quantile, fit_residual_scale_models, fit_weighted, grouped_weighted_quantile,
                           make_learner, pinball_loss, weighted_quantile)


def _data(n=300, d=3, seed=0, m=1):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, d))
    T = np.column_stack([np.sin(X[:, 0]) + 0.5 * X[:, 1] * j + 0.1 * g.normal(size=n) for j in range(1, m + 1)])
    return X, (T[:, 0] if m == 1 else T), g.uniform(0.1, 2.0, size=n)


def _ridge_oracle(X, T, w, lam):
    """Dense normal equations with an unpenalized intercept and weights scaled to mean one."""
    w = w / w.mean()
    Xa = np.column_stack([np.ones(len(X)), X])
    P = lam * np.eye(Xa.shape[1])
    P[0, 0] = 0.0
    beta = np.linalg.solve(Xa.T @ (w[:, None] * Xa) + P, Xa.T @ (w[:, None] * T))
    return beta


def test_ridge_exact_interpolation():
    m = fit_weighted(RidgeRegressor(penalty=0.0), [[1.0], [2.0]], [1.0, 2.0], [1.0, 1.0])
    np.testing.assert_allclose(m.predict([[1.0], [2.0]]), [1.0, 2.0], atol=1e-12)


def test_ridge_weight_scale_invariance_example():
    X, y = np.array([[1.0], [2.0], [4.0]]), np.array([1.0, 3.0, 2.0])
    a = fit_weighted(RidgeRegressor(penalty=0.3), X, y, [1.0, 1.0, 1.0]).predict(X)
    b = fit_weighted(RidgeRegressor(penalty=0.3), X, y, [2.0, 2.0, 2.0]).predict(X)
    np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(n=st.integers(5, 40), d=st.integers(1, 4), m=st.integers(1, 3), lam=st.sampled_from([0.0, 1e-3, 0.5, 10.0]),
       seed=st.integers(0, 10_000))
def test_ridge_matches_dense_normal_equations(n, d, m, lam, seed):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, d))
    T = g.normal(size=(n, m))
    w = g.uniform(0.05, 3.0, size=n)
    if lam == 0.0 and n <= d + 1:
        return
    fit = fit_weighted(RidgeRegressor(penalty=lam), X, T, w)
    beta = _ridge_oracle(X, T, w, lam)
    rel = np.abs(fit.coef_ - beta).max() / max(1.0, np.abs(beta).max())
    assert rel < 1e-8
    c = g.uniform(0.01, 100)
    np.testing.assert_allclose(fit_weighted(RidgeRegressor(penalty=lam), X, T, c * w).predict(X), fit.predict(X),
                               atol=1e-9)


def test_ridge_with_plain_penalty_and_unit_weights_matches_textbook_formula():
    # with centred columns and unit weights the intercept decouples, so the
    # slope solves (X'X + lam I) b = X'T exactly
    g = np.random.default_rng(1)
    X = g.normal(size=(50, 3))
    X -= X.mean(axis=0)
    T = g.normal(size=50)
    lam = 2.5
    b = np.linalg.solve(X.T @ X + lam * np.eye(3), X.T @ (T - T.mean()))
    fit = fit_weighted(RidgeRegressor(penalty=lam), X, T)
    np.testing.assert_allclose(fit.coef_[1:, 0], b, atol=1e-10)


@pytest.mark.parametrize("family", FAMILIES)
def test_constant_weights_match_unit_weights(family):
    X, y, _ = _data(150, seed=2)
    params = {"epochs": 60} if family == "mlp" else {}
    a = fit_weighted(make_learner(family, seed=3, **params), X, y).predict(X)
    b = fit_weighted(make_learner(family, seed=3, **params), X, y, np.full(len(y), 4.0)).predict(X)
    tol = 1e-9 if family == "ridge" else 1e-6
    np.testing.assert_allclose(a, b, atol=tol)
    assert np.isfinite(a).all()


@pytest.mark.parametrize("family", FAMILIES)
def test_matrix_targets_and_learning(family):
    X, T, w = _data(400, m=3, seed=4)
    params = {"epochs": 300} if family == "mlp" else {}
    m = fit_weighted(make_learner(family, seed=0, **params), X, T, w)
    P = m.predict(X)
    assert P.shape == T.shape
    # better than predicting the weighted column means
    base = ((T - np.average(T, axis=0, weights=w)) ** 2).mean()
    assert ((P - T) ** 2).mean() < 0.7 * base


def test_fit_weighted_rejects_bad_input():
    X, y, _ = _data(20)
    with pytest.raises(DataError, match="zero"):
        fit_weighted(RidgeRegressor(), X, y, np.zeros(20))
    with pytest.raises(DataError, match="rows"):
        fit_weighted(RidgeRegressor(), X[:10], y)
    with pytest.raises(DataError, match="non-finite"):
        fit_weighted(RidgeRegressor(), np.where(X > 1, np.nan, X), y)
    with pytest.raises(DataError, match="negative"):
        fit_weighted(RidgeRegressor(), X, y, -np.ones(20))
    with pytest.raises(ConfigError):
        make_learner("svm")


def test_fit_weighted_returns_fresh_clone():
    proto = RidgeRegressor()
    X, y, _ = _data(30)
    m = fit_weighted(proto, X, y)
    assert m is not proto and proto.n_outputs_ is None


def test_weighted_fit_follows_weights():
    # two clusters of targets at the same x; weights decide which one wins
    X = np.zeros((20, 1))
    y = np.r_[np.zeros(10), np.ones(10)]
    w = np.r_[np.full(10, 1.0), np.full(10, 3.0)]
    for family in ("ridge", "boosted", "randomized"):
        pred = fit_weighted(make_learner(family), X, y, w).predict(X)
        np.testing.assert_allclose(pred, 0.75, atol=1e-9)


def test_boosted_early_stopping_truncates():
    X, y, _ = _data(300, seed=5)
    Xm, ym, _ = _data(100, seed=6)
    ym = ym + np.random.default_rng(0).normal(scale=3, size=100)
    m = TreeEnsembleRegressor("boosted", seed=0).fit(X, y, monitor=(Xm, ym, None))
    assert 1 <= len(m.trees_) < 100
    full = TreeEnsembleRegressor("boosted", seed=0).fit(X, y)
    assert len(full.trees_) == 100


@pytest.mark.parametrize("c", [0.25, 4.0, 1024.0])
def test_boosted_split_choice_weight_scale_invariant(c):
    # power-of-two factors are exact in floating point, so every split matches
    X, y, w = _data(200, seed=8)
    a = TreeEnsembleRegressor("boosted", n_trees=5).fit(X, y, w)
    b = TreeEnsembleRegressor("boosted", n_trees=5).fit(X, y, c * w)
    for ta, tb in zip(a.trees_, b.trees_):
        np.testing.assert_array_equal(ta.feature, tb.feature)
        np.testing.assert_array_equal(ta.threshold, tb.threshold)


@pytest.mark.parametrize("family", ["boosted", "randomized"])
def test_tree_predictions_weight_scale_invariant(family):
    # other factors can flip exact ties between equivalent splits by one ulp
    X, y, w = _data(200, seed=8)
    a = make_learner(family, n_trees=5).fit(X, y, w)
    b = make_learner(family, n_trees=5).fit(X, y, 7.0 * w)
    np.testing.assert_allclose(a.predict(X), b.predict(X), atol=1e-12)


def test_randomized_thresholds_inside_node_range():
    X, y, _ = _data(200, d=2, seed=9)
    m = TreeEnsembleRegressor("randomized", n_trees=3, seed=1).fit(X, y)
    for est in m.forest_.estimators_:
        t = est.tree_
        inner = t.feature >= 0
        f = t.feature[inner]
        lo, hi = X.min(axis=0)[f], X.max(axis=0)[f]
        assert ((t.threshold[inner] >= lo) & (t.threshold[inner] <= hi)).all()


def test_mlp_same_seed_same_parameters():
    X, y, w = _data(80, seed=10)
    a = MlpRegressor(epochs=50, seed=4).fit(X, y, w)
    b = MlpRegressor(epochs=50, seed=4).fit(X, y, w)
    for pa, pb in zip(a.net_.params(), b.net_.params()):
        np.testing.assert_array_equal(pa, pb)
    c = MlpRegressor(epochs=50, seed=5).fit(X, y, w)
    assert not np.array_equal(a.predict(X), c.predict(X))


def test_mlp_restores_best_monitor_epoch():
    X, y, _ = _data(100, seed=11)
    Xm, ym, _ = _data(50, seed=12)
    m = MlpRegressor(epochs=400, patience=20, seed=0).fit(X, y, monitor=(Xm, ym, None))
    final = ((m.predict(Xm) - ym) ** 2).mean()
    # the restored net is at least as good on the monitor as the initial net
    init = MlpRegressor(epochs=1, patience=1, seed=0).fit(X, y)
    assert final <= ((init.predict(Xm) - ym) ** 2).mean()


# -- quantile learners ---------------------------------------------------------


def test_pinball_examples():
    assert pinball_loss(1.0, 0.0, 0.95) == pytest.approx(0.95)
    assert pinball_loss(0.0, 1.0, 0.95) == pytest.approx(0.05)
    assert pinball_loss(0.3, 0.3, 0.95) == 0.0


def test_weighted_quantile_unit_weights_is_order_statistic():
    v = np.array([5.0, 1.0, 3.0, 2.0, 4.0])
    assert weighted_quantile(v, np.ones(5), 0.5) == 3.0
    assert weighted_quantile(v, np.ones(5), 0.2) == 1.0
    assert weighted_quantile(v, np.ones(5), 0.21) == 2.0
    assert weighted_quantile(v, np.r_[0, 0, 0, 0, 1.0], 0.01) == 4.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n_groups=st.integers(1, 6), tau=st.floats(0.01, 0.99))
def test_grouped_quantile_matches_per_group(seed, n_groups, tau):
    g = np.random.default_rng(seed)
    n = 40
    groups = g.integers(0, n_groups, size=n)
    v = g.normal(size=n)
    w = g.uniform(0.1, 2, size=n)
    out = grouped_weighted_quantile(groups, v, w, tau, n_groups)
    for k in range(n_groups):
        sel = groups == k
        expect = weighted_quantile(v[sel], w[sel], tau) if sel.any() else 0.0
        assert out[k] == expect


@pytest.mark.parametrize("family", FAMILIES)
def test_quantile_constant_target(family):
    X = np.random.default_rng(0).normal(size=(60, 2))
    y = np.full(60, 2.5)
    params = {"epochs": 200} if family == "mlp" else {}
    lo, hi = fit_quantile(family, X, y, 0.05, 0.95, **params).predict(X)
    tol = 1e-2 if family == "mlp" else 1e-6
    np.testing.assert_allclose(lo, 2.5, atol=tol)
    np.testing.assert_allclose(hi, 2.5, atol=tol)


@pytest.mark.parametrize("family", FAMILIES)
def test_quantile_ordering_and_coverage(family):
    g = np.random.default_rng(1)
    X = g.normal(size=(1500, 2))
    y = X[:, 0] + g.normal(size=1500) * 0.5
    params = {"epochs": 400} if family == "mlp" else {}
    q = fit_quantile(family, X, y, 0.05, 0.95, seed=0, **params)
    Xt = g.normal(size=(2000, 2))
    yt = Xt[:, 0] + g.normal(size=2000) * 0.5
    lo, hi = q.predict(Xt)
    assert (hi >= lo).all()
    cover = np.mean((yt >= lo) & (yt <= hi))
    assert 0.75 < cover < 0.99


def test_quantile_levels_validated():
    with pytest.raises(ConfigError):
        QuantileRegressor("ridge", 0.9, 0.1)
    with pytest.raises(ConfigError):
        QuantileRegressor("ridge", 0.0, 0.5)
    with pytest.raises(ConfigError):
        QuantileRegressor("lasso")


@pytest.mark.parametrize("family", ["ridge", "boosted", "randomized"])
def test_featureless_uniform_tau_09(family):
    y = np.random.default_rng(2).uniform(size=10_000)
    lo, hi = fit_quantile(family, np.empty((10_000, 0)), y, 0.1, 0.9).predict(np.empty((5, 0)))
    assert abs(hi[0] - 0.9) < 0.02
    assert abs(lo[0] - 0.1) < 0.02


def test_crossing_fix_swaps():
    q = QuantileRegressor("ridge", 0.1, 0.9).fit(np.arange(20.0)[:, None], np.arange(20.0))
    q.models_ = q.models_[::-1]
    lo, hi = q.predict(np.arange(5.0)[:, None])
    assert (hi >= lo).all()


# -- residual scale models -------------------------------------------------------


def test_zero_residuals_floor_to_sigma_min():
    X = np.random.default_rng(0).normal(size=(100, 1))
    enc = fit_weighted(RidgeRegressor(), X, 2 * X[:, 0])
    (scale,) = fit_residual_scale_models([enc], [X], [enc.predict(X)[:, None]], np.ones(100))
    sigma_min = 1e-6
    pred = np.maximum(math.sqrt(math.pi / 2) * scale.predict(X), sigma_min)
    assert (pred <= sigma_min).all()


def test_homoscedastic_scale_is_half_normal_mean():
    g = np.random.default_rng(3)
    n, s = 5000, 0.7
    X = g.normal(size=(n, 1))
    enc = fit_weighted(RidgeRegressor(), X, X[:, 0])
    Z = (enc.predict(X) + s * g.normal(size=n))[:, None]
    (scale,) = fit_residual_scale_models([enc], [X], [Z], np.ones(n), [TreeEnsembleRegressor("boosted")])
    mean_pred = scale.predict(X).mean()
    assert abs(mean_pred - s * math.sqrt(2 / math.pi)) < 0.2 * s * math.sqrt(2 / math.pi)


def test_heteroscedastic_scale_tracks_input():
    g = np.random.default_rng(4)
    n = 3000
    x = g.uniform(0, 3, size=n)
    X = x[:, None]
    enc = fit_weighted(RidgeRegressor(), X, np.zeros(n))
    Z = (0.1 + x) * g.normal(size=n)
    (scale,) = fit_residual_scale_models([enc], [X], [Z[:, None]], np.ones(n), [TreeEnsembleRegressor("boosted")])
    grid = np.linspace(0, 3, 200)[:, None]
    assert spearmanr(grid[:, 0], scale.predict(grid)).correlation > 0.5
