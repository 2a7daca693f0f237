import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from svyacd.glm import (
    BINOMIAL,
    GAUSSIAN,
    BoundaryResponseError,
    GlmError,
    GlmFit,
    RankDeficientError,
    SeparationError,
    add_intercept,
    beta_score,
    fit_beta_glm,
    fit_weighted_logistic,
    fit_wls,
    gaussian_score,
    logistic_score,
    predict_mean,
)

# Frozen values from scripts/derive_oracles.py (grid + 1e-3 refinement + Nelder-Mead
# on scipy.stats log-likelihoods, independent of this package).
LOGISTIC_ORACLE = {
    "six_row_binary_x": (
        dict(x=[0, 0, 0, 1, 1, 1], t=[0, 1, 0, 1, 1, 0], w=[1, 2, 1, 1, 2, 1]),
        [0.0, 1.098612312],
    ),
    "twelve_row_continuous": (
        dict(x=[-1.2, -0.7, -0.3, 0.0, 0.2, 0.4, 0.5, 0.9, 1.1, 1.4, 1.8, 2.3],
             t=[0, 0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 1],
             w=[1.0, 0.5, 2.0, 1.5, 1.0, 1.0, 3.0, 0.7, 1.2, 1.0, 2.5, 0.8]),
        [-0.643638566, 1.141983695],
    ),
}
BETA_ORACLE = {
    "intercept_only": (dict(x=None, u=[0.2, 0.3, 0.4], w=None), [-0.847899458], 3.426246192),
    "ten_row_slope": (
        dict(x=[0.0, 0.3, 0.5, 0.8, 1.0, 1.3, 1.5, 1.9, 2.2, 2.5],
             u=[0.12, 0.2, 0.15, 0.3, 0.28, 0.4, 0.35, 0.55, 0.5, 0.7],
             w=[1.0, 2.0, 1.0, 0.5, 1.5, 1.0, 2.0, 1.0, 0.8, 1.2]),
        [-1.899604, 1.006718415], 4.669727196,
    ),
}


def col(v):
    return np.asarray(v, dtype=float)[:, None]


# -- WLS --------------------------------------------------------------------

def test_wls_exact_line():
    fit = fit_wls(col([1, 2, 3]), [2, 4, 6], [1, 1, 1])
    np.testing.assert_allclose(fit.coef, [0, 2], atol=1e-12)
    assert fit.family == GAUSSIAN
    assert fit.dispersion_or_precision == pytest.approx(0, abs=1e-20)


def test_wls_constant_outcome():
    fit = fit_wls(col([1, 2]), [5, 5], [1, 1])
    np.testing.assert_allclose(fit.coef, [5, 0], atol=1e-12)


def test_wls_hand_normal_equations():
    # X'WX = [[4, 4], [4, 6]], X'Wy = [7, 8]  ->  (1.25, 0.5)
    fit = fit_wls(col([0, 1, 2]), [1, 2, 2], [1, 2, 1])
    np.testing.assert_allclose(fit.coef, [1.25, 0.5], atol=1e-10)
    # wRSS = 1*(-0.25)^2 + 2*(0.25)^2 + 1*(-0.25)^2 = 0.25 over (4 - 2)
    assert fit.dispersion_or_precision == pytest.approx(0.125, abs=1e-12)


def test_wls_rank_deficient_names_column():
    x = np.column_stack([[1, 2, 3, 4], [2, 4, 6, 8]])
    with pytest.raises(RankDeficientError) as exc:
        fit_wls(x, [1, 2, 3, 5], names=["u", "v"])
    assert "v" in exc.value.columns


def test_wls_zero_weights():
    with pytest.raises(GlmError):
        fit_wls(col([1, 2, 3]), [1, 2, 3], [0, 0, 0])


# -- logistic ---------------------------------------------------------------

def test_logistic_intercept_only_closed_form():
    t = np.array([1, 0, 0, 1, 1])
    w = np.array([1.0, 2.0, 0.5, 1.5, 1.0])
    q = np.sum(w * t) / np.sum(w)
    fit = fit_weighted_logistic(np.empty((5, 0)), t, w)
    assert fit.family == BINOMIAL
    assert fit.coef[0] == pytest.approx(logit(q), abs=1e-12)


def test_logistic_separation():
    with pytest.raises(SeparationError):
        fit_weighted_logistic(col([-1, 0, 1, 2]), [0, 0, 1, 1], [1, 1, 1, 1])


@pytest.mark.parametrize("name", sorted(LOGISTIC_ORACLE))
def test_logistic_matches_grid_oracle(name):
    f, expected = LOGISTIC_ORACLE[name]
    fit = fit_weighted_logistic(col(f["x"]), f["t"], f["w"])
    assert fit.converged
    np.testing.assert_allclose(fit.coef, expected, atol=1e-6)


def test_logistic_saturated_closed_form():
    # binary x: cell proportions 2/4 and 3/4
    fit = fit_weighted_logistic(col([0, 0, 0, 1, 1, 1]), [0, 1, 0, 1, 1, 0], [1, 2, 1, 1, 2, 1])
    np.testing.assert_allclose(fit.coef, [0.0, np.log(3.0)], atol=1e-10)


# -- beta -------------------------------------------------------------------

def test_beta_symmetric_half():
    fit = fit_beta_glm(np.empty((4, 0)), [0.5, 0.5, 0.5, 0.5])
    assert fit.coef[0] == pytest.approx(0.0, abs=1e-12)


def test_beta_symmetric_spread():
    fit = fit_beta_glm(np.empty((4, 0)), [0.3, 0.7, 0.4, 0.6])
    assert fit.coef[0] == pytest.approx(0.0, abs=1e-10)
    assert np.isfinite(fit.dispersion_or_precision)


@pytest.mark.parametrize("name", sorted(BETA_ORACLE))
def test_beta_matches_grid_oracle(name):
    f, coef, log_phi = BETA_ORACLE[name]
    x = np.empty((len(f["u"]), 0)) if f["x"] is None else col(f["x"])
    fit = fit_beta_glm(x, f["u"], f["w"])
    assert fit.converged
    np.testing.assert_allclose(fit.coef, coef, atol=1e-6)
    assert np.log(fit.dispersion_or_precision) == pytest.approx(log_phi, abs=1e-5)


def test_beta_intercept_only_fitted_mean():
    fit = fit_beta_glm(np.empty((3, 0)), [0.2, 0.3, 0.4])
    assert expit(fit.coef[0]) == pytest.approx(expit(-0.847899458), abs=1e-6)


def test_beta_constant_covariate_rank_deficient():
    with pytest.raises(RankDeficientError) as exc:
        fit_beta_glm(col([1.0, 1.0, 1.0, 1.0]), [0.2, 0.3, 0.4, 0.5], names=["const"])
    assert exc.value.columns == ["const"]


def test_beta_boundary_response():
    with pytest.raises(BoundaryResponseError, match="clamp"):
        fit_beta_glm(np.empty((3, 0)), [0.0, 0.3, 0.4])


def test_beta_exact_logit_linear_gives_infinite_precision():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    fit = fit_beta_glm(col(x), expit(-2 + 0.5 * x))
    np.testing.assert_allclose(fit.coef, [-2, 0.5], atol=1e-8)
    assert np.isinf(fit.dispersion_or_precision)


# -- prediction -------------------------------------------------------------

def _fit(family, coef):
    return GlmFit(family, np.asarray(coef, float), True, 0, 1.0, np.ones(1))


def test_predict_gaussian():
    assert predict_mean(_fit(GAUSSIAN, [0, 2]), [[3]])[0] == pytest.approx(6)


def test_predict_logistic_zero():
    assert predict_mean(_fit(BINOMIAL, [0.0]), np.empty((3, 0))) == pytest.approx([0.5] * 3)


def test_predict_logistic_cancellation():
    assert predict_mean(_fit(BINOMIAL, [1, -1]), [[1]])[0] == pytest.approx(0.5)


def test_predict_column_mismatch():
    with pytest.raises(GlmError):
        predict_mean(_fit(GAUSSIAN, [0, 2]), [[1, 2]])


# -- properties -------------------------------------------------------------

datasets = st.integers(min_value=0, max_value=2**32 - 1).map(np.random.default_rng)


def _logistic_data(rng, n=40):
    x = rng.normal(size=(n, 2))
    t = rng.binomial(1, expit(0.3 + x @ [0.8, -0.5]))
    t[:2] = [0, 1]
    w = rng.uniform(0.2, 3.0, n)
    return x, t, w


@settings(max_examples=25, deadline=None)
@given(datasets, st.floats(min_value=0.01, max_value=100))
def test_reweighting_invariance(rng, c):
    x, t, w = _logistic_data(rng)
    y = x @ [1.0, 2.0] + rng.normal(size=x.shape[0])
    np.testing.assert_allclose(fit_wls(x, y, c * w).coef, fit_wls(x, y, w).coef, atol=1e-10)
    np.testing.assert_allclose(fit_weighted_logistic(x, t, c * w).coef,
                               fit_weighted_logistic(x, t, w).coef, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(datasets)
def test_permutation_invariance(rng):
    x, t, w = _logistic_data(rng)
    p = rng.permutation(x.shape[0])
    a = fit_weighted_logistic(x, t, w).coef
    b = fit_weighted_logistic(x[p], t[p], w[p]).coef
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


@settings(max_examples=25, deadline=None)
@given(datasets)
def test_score_zero_at_fit(rng):
    x, t, w = _logistic_data(rng)
    X = add_intercept(x)
    fit = fit_weighted_logistic(x, t, w)
    assert np.max(np.abs(logistic_score(X, t, w, fit.coef).sum(axis=0))) <= 1e-8 * (1 + 1)

    y = 10 * rng.normal(size=x.shape[0])
    g = fit_wls(x, y, w)
    assert np.max(np.abs(gaussian_score(X, y, w, g.coef).sum(axis=0))) <= 1e-8 * (1 + np.max(np.abs(y)))

    u = expit(-1 + 0.5 * x[:, 0] + rng.normal(scale=0.3, size=x.shape[0]))
    b = fit_beta_glm(x, u, w)
    s = beta_score(X, u, w, b.coef, np.log(b.dispersion_or_precision)).sum(axis=0)
    assert np.max(np.abs(s)) <= 1e-8 * (1 + np.max(u))
