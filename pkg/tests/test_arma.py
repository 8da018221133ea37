import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.signal import lfilter

from vfvol.arma import (
    ArmaxError,
    ArmaxFit,
    ArmaxSpec,
    coef_to_pacf,
    css_residuals,
    exog_matrix,
    fit_armax,
    forecast_armax,
    pacf_to_coef,
)


def _arma11(n, phi, theta, c=0.0, psi=0.0, v=None, seed=0, sigma=1.0):
    rng = np.random.default_rng(seed)
    e = rng.normal(0, sigma, n + 200)
    vv = np.zeros(n + 200) if v is None else np.r_[np.zeros(200), v]
    y = np.zeros(n + 200)
    for t in range(1, n + 200):
        y[t] = c + phi * y[t - 1] + theta * e[t - 1] + psi * vv[t] + e[t]
    return y[200:]


def _manual_fit(phi=(), theta=(), psi=(), c=0.0, y=None, resid=None, exog=None):
    y = np.asarray(y, float)
    exog = np.zeros((y.size, 0)) if exog is None else exog
    resid = np.zeros_like(y) if resid is None else np.asarray(resid, float)
    spec = ArmaxSpec(len(phi), len(theta), 0, True)
    return ArmaxFit(spec, np.asarray(phi, float), np.asarray(theta, float),
                    np.asarray(psi, float), c, y - resid, resid, float(resid @ resid), y, exog)


def test_all_zero_input():
    fit = fit_armax(np.zeros(60), np.zeros(60))
    assert fit.sse == 0.0
    assert_allclose(np.r_[fit.phi, fit.theta, fit.psi, fit.intercept], 0.0, atol=1e-12)


def test_ar1_recovery_matches_grid_search():
    y = _arma11(2000, 0.5, 0.0, seed=11)
    fit = fit_armax(y, None, ArmaxSpec(p=1, q=0))
    assert 0.45 <= fit.phi[0] <= 0.55
    # oracle: brute-force CSS over a fine grid, intercept profiled by its normal equation
    grid = np.linspace(0.3, 0.7, 4001)
    yt, yl = y[1:], y[:-1]
    sse = [np.sum((yt - g * yl - np.mean(yt - g * yl)) ** 2) for g in grid]
    assert abs(grid[int(np.argmin(sse))] - fit.phi[0]) <= 1e-4


def test_exog_coefficient_matches_ols():
    rng = np.random.default_rng(5)
    v = rng.normal(size=400)
    y = 0.3 + 2.0 * v + rng.normal(0, 0.01, 400)
    fit = fit_armax(y, v, ArmaxSpec(p=0, q=0))
    assert 1.99 <= fit.psi[0] <= 2.01
    beta = np.linalg.lstsq(np.c_[np.ones(400), v], y, rcond=None)[0]
    assert_allclose([fit.intercept, fit.psi[0]], beta, rtol=1e-10)


def test_arma11_recovery():
    y = _arma11(3000, 0.5, 0.3, c=0.1, seed=2)
    fit = fit_armax(y, None, ArmaxSpec(1, 1))
    assert abs(fit.phi[0] - 0.5) < 0.06
    assert abs(fit.theta[0] - 0.3) < 0.06
    assert abs(fit.intercept / (1 - fit.phi[0]) - 0.2) < 0.1
    assert fit.converged


def test_fitted_plus_residuals_is_input():
    rng = np.random.default_rng(1)
    v = rng.normal(size=300)
    y = _arma11(300, 0.4, -0.2, psi=0.7, v=v, seed=1)
    fit = fit_armax(y, v)
    assert_allclose(fit.fitted + fit.residuals, y, rtol=0, atol=1e-14)
    assert np.all(np.abs(fit.ar_roots) > 1)
    assert abs(fit.residuals.mean()) <= 0.1 * fit.residuals.std()


def test_local_optimality_star():
    rng = np.random.default_rng(8)
    v = rng.normal(size=500)
    y = _arma11(500, 0.6, 0.25, c=0.05, psi=-0.4, v=v, seed=8)
    fit = fit_armax(y, v)
    X = fit.exog
    base = np.r_[fit.intercept, fit.phi, fit.theta, fit.psi]

    def css(vec):
        e = css_residuals(y, X, fit.spec, vec[0], vec[1:2], vec[2:3], vec[3:])
        return e @ e

    f0 = css(base)
    assert_allclose(f0, fit.sse, rtol=1e-12)
    for k in range(base.size):
        for step in (-1e-3, 1e-3):
            probe = base.copy()
            probe[k] += step
            assert css(probe) >= f0 * (1 - 1e-12)


def test_deterministic_series_refits_exactly():
    rng = np.random.default_rng(3)
    v = rng.normal(size=200)
    y = np.zeros(200)
    for t in range(1, 200):
        y[t] = 0.2 + 0.6 * y[t - 1] + 1.5 * v[t]
    fit = fit_armax(y, v, ArmaxSpec(1, 0))
    assert fit.sse < 1e-20
    assert_allclose([fit.intercept, fit.phi[0], fit.psi[0]], [0.2, 0.6, 1.5], rtol=1e-8)


def test_forecast_constant():
    fit = _manual_fit(c=0.7, y=np.ones(10))
    assert_allclose(forecast_armax(fit, 5), 0.7)


def test_forecast_ar1_recursion():
    fit = _manual_fit(phi=[0.5], y=np.r_[np.zeros(9), 1.0])
    assert_allclose(forecast_armax(fit, 4), [0.5, 0.25, 0.125, 0.0625], rtol=1e-15)


def test_forecast_ma_beyond_order_is_intercept():
    resid = np.random.default_rng(0).normal(size=30)
    fit = _manual_fit(theta=[0.4, -0.2], c=0.3, y=resid + 0.3, resid=resid)
    fc = forecast_armax(fit, 6)
    assert_allclose(fc[0], 0.3 + 0.4 * resid[-1] - 0.2 * resid[-2])
    assert_allclose(fc[2:], 0.3, rtol=0, atol=0)


def test_forecast_requires_exog_futures():
    rng = np.random.default_rng(2)
    v = rng.normal(size=80)
    fit = fit_armax(rng.normal(size=80) + v, v)
    with pytest.raises(ValueError, match="exogenous"):
        forecast_armax(fit, 3)
    with pytest.raises(ValueError):
        forecast_armax(fit, 3, v[:2])


def test_two_step_forecast_matches_monte_carlo():
    rng = np.random.default_rng(21)
    y = _arma11(800, 0.7, 0.4, c=0.2, seed=21)
    fit = fit_armax(y)
    fc = forecast_armax(fit, 2)
    # brute force: average of simulated continuations with Gaussian innovations
    sd = fit.residuals.std()
    n_sim = 100_000
    e1 = rng.normal(0, sd, n_sim)
    e2 = rng.normal(0, sd, n_sim)
    y1 = fit.intercept + fit.phi[0] * y[-1] + fit.theta[0] * fit.residuals[-1] + e1
    y2 = fit.intercept + fit.phi[0] * y1 + fit.theta[0] * e1 + e2
    se = y2.std() / np.sqrt(n_sim)
    assert abs(y2.mean() - fc[1]) < 4 * se
    assert abs(y1.mean() - fc[0]) < 4 * y1.std() / np.sqrt(n_sim)


def test_one_step_forecast_equals_recursion_at_n_plus_1():
    rng = np.random.default_rng(4)
    v = rng.normal(size=151)
    y = _arma11(151, 0.3, 0.2, psi=1.0, v=v, seed=4)
    fit = fit_armax(y[:150], v[:150])
    manual = fit.intercept + fit.phi[0] * y[149] + fit.theta[0] * fit.residuals[-1] + fit.psi[0] * v[150]
    assert_allclose(forecast_armax(fit, 1, v[150:151])[0], manual, rtol=1e-13)


def test_exog_lags_columns():
    X = exog_matrix(np.arange(1.0, 6.0), 5, 2)
    assert_allclose(X, [[1, 0, 0], [2, 1, 0], [3, 2, 1], [4, 3, 2], [5, 4, 3]])


def test_too_short_series():
    with pytest.raises(ArmaxError):
        fit_armax(np.arange(5.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=4))
def test_pacf_map_round_trip_and_stationary(pacf):
    coef = pacf_to_coef(np.array(pacf))
    assert_allclose(coef_to_pacf(coef), pacf, atol=1e-8)
    companion = np.eye(coef.size, k=-1)
    companion[0] = coef
    assert np.max(np.abs(np.linalg.eigvals(companion))) < 1


def test_css_residuals_match_lfilter_definition():
    rng = np.random.default_rng(9)
    y = rng.normal(size=50)
    spec = ArmaxSpec(1, 1)
    e = css_residuals(y, np.zeros((50, 0)), spec, 0.1, np.array([0.4]), np.array([0.3]), np.zeros(0))
    z = y[1:] - 0.1 - 0.4 * y[:-1]
    assert e[0] == 0.0
    assert_allclose(e[1:], lfilter([1.0], [1.0, 0.3], z))
