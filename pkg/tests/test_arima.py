import numpy as np
import pytest

from oracles import exact_arma_loglik
from pmeval.baselines.arima import (SIGMA2_FLOOR, ArimaModel, arima_forecast, arma_loglik,
                                    fit_arma, fit_auto_arima, psi_weights, select_d)
from pmeval.errors import NonFinite, TooShort


def simulate_ar1(seed, phi=0.8, n=500, burn=200):
    e = np.random.default_rng(seed).normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return x[burn:]


def test_model_validation():
    with pytest.raises(ValueError):
        ArimaModel((1, 0, 0), (), (), 0.0, 1.0, 0.0, 10)
    with pytest.raises(ValueError):
        ArimaModel((0, 0, 0), (), (), 0.0, 0.0, 0.0, 10)
    with pytest.raises(ValueError):
        ArimaModel((-1, 0, 0), (), (), 0.0, 1.0, 0.0, 10)


def test_intercept_model_forecast():
    m = ArimaModel((0, 0, 0), (), (), 3.5, 2.0, 0.0, 30)
    mean, var = arima_forecast(m, np.full(30, 3.0), 4)
    assert mean.tolist() == [3.5] * 4
    assert var.tolist() == [2.0] * 4


def test_ar1_forecast_matches_closed_form():
    phi, mu, s2 = 0.7, 10.0, 0.5
    m = ArimaModel((1, 0, 0), (phi,), (), mu, s2, 0.0, 50)
    y = 10 + np.sin(np.arange(50.0))
    mean, var = arima_forecast(m, y, 6)
    h = np.arange(1, 7)
    assert mean == pytest.approx(mu + phi**h * (y[-1] - mu), abs=1e-10)
    assert var == pytest.approx(s2 * (1 - phi ** (2 * h)) / (1 - phi**2), abs=1e-12)


def test_ma1_forecast_matches_closed_form():
    theta, mu, s2 = 0.6, 2.0, 1.3
    m = ArimaModel((0, 0, 1), (), (theta,), mu, s2, 0.0, 40)
    y = np.random.default_rng(1).normal(mu, 1, 40)
    mean, var = arima_forecast(m, y, 3)
    assert mean[1:] == pytest.approx([mu, mu], abs=1e-12)
    assert var == pytest.approx([s2, s2 * (1 + theta**2), s2 * (1 + theta**2)], abs=1e-12)


def test_random_walk_forecast():
    m = ArimaModel((0, 1, 0), (), (), 0.0, 1.0, 0.0, 40)
    y = np.cumsum(np.ones(41))
    mean, var = arima_forecast(m, y, 3)
    assert mean.tolist() == [y[-1]] * 3
    assert var.tolist() == [1.0, 2.0, 3.0]


def test_psi_weights():
    assert psi_weights([0.5], [], 4).tolist() == [1, 0.5, 0.25, 0.125]
    assert psi_weights([], [0.3], 3).tolist() == [1, 0.3, 0]


def test_constant_series_uses_variance_floor():
    m = fit_auto_arima(np.full(30, 7.0))
    assert m.order == (0, 0, 0)
    assert m.sigma2 == SIGMA2_FLOOR
    mean, var = arima_forecast(m, np.full(30, 7.0), 2)
    assert mean.tolist() == [7.0, 7.0]


def test_errors():
    with pytest.raises(TooShort):
        fit_auto_arima(np.arange(10.0))
    bad = np.arange(30.0)
    bad[3] = np.nan
    with pytest.raises(NonFinite):
        fit_auto_arima(bad)


def test_loglik_matches_dense_oracle():
    w = np.random.default_rng(2).normal(size=80)
    ll, _ = arma_loglik(w, [0.5, -0.2], [0.3], 0.1, sigma2=1.7)
    assert ll == pytest.approx(exact_arma_loglik(w, [0.5, -0.2], [0.3], 0.1, 1.7), abs=1e-8)


@pytest.mark.parametrize("p,q", [(1, 0), (0, 1), (1, 1), (2, 1)])
def test_fitted_aic_matches_dense_likelihood(p, q):
    w = simulate_ar1(3, n=200)
    m = fit_arma(w, p, q)
    ll = exact_arma_loglik(w, m.ar_coeffs, m.ma_coeffs, m.intercept, m.sigma2)
    assert m.aic == pytest.approx(2 * (p + q + 2) - 2 * ll, abs=1e-6)


def test_fit_matches_statsmodels_likelihood():
    # an established implementation should not find a better ARMA(1,1) optimum
    from statsmodels.tsa.arima.model import ARIMA

    w = simulate_ar1(4, n=300)
    ours = fit_arma(w, 1, 1)
    ref = ARIMA(w, order=(1, 0, 1), trend="c").fit()
    assert ours.loglik >= ref.llf - 1e-3


def test_ar1_recovery_small_sample():
    hits = sum(fit_auto_arima(simulate_ar1(s)).order[:2] in {(1, 0), (2, 0)} for s in range(10))
    assert hits >= 8


def test_select_d():
    rng = np.random.default_rng(5)
    assert select_d(rng.normal(size=300)) == 0
    assert select_d(np.cumsum(rng.normal(size=300))) == 1


@pytest.mark.parametrize("seed", range(5))
def test_forecast_variance_non_decreasing(seed):
    y = np.cumsum(np.random.default_rng(seed).normal(size=80)) + 50
    m = fit_auto_arima(y)
    _, var = arima_forecast(m, y, 12)
    assert np.all(np.diff(var) >= 0)
    assert np.all(var > 0)
