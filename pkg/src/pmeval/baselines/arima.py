"""Non-seasonal ARIMA with AIC order selection.

Exact Gaussian likelihood comes from a Kalman filter on the Harvey state
space form of the (differenced, demeaned) ARMA process. Coefficients are
optimised through the partial-autocorrelation reparametrisation so every
candidate is causal and invertible by construction.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit
from scipy import optimize, signal

from ..errors import FitFailure, NonFinite, TooShort

log = logging.getLogger(__name__)

SIGMA2_FLOOR = 1e-8
MIN_OBS = 20
ROOT_TOL = 1e-6
AIC_TIE_TOL = 1e-9
# candidates with roots this close to the unit circle, or with an AR root this
# close to an MA root (a near common factor), are redundant and not selectable
ROOT_MARGIN = 1.01
COMMON_FACTOR_DIST = 0.2
_PACF_MAX = 1.0 - 1e-7
# MacKinnon (2010) response surface for the 5% Dickey-Fuller critical value, constant only.
_DF_CRIT_5PCT = (-2.86154, -2.8903, -4.234)


@dataclass(frozen=True)
class ArimaModel:
    order: tuple[int, int, int]
    ar_coeffs: tuple[float, ...]
    ma_coeffs: tuple[float, ...]
    intercept: float
    sigma2: float
    aic: float
    n_obs: int
    loglik: float = float("nan")

    def __post_init__(self):
        p, d, q = self.order
        if min(p, d, q) < 0:
            raise ValueError(f"negative order {self.order}")
        if len(self.ar_coeffs) != p or len(self.ma_coeffs) != q:
            raise ValueError("coefficient count does not match order")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n_params(self) -> int:
        p, _, q = self.order
        return p + q + 2


# ---------------------------------------------------------------- likelihood
# State vector of the Harvey form has r = max(p, q + 1) elements; T has the AR
# coefficients down its first column and an identity shifted above the diagonal.

@njit(cache=True)
def _stationary_cov(phi, R, r):
    """Solve P = T P T' + R R' for the Harvey transition matrix."""
    n = r * r
    A = np.eye(n)
    T = np.zeros((r, r))
    for i in range(r):
        T[i, 0] = phi[i]
        if i + 1 < r:
            T[i, i + 1] = 1.0
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for m in range(r):
                    A[i * r + j, k * r + m] -= T[i, k] * T[j, m]
    b = np.empty(n)
    for i in range(r):
        for j in range(r):
            b[i * r + j] = R[i] * R[j]
    P = np.linalg.solve(A, b).reshape(r, r)
    return 0.5 * (P + P.T)


@njit(cache=True)
def _system(ar, ma):
    p = ar.shape[0]
    q = ma.shape[0]
    r = max(p, q + 1)
    phi = np.zeros(r)
    phi[:p] = ar
    R = np.zeros(r)
    R[0] = 1.0
    R[1:q + 1] = ma
    return phi, R, _stationary_cov(phi, R, r)


@njit(cache=True)
def _filter(x, phi, R, P0):
    """Run the filter over ``x`` (sigma2 = 1).

    Returns the sum of squared standardised innovations, the sum of log F_t
    and the one-step-ahead predicted state after the last observation.
    """
    r = phi.shape[0]
    a = np.zeros(r)
    an = np.zeros(r)
    P = P0.copy()
    Pn = np.empty((r, r))
    TP = np.empty((r, r))
    K = np.zeros(r)
    ssq = 0.0
    logdet = 0.0
    steady = False
    F = 1.0
    for t in range(x.shape[0]):
        v = x[t] - a[0]
        if not steady:
            F = P[0, 0]
            if not F > 0.0:
                return np.inf, np.inf, a
            # K = T P e1 / F
            for i in range(r):
                K[i] = phi[i] * P[0, 0]
                if i + 1 < r:
                    K[i] += P[i + 1, 0]
                K[i] /= F
        ssq += v * v / F
        logdet += math.log(F)
        for i in range(r):
            an[i] = phi[i] * a[0] + K[i] * v
            if i + 1 < r:
                an[i] += a[i + 1]
        for i in range(r):
            a[i] = an[i]
        if not steady:
            # TP = T P
            for i in range(r):
                for j in range(r):
                    TP[i, j] = phi[i] * P[0, j]
                    if i + 1 < r:
                        TP[i, j] += P[i + 1, j]
            diff = 0.0
            for i in range(r):
                for j in range(r):
                    val = phi[j] * TP[i, 0]
                    if j + 1 < r:
                        val += TP[i, j + 1]
                    val += R[i] * R[j] - K[i] * K[j] * F
                    Pn[i, j] = val
                    diff = max(diff, abs(val - P[i, j]))
            for i in range(r):
                for j in range(r):
                    P[i, j] = Pn[i, j]
            if diff < 1e-14:
                steady = True
                F = P[0, 0]
                for i in range(r):
                    K[i] = phi[i] * P[0, 0]
                    if i + 1 < r:
                        K[i] += P[i + 1, 0]
                    K[i] /= F
    return ssq, logdet, a


@njit(cache=True)
def _pacf_to_coeffs(u):
    """Map partial autocorrelations in (-1, 1) to AR coefficients (Durbin-Levinson)."""
    k = u.shape[0]
    phi = np.zeros(k)
    prev = np.zeros(k)
    for m in range(k):
        for j in range(m):
            prev[j] = phi[j]
        for j in range(m):
            phi[j] = prev[j] - u[m] * prev[m - 1 - j]
        phi[m] = u[m]
    return phi


@njit(cache=True)
def _unpack(theta, p, q):
    mean = theta[0]
    # keep partial autocorrelations off +-1 so the stationary covariance stays solvable
    u = np.minimum(np.maximum(np.tanh(theta[1:]), -_PACF_MAX), _PACF_MAX)
    ar = _pacf_to_coeffs(u[:p])
    # theta(B) = 1 + sum theta_j B^j is invertible iff -theta is a causal AR polynomial
    ma = -_pacf_to_coeffs(u[p:p + q])
    return mean, ar, ma


@njit(cache=True)
def _concentrated_nll(theta, w, p, q):
    mean, ar, ma = _unpack(theta, p, q)
    phi, R, P0 = _system(ar, ma)
    ssq, logdet, _ = _filter(w - mean, phi, R, P0)
    n = w.shape[0]
    if not np.isfinite(ssq) or not np.isfinite(logdet):
        return 1e10
    s2 = max(ssq / n, 1e-300)
    return 0.5 * (math.log(2 * math.pi * s2) + 1.0 + logdet / n)


@njit(cache=True)
def _css(theta, w, p, q):
    mean, ar, ma = _unpack(theta, p, q)
    n = w.shape[0]
    e = np.zeros(n)
    ssq = 0.0
    for t in range(p, n):
        v = w[t] - mean
        for j in range(p):
            v -= ar[j] * (w[t - 1 - j] - mean)
        for j in range(q):
            if t - 1 - j >= p:
                v -= ma[j] * e[t - 1 - j]
        e[t] = v
        ssq += v * v
    return ssq / (n - p)


@njit(cache=True)
def _with_gradient(theta, objective_id, w, p, q):
    """Objective value and its central-difference gradient in one compiled call."""
    f0 = _objective(objective_id, theta, w, p, q)
    g = np.empty(theta.shape[0])
    th = theta.copy()
    for i in range(theta.shape[0]):
        h = 6e-6 * max(1.0, abs(theta[i]))
        th[i] = theta[i] + h
        fp = _objective(objective_id, th, w, p, q)
        th[i] = theta[i] - h
        fm = _objective(objective_id, th, w, p, q)
        th[i] = theta[i]
        g[i] = (fp - fm) / (2.0 * h)
    return f0, g


@njit(cache=True)
def _objective(objective_id, theta, w, p, q):
    if objective_id == 0:
        return _css(theta, w, p, q)
    return _concentrated_nll(theta, w, p, q)


def arma_loglik(w: np.ndarray, ar: Sequence[float], ma: Sequence[float], mean: float,
                sigma2: float | None = None) -> tuple[float, float]:
    """Exact Gaussian log-likelihood of a stationary ARMA series.

    Returns ``(loglik, sigma2)``; when ``sigma2`` is None the ML value is
    concentrated out.
    """
    ar = np.asarray(ar, dtype=float)
    ma = np.asarray(ma, dtype=float)
    x = np.ascontiguousarray(np.asarray(w, dtype=float) - mean)
    n = x.size
    phi, R, P0 = _system(ar, ma)
    ssq, logdet, _ = _filter(x, phi, R, P0)
    if not np.isfinite(ssq):
        return -np.inf, np.nan
    if sigma2 is None:
        sigma2 = max(ssq / n, SIGMA2_FLOOR)
    ll = -0.5 * (n * math.log(2 * math.pi * sigma2) + logdet + ssq / sigma2)
    return ll, sigma2


def _roots(coeffs: Sequence[float], sign: float) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or np.all(c == 0):
        return np.zeros(0, dtype=complex)
    return np.roots(np.r_[1.0, sign * c][::-1])


def is_well_posed(model: ArimaModel) -> bool:
    ar_roots = _roots(model.ar_coeffs, -1.0)
    ma_roots = _roots(model.ma_coeffs, 1.0)
    for roots in (ar_roots, ma_roots):
        if roots.size and np.min(np.abs(roots)) < ROOT_MARGIN:
            return False
    if ar_roots.size and ma_roots.size:
        gap = np.min(np.abs(ar_roots[:, None] - ma_roots[None, :]))
        if gap < COMMON_FACTOR_DIST:
            return False
    return True


def min_root_modulus(coeffs: Sequence[float], sign: float) -> float:
    """Smallest |z| among roots of 1 + sign*sum c_j z^j (inf when there are none)."""
    roots = _roots(coeffs, sign)
    return float(np.min(np.abs(roots))) if roots.size else float("inf")


# -------------------------------------------------------------- estimation

def fit_arma(w: np.ndarray, p: int, q: int) -> ArimaModel:
    """Fit ARMA(p, q) with mean: CSS for starting values, then exact ML."""
    w = np.asarray(w, dtype=float)
    scale = float(np.std(w)) or 1.0
    z = (w - w.mean()) / scale
    theta0 = np.zeros(1 + p + q)
    with warnings.catch_warnings():
        # line-search hiccups near the optimum are harmless; convergence is checked below
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        warnings.filterwarnings("ignore", message="The line search algorithm")
        if p + q:
            css = optimize.minimize(_with_gradient, theta0, args=(0, z, p, q), jac=True,
                                    method="BFGS", options={"gtol": 1e-4, "maxiter": 200})
            if np.all(np.isfinite(css.x)):
                theta0 = css.x
        res = optimize.minimize(_with_gradient, theta0, args=(1, z, p, q), jac=True,
                                method="BFGS", options={"gtol": 1e-6, "maxiter": 400})
    if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
        raise FitFailure(f"ARMA({p},{q}) likelihood did not converge: {res.message}")
    mean_z, ar, ma = _unpack(res.x, p, q)
    mean = w.mean() + scale * mean_z
    if min_root_modulus(ar, -1.0) < 1 - ROOT_TOL or min_root_modulus(ma, 1.0) < 1 - ROOT_TOL:
        raise FitFailure(f"ARMA({p},{q}) left the causal/invertible region")
    ll, sigma2 = arma_loglik(w, ar, ma, mean)
    if not np.isfinite(ll):
        raise FitFailure(f"ARMA({p},{q}) produced a non-finite likelihood")
    k = p + q + 2
    return ArimaModel(order=(p, 0, q), ar_coeffs=tuple(ar.tolist()), ma_coeffs=tuple(ma.tolist()),
                      intercept=float(mean), sigma2=float(sigma2), aic=2 * k - 2 * ll,
                      n_obs=w.size, loglik=ll)


def adf_statistic(x: np.ndarray, lags: int | None = None) -> float:
    """Augmented Dickey-Fuller t-statistic (constant, no trend)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if lags is None:
        lags = int(math.floor((n - 1) ** (1 / 3)))
    dx = np.diff(x)
    rows = dx.size - lags
    X = np.empty((rows, 2 + lags))
    X[:, 0] = 1.0
    X[:, 1] = x[lags:-1]
    for j in range(1, lags + 1):
        X[:, 1 + j] = dx[lags - j : dx.size - j]
    y = dx[lags:]
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    dof = rows - X.shape[1]
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.pinv(X.T @ X)
    se = math.sqrt(cov[1, 1])
    return float(beta[1] / se) if se > 0 else float("-inf")


def adf_critical_value(n: int) -> float:
    b0, b1, b2 = _DF_CRIT_5PCT
    return b0 + b1 / n + b2 / n**2


def select_d(series: np.ndarray, max_d: int = 2) -> int:
    """Smallest d whose differenced series rejects a unit root at the 5% level."""
    x = np.asarray(series, dtype=float)
    for d in range(max_d + 1):
        if d == max_d or np.std(x) == 0:
            return d
        if adf_statistic(x) < adf_critical_value(x.size):
            return d
        x = np.diff(x)
    return max_d


def fit_auto_arima(series: Sequence[float], max_p: int = 3, max_q: int = 3,
                   max_d: int = 2) -> ArimaModel:
    """Choose d by unit-root testing, then (p, q) by AIC over the grid."""
    y = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFinite("series contains non-finite values")
    if y.size < MIN_OBS:
        raise TooShort(f"need at least {MIN_OBS} observations, got {y.size}")
    d = select_d(y, max_d)
    w = np.diff(y, n=d) if d else y
    if w.size < MIN_OBS:
        raise TooShort(f"{w.size} observations after differencing {d} times; need {MIN_OBS}")
    if np.std(w) == 0:
        # constant series: intercept-only model held at the variance floor
        ll = -0.5 * w.size * math.log(2 * math.pi * SIGMA2_FLOOR)
        return ArimaModel((0, d, 0), (), (), float(w[0]), SIGMA2_FLOOR, 4 - 2 * ll, w.size, ll)

    fits = []
    for p in range(max_p + 1):
        for q in range(max_q + 1):
            try:
                fits.append(fit_arma(w, p, q))
            except (FitFailure, np.linalg.LinAlgError) as exc:
                log.debug("ARMA(%d,%d) skipped: %s", p, q, exc)
    if not fits:
        raise FitFailure("no ARMA order converged")
    fits = [m for m in fits if is_well_posed(m)] or fits
    best_aic = min(m.aic for m in fits)
    near = [m for m in fits if m.aic - best_aic <= AIC_TIE_TOL]
    best = min(near, key=lambda m: (m.order[0] + m.order[2], m.order[2]))
    return ArimaModel(order=(best.order[0], d, best.order[2]), ar_coeffs=best.ar_coeffs,
                      ma_coeffs=best.ma_coeffs, intercept=best.intercept, sigma2=best.sigma2,
                      aic=best.aic, n_obs=best.n_obs, loglik=best.loglik)


# --------------------------------------------------------------- forecast

def psi_weights(ar: Sequence[float], ma: Sequence[float], n: int) -> np.ndarray:
    """First ``n`` MA(inf) weights of theta(B)/phi(B)."""
    impulse = np.zeros(n)
    impulse[0] = 1.0
    return signal.lfilter(np.r_[1.0, np.asarray(ma, float)], np.r_[1.0, -np.asarray(ar, float)],
                          impulse)


def arima_forecast(model: ArimaModel, series: Sequence[float],
                   horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and forecast-error variance for steps 1..horizon on the original scale."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    y = np.asarray(series, dtype=float)
    p, d, q = model.order
    ar = np.asarray(model.ar_coeffs, dtype=float)
    ma = np.asarray(model.ma_coeffs, dtype=float)
    w = np.diff(y, n=d) if d else y
    phi, R, P0 = _system(ar, ma)
    _, _, a = _filter(np.ascontiguousarray(w - model.intercept), phi, R, P0)
    w_hat = np.empty(horizon)
    for h in range(horizon):
        w_hat[h] = a[0] + model.intercept
        a = phi * a[0] + np.r_[a[1:], 0.0]
    # integrate back d times, each level anchored on the last observed value
    mean = w_hat
    for level in range(d, 0, -1):
        last = np.diff(y, n=level - 1)[-1] if level > 1 else y[-1]
        mean = last + np.cumsum(mean)
    integrated_ar = np.r_[1.0, -ar]
    for _ in range(d):
        integrated_ar = np.convolve(integrated_ar, [1.0, -1.0])
    full_ar = -integrated_ar[1:]
    psi = psi_weights(full_ar, ma, horizon)
    var = model.sigma2 * np.cumsum(psi**2)
    return mean, var
