"""GJR-GARCH(1,1) and GARCH(1,1) by Gaussian quasi-maximum likelihood.

The variance recursion is

    sigma2_t = omega + (alpha + gamma * 1[a_{t-1} < 0]) * a_{t-1}**2 + beta * sigma2_{t-1}

seeded with the sample variance.  Given the innovations the recursion is a
first-order linear filter in ``sigma2``, which keeps likelihood evaluation
vectorised.

Estimation searches an unconstrained space (L-BFGS-B, then a Nelder-Mead polish).  The map is

    omega       = var * exp(z_omega)
    persistence = logistic(z_p) * MAX_PERSISTENCE          (alpha + beta + gamma/2)
    beta        = logistic(z_b) * persistence
    alpha       = logistic(z_a) * 2 * (persistence - beta)  (GJR only)
    gamma       = 2 * (persistence - beta - alpha)

so that ``alpha >= 0``, ``beta >= 0``, ``alpha + gamma >= 0`` and the
persistence stays below one.  Without leverage ``alpha = persistence - beta``
and ``gamma = 0`` exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit

logger = logging.getLogger(__name__)

MAX_PERSISTENCE = 0.9999
_LOG_2PI = math.log(2.0 * math.pi)
_BOUNDARY_TOL = 1e-4


class GarchError(RuntimeError):
    pass


@dataclass(frozen=True)
class GjrParams:
    omega: float
    alpha: float
    gamma: float
    beta: float

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta + 0.5 * self.gamma

    def check(self) -> None:
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.alpha + self.gamma < 0:
            raise ValueError("alpha + gamma must be nonnegative")
        if not self.persistence < 1:
            raise ValueError("alpha + beta + gamma/2 must be below one")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.persistence)

    def as_dict(self) -> dict:
        return {"omega": self.omega, "alpha": self.alpha, "gamma": self.gamma, "beta": self.beta}


@dataclass(frozen=True)
class GjrFit:
    params: GjrParams
    mean_const: float
    sigma2: np.ndarray
    std_resid: np.ndarray
    loglik: float
    resid: np.ndarray
    leverage: bool = True
    converged: bool = True
    boundary: tuple = ()
    init_loglik: float = -np.inf
    sigma2_init: float = 1.0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def fitted(self) -> np.ndarray:
        """Mean-level output of the variance stage: the constant conditional mean."""
        return np.full(self.resid.shape, self.mean_const)

    def forecast(self, h: int) -> np.ndarray:
        return forecast_sigma2(self, h)


def sigma2_path(params: GjrParams, a, sigma2_init: float) -> np.ndarray:
    """Conditional variances for innovations ``a`` with ``sigma2[0] = sigma2_init``."""
    if not sigma2_init > 0:
        raise ValueError("sigma2_init must be positive")
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    out = np.empty(n)
    if n == 0:
        return out
    out[0] = sigma2_init
    if n > 1:
        a_prev = a[:-1]
        drive = params.omega + (params.alpha + params.gamma * (a_prev < 0)) * a_prev**2
        out[1:] = lfilter([1.0], [1.0, -params.beta], drive, zi=[params.beta * sigma2_init])[0]
    return out


def gaussian_loglik(a, sigma2) -> float:
    a = np.asarray(a, dtype=float)
    return float(-0.5 * np.sum(_LOG_2PI + np.log(sigma2) + a * a / sigma2))


def loglik(params: GjrParams, a, sigma2_init: float) -> float:
    s2 = sigma2_path(params, a, sigma2_init)
    return gaussian_loglik(a, s2)


def _unpack(z: np.ndarray, var: float, scale: float, leverage: bool, estimate_mean: bool):
    i = 0
    mu = 0.0
    if estimate_mean:
        mu = z[0] * scale
        i = 1
    omega = var * math.exp(z[i])
    pers = expit(z[i + 1]) * MAX_PERSISTENCE
    beta = expit(z[i + 2]) * pers
    rest = pers - beta
    if leverage:
        alpha = expit(z[i + 3]) * 2.0 * rest
        gamma = 2.0 * (rest - alpha)
    else:
        alpha = rest
        gamma = 0.0
    return mu, GjrParams(omega, alpha, gamma, beta)


def _pack(mu: float, p: GjrParams, var: float, scale: float, leverage: bool, estimate_mean: bool):
    pers = min(max(p.persistence, 1e-6), MAX_PERSISTENCE * (1 - 1e-6)) / MAX_PERSISTENCE
    z = []
    if estimate_mean:
        z.append(mu / scale)
    z.append(math.log(p.omega / var))
    z.append(float(logit(pers)))
    beta_share = min(max(p.beta / (pers * MAX_PERSISTENCE), 1e-6), 1 - 1e-6)
    z.append(float(logit(beta_share)))
    if leverage:
        rest = pers * MAX_PERSISTENCE - p.beta
        share = 0.5 if rest <= 0 else min(max(p.alpha / (2 * rest), 1e-6), 1 - 1e-6)
        z.append(float(logit(share)))
    return np.array(z)


def _start_grid(leverage: bool):
    for pers in (0.1, 0.5, 0.9, 0.97):
        for beta_share in (0.3, 0.85):
            beta = pers * beta_share
            rest = pers - beta
            if leverage:
                yield pers, beta, rest * 0.5, rest  # alpha=rest/2, gamma=rest
            else:
                yield pers, beta, rest, 0.0


def fit_gjr(a, leverage: bool = True, estimate_mean: bool = True) -> GjrFit:
    """Gaussian QMLE of a GJR-GARCH(1,1) (or GARCH(1,1) when ``leverage=False``).

    Parameters
    ----------
    a : array_like
        Series to model, typically residuals from a mean equation.
    leverage : bool
        False pins ``gamma`` to zero (plain GARCH benchmark).
    estimate_mean : bool
        Estimate a constant conditional mean jointly; the residuals of the
        stage are then ``a - mean_const``.
    """
    r = np.asarray(a, dtype=float)
    if r.ndim != 1 or r.shape[0] < 3:
        raise GarchError("need a 1-d series of length >= 3")
    if not np.all(np.isfinite(r)):
        raise GarchError("non-finite values in GARCH input")
    var = float(np.var(r))
    if not var > 0:
        raise GarchError("input has zero variance")
    scale = math.sqrt(var)
    mean0 = float(np.mean(r)) if estimate_mean else 0.0

    def negll(z):
        mu, p = _unpack(z, var, scale, leverage, estimate_mean)
        e = r - mu
        s2 = sigma2_path(p, e, var)
        if not np.all(s2 > 0):
            return 1e300
        val = -gaussian_loglik(e, s2)
        return val if np.isfinite(val) else 1e300

    starts = []
    for pers, beta, alpha, gamma in _start_grid(leverage):
        p0 = GjrParams(var * (1 - pers), alpha, gamma, beta)
        z0 = _pack(mean0, p0, var, scale, leverage, estimate_mean)
        starts.append((negll(z0), z0))
    starts.sort(key=lambda s: s[0])
    init_negll = starts[0][0]

    # quasi-Newton from the two best starts, then a simplex polish: the
    # likelihood is often flat in short samples and the polish recovers the
    # last few hundredths of log-likelihood that L-BFGS-B leaves behind
    best = None
    for _, z0 in starts[:2]:
        res = minimize(negll, z0, method="L-BFGS-B", options={"maxiter": 500})
        if best is None or res.fun < best.fun:
            best = res
    polish = minimize(negll, best.x, method="Nelder-Mead",
                      options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": 2000,
                               "maxfev": 3000, "adaptive": True})
    if polish.fun <= best.fun:
        polish.success = bool(polish.success or best.success)
        best = polish
    if not np.isfinite(best.fun) or best.fun >= 1e299:
        raise GarchError("likelihood optimisation failed")

    mu, params = _unpack(best.x, var, scale, leverage, estimate_mean)
    e = r - mu
    s2 = sigma2_path(params, e, var)
    ll = gaussian_loglik(e, s2)
    boundary = []
    if params.alpha < _BOUNDARY_TOL:
        boundary.append("alpha")
    if params.beta < _BOUNDARY_TOL:
        boundary.append("beta")
    if leverage and params.alpha + params.gamma < _BOUNDARY_TOL:
        boundary.append("alpha+gamma")
    if params.persistence > MAX_PERSISTENCE - _BOUNDARY_TOL:
        boundary.append("persistence")
    if boundary:
        logger.debug("GARCH boundary solution: %s", ",".join(boundary))
    return GjrFit(
        params=params,
        mean_const=float(mu),
        sigma2=s2,
        std_resid=e / np.sqrt(s2),
        loglik=ll,
        resid=e,
        leverage=leverage,
        converged=bool(best.success),
        boundary=tuple(boundary),
        init_loglik=-init_negll,
        sigma2_init=var,
        info={"nfev": int(best.nfev)},
    )


def forecast_sigma2(fit: GjrFit, h: int) -> np.ndarray:
    """Variance forecasts for steps ``1..h`` after the sample.

    The first step is exact.  Later steps use
    ``E[(alpha + gamma I) a^2] = (alpha + gamma/2) sigma2`` (symmetric shocks).
    """
    if h < 1:
        raise ValueError("h must be at least 1")
    p = fit.params
    a_last = fit.resid[-1]
    out = np.empty(h)
    out[0] = p.omega + (p.alpha + p.gamma * (a_last < 0)) * a_last**2 + p.beta * fit.sigma2[-1]
    pers = p.persistence
    for k in range(1, h):
        out[k] = p.omega + pers * out[k - 1]
    return out


def simulate_gjr(params: GjrParams, n: int, rng: np.random.Generator, burn: int = 500,
                 mean: float = 0.0) -> np.ndarray:
    """Simulate a GJR-GARCH(1,1) path with standard normal shocks."""
    params.check()
    total = n + burn
    eps = rng.standard_normal(total)
    a = np.empty(total)
    s2 = params.unconditional_variance
    for t in range(total):
        a[t] = math.sqrt(s2) * eps[t]
        s2 = params.omega + (params.alpha + params.gamma * (a[t] < 0)) * a[t] ** 2 + params.beta * s2
    return mean + a[burn:]
