"""ARMAX mean equation estimated by conditional sum of squares.

Model (plus-sign MA convention)::

    y_t = c + sum_i phi_i y_{t-i} + sum_k psi_k X_{t,k} + a_t + sum_j theta_j a_{t-j}

``X`` stacks the exogenous series and their lags ``0..exog_lags``.  The first
``max(p, exog_lags)`` observations are conditioned on: their innovations are
zero and their fitted values equal the data.  Pre-sample innovations are zero.

For fixed ``theta`` the residuals are linear in ``(c, phi, psi)``; the
intercept and exogenous coefficients are profiled out by least squares while
a Nelder-Mead simplex searches over the AR and MA coefficients, both mapped
through partial autocorrelations so the AR polynomial stays stationary and
the MA polynomial invertible.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

logger = logging.getLogger(__name__)

_PACF_BOUND = 0.999
UNIT_ROOT_FLAG = 0.99


class ArmaxError(RuntimeError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ArmaxSpec:
    p: int = 1
    q: int = 1
    exog_lags: int = 0
    include_intercept: bool = True

    def __post_init__(self) -> None:
        if self.p < 0 or self.q < 0 or self.exog_lags < 0:
            raise ValueError("ARMAX orders must be nonnegative")

    @property
    def n_cond(self) -> int:
        """Number of leading observations that are conditioned on."""
        return max(self.p, self.exog_lags)


@dataclass(frozen=True)
class ArmaxFit:
    spec: ArmaxSpec
    phi: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    intercept: float
    fitted: np.ndarray
    residuals: np.ndarray
    sse: float
    y: np.ndarray
    exog: np.ndarray
    converged: bool = True
    grad_norm: float = 0.0
    near_unit_root: bool = False
    n_eval: int = 0
    info: dict = field(default_factory=dict, compare=False)

    @property
    def ar_roots(self) -> np.ndarray:
        """Roots of 1 - sum phi_i z^i."""
        if self.phi.size == 0:
            return np.array([])
        return np.roots(np.r_[-self.phi[::-1], 1.0])

    def forecast(self, h: int, v_future=None) -> np.ndarray:
        return forecast_armax(self, h, v_future)


def pacf_to_coef(r: np.ndarray) -> np.ndarray:
    """Map partial autocorrelations in (-1, 1) to stationary AR coefficients."""
    r = np.asarray(r, dtype=float)
    coef = np.zeros(0)
    for k, rk in enumerate(r):
        coef = np.r_[coef - rk * coef[::-1], rk] if k else np.array([rk])
    return coef


def coef_to_pacf(coef: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pacf_to_coef` (reverse Durbin-Levinson)."""
    a = np.asarray(coef, dtype=float).copy()
    p = a.size
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        rk = a[k]
        r[k] = rk
        if k == 0:
            break
        denom = 1.0 - rk * rk
        if abs(denom) < 1e-12:
            break
        a = (a[:k] + rk * a[:k][::-1]) / denom
    return r


def _to_unbounded(coef: np.ndarray) -> np.ndarray:
    r = np.clip(coef_to_pacf(coef), -0.95, 0.95)
    return np.arctanh(r / _PACF_BOUND)


def _from_unbounded(z: np.ndarray) -> np.ndarray:
    return pacf_to_coef(_PACF_BOUND * np.tanh(z))


def exog_matrix(v, n: int, exog_lags: int) -> np.ndarray:
    """Columns ``v_{t-l}`` for every exogenous series and ``l = 0..exog_lags``.

    Pre-sample lags are zero; those rows are conditioned on anyway.
    """
    if v is None:
        return np.zeros((n, 0))
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != n:
        raise ValueError(f"exogenous length {v.shape[0]} does not match y length {n}")
    cols = []
    for j in range(v.shape[1]):
        for lag in range(exog_lags + 1):
            col = np.zeros(n)
            col[lag:] = v[: n - lag, j]
            cols.append(col)
    return np.column_stack(cols) if cols else np.zeros((n, 0))


def _regressors(y: np.ndarray, X: np.ndarray, spec: ArmaxSpec) -> np.ndarray:
    """Intercept, AR lags and exogenous columns for rows ``n_cond:``."""
    n = y.shape[0]
    k0 = spec.n_cond
    parts = []
    if spec.include_intercept:
        parts.append(np.ones((n - k0, 1)))
    if spec.p:
        parts.append(np.column_stack([y[k0 - i : n - i] for i in range(1, spec.p + 1)]))
    if X.shape[1]:
        parts.append(X[k0:])
    if not parts:
        return np.zeros((n - k0, 0))
    return np.hstack(parts)


def css_residuals(
    y: np.ndarray,
    X: np.ndarray,
    spec: ArmaxSpec,
    intercept: float,
    phi: np.ndarray,
    theta: np.ndarray,
    psi: np.ndarray,
) -> np.ndarray:
    """Innovations of the ARMAX recursion for given coefficients."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    k0 = spec.n_cond
    z = y[k0:] - intercept
    for i, ph in enumerate(phi, start=1):
        z = z - ph * y[k0 - i : n - i]
    if psi.size:
        z = z - X[k0:] @ psi
    e = np.zeros(n)
    e[k0:] = lfilter([1.0], np.r_[1.0, theta], z) if theta.size else z
    return e


def _split_linear(beta: np.ndarray, spec: ArmaxSpec):
    i = 0
    c = 0.0
    if spec.include_intercept:
        c = float(beta[0])
        i = 1
    phi = beta[i : i + spec.p]
    psi = beta[i + spec.p :]
    return c, phi, psi


class _Profile:
    """Least-squares solve of the CSS for fixed MA coefficients.

    With ``phi=None`` the AR coefficients are solved jointly with the
    intercept and exogenous terms; otherwise ``phi`` is held fixed.
    """

    def __init__(self, y: np.ndarray, X: np.ndarray, spec: ArmaxSpec):
        self.y = y
        self.X = X
        self.spec = spec
        k0 = spec.n_cond
        self.target = y[k0:]
        self.Z = _regressors(y, X, spec)
        self.n_eval = 0

    def solve(self, theta: np.ndarray, phi: np.ndarray | None = None):
        spec = self.spec
        a = np.r_[1.0, theta]
        target = self.target
        Z = self.Z
        if phi is not None and spec.p:
            k0 = spec.n_cond
            n = self.y.shape[0]
            for i, ph in enumerate(phi, start=1):
                target = target - ph * self.y[k0 - i : n - i]
            keep = np.ones(Z.shape[1], dtype=bool)
            off = 1 if spec.include_intercept else 0
            keep[off : off + spec.p] = False
            Z = Z[:, keep]
        if theta.size:
            target = lfilter([1.0], a, target)
            Z = lfilter([1.0], a, Z, axis=0) if Z.shape[1] else Z
        if Z.shape[1]:
            beta, *_ = np.linalg.lstsq(Z, target, rcond=None)
            resid = target - Z @ beta
        else:
            beta = np.zeros(0)
            resid = target
        self.n_eval += 1
        return beta, float(resid @ resid)


def _assemble(beta, spec, phi_fixed=None):
    if phi_fixed is None:
        return _split_linear(beta, spec)
    c = float(beta[0]) if spec.include_intercept else 0.0
    psi = beta[1:] if spec.include_intercept else beta
    return c, phi_fixed, psi


def _ols_init(prof: _Profile) -> np.ndarray:
    beta, _ = prof.solve(np.zeros(0))
    return beta


def _css_objective(prof: _Profile, spec: ArmaxSpec):
    def f(z):
        phi = _from_unbounded(z[: spec.p]) if spec.p else np.zeros(0)
        theta = -_from_unbounded(z[spec.p :]) if spec.q else np.zeros(0)
        _, sse = prof.solve(theta, phi)
        return sse

    return f


def _sse_full(y, X, spec, c, phi, theta, psi) -> float:
    e = css_residuals(y, X, spec, c, phi, theta, psi)
    return float(e @ e)


def _numerical_grad(y, X, spec, c, phi, theta, psi) -> float:
    """Central-difference gradient norm of the CSS at the solution."""
    vec = np.r_[c, phi, theta, psi]
    n_phi, n_theta = phi.size, theta.size

    def unpack(v):
        return (
            v[0],
            v[1 : 1 + n_phi],
            v[1 + n_phi : 1 + n_phi + n_theta],
            v[1 + n_phi + n_theta :],
        )

    grad = np.zeros_like(vec)
    scale = max(_sse_full(y, X, spec, c, phi, theta, psi), 1e-300)
    for k in range(vec.size):
        if k == 0 and not spec.include_intercept:
            continue
        h = 1e-6 * max(1.0, abs(vec[k]))
        up, dn = vec.copy(), vec.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (
            _sse_full(y, X, spec, *unpack(up)) - _sse_full(y, X, spec, *unpack(dn))
        ) / (2 * h)
    return float(np.linalg.norm(grad) / scale)


def fit_armax(y, v=None, spec: ArmaxSpec | None = None) -> ArmaxFit:
    """Fit an ARMAX model by conditional sum of squares.

    Parameters
    ----------
    y : array_like, shape (n,)
        Response.
    v : array_like, shape (n,) or (n, k), optional
        Exogenous series; lags ``0..spec.exog_lags`` of each column enter.
    spec : ArmaxSpec, optional
        Defaults to ARMAX(1, 1) with contemporaneous ``v`` and an intercept.

    Returns
    -------
    ArmaxFit
        ``fitted + residuals == y`` exactly.  ``converged`` is False when the
        simplex search hit its iteration cap; ``grad_norm`` is the relative
        CSS gradient norm at the returned coefficients.
    """
    spec = spec or ArmaxSpec()
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("y must be one-dimensional")
    n = y.shape[0]
    X = exog_matrix(v, n, spec.exog_lags)
    n_par = spec.p + spec.q + X.shape[1] + int(spec.include_intercept)
    if spec.p + spec.q == 0 and X.shape[1] == 0 and not spec.include_intercept:
        raise ValueError("ARMAX model has no terms")
    if n < spec.p + spec.q + spec.exog_lags + 5 or n - spec.n_cond <= n_par:
        raise ArmaxError(f"series of length {n} too short for {spec}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ArmaxError("non-finite values in ARMAX input")

    prof = _Profile(y, X, spec)
    converged = True
    if spec.q == 0:
        # pure least squares; AR coefficients come straight from the regression
        beta, _ = prof.solve(np.zeros(0))
        c, phi, psi = _split_linear(beta, spec)
        theta = np.zeros(0)
        if spec.p and np.any(np.abs(_roots_inv(phi)) >= _PACF_BOUND):
            c, phi, theta, psi, converged = _simplex(prof, spec, phi, np.zeros(0))
    else:
        beta0 = _ols_init(prof)
        _, phi0, _ = _split_linear(beta0, spec)
        c, phi, theta, psi, converged = _simplex(prof, spec, phi0, np.zeros(spec.q))

    e = css_residuals(y, X, spec, c, phi, theta, psi)
    sse = float(e @ e)
    grad = _numerical_grad(y, X, spec, c, phi, theta, psi) if n_par else 0.0
    near = bool(phi.size and np.max(np.abs(_roots_inv(phi))) > UNIT_ROOT_FLAG)
    if near:
        logger.info("near-unit-root AR polynomial: phi=%s", phi)
    if not converged:
        warnings.warn(
            f"ARMAX simplex search did not converge (relative gradient norm {grad:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return ArmaxFit(
        spec=spec,
        phi=np.asarray(phi, dtype=float),
        theta=np.asarray(theta, dtype=float),
        psi=np.asarray(psi, dtype=float),
        intercept=float(c),
        fitted=y - e,
        residuals=e,
        sse=sse,
        y=y,
        exog=X,
        converged=converged,
        grad_norm=grad,
        near_unit_root=near,
        n_eval=prof.n_eval,
    )


def _roots_inv(phi: np.ndarray) -> np.ndarray:
    """Inverse roots of the AR polynomial; stationary iff all |.| < 1."""
    if phi.size == 0:
        return np.zeros(0)
    return np.roots(np.r_[1.0, -np.asarray(phi)])


def _simplex(prof: _Profile, spec: ArmaxSpec, phi0: np.ndarray, theta0: np.ndarray):
    """Nelder-Mead over transformed (phi, theta); intercept and psi profiled."""
    f = _css_objective(prof, spec)
    starts = [np.r_[_to_unbounded(phi0), _to_unbounded(-theta0)]]
    if spec.q:
        # opposite-sign MA start guards against the AR/MA cancellation ridge
        alt_theta = np.full(spec.q, 0.0)
        alt_theta[0] = -0.3 if phi0.size and phi0[0] > 0 else 0.3
        starts.append(np.r_[_to_unbounded(phi0), _to_unbounded(-alt_theta)])
    best = None
    for z0 in starts:
        res = minimize(
            f,
            z0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-12 * max(f(z0), 1e-300), "maxiter": 4000,
                     "maxfev": 8000, "adaptive": z0.size > 4},
        )
        # restart from the optimum to escape a collapsed simplex
        res2 = minimize(
            f,
            res.x,
            method="Nelder-Mead",
            options={"xatol": 1e-8, "fatol": 1e-13 * max(res.fun, 1e-300), "maxiter": 2000,
                     "maxfev": 4000},
        )
        if res2.fun <= res.fun:
            res2.success = bool(res.success or res2.success)
            res = res2
        if best is None or res.fun < best.fun:
            best = res
    z = best.x
    phi = _from_unbounded(z[: spec.p]) if spec.p else np.zeros(0)
    theta = -_from_unbounded(z[spec.p :]) if spec.q else np.zeros(0)
    beta, _ = prof.solve(theta, phi)
    c, phi, psi = _assemble(beta, spec, phi)
    return c, phi, theta, psi, bool(best.success)


def one_step_predictions(fit: ArmaxFit) -> np.ndarray:
    """In-sample one-step predictor; identical to ``fit.fitted``."""
    return fit.fitted


def forecast_armax(fit: ArmaxFit, h: int, v_future=None) -> np.ndarray:
    """Recursive conditional-expectation forecasts ``h`` steps past the sample.

    Future innovations are zero.  ``v_future`` supplies the exogenous series
    for the forecast periods (shape ``(h,)`` or ``(h, k)``); it may be omitted
    only when the model has no exogenous terms.
    """
    if h < 1:
        raise ValueError("h must be at least 1")
    spec = fit.spec
    n = fit.y.shape[0]
    n_exog = fit.exog.shape[1] // (spec.exog_lags + 1) if fit.exog.shape[1] else 0
    if n_exog:
        if v_future is None:
            raise ValueError("exogenous future values are required")
        vf = np.asarray(v_future, dtype=float)
        if vf.ndim == 1:
            vf = vf[:, None]
        if vf.shape[0] < h or vf.shape[1] != n_exog:
            raise ValueError(
                f"need {h} future rows of {n_exog} exogenous series, got shape {vf.shape}"
            )
        # rebuild the raw exogenous history from the contemporaneous columns
        hist = fit.exog[:, :: spec.exog_lags + 1]
        full = np.vstack([hist, vf[:h]])
        X_all = exog_matrix(full, n + h, spec.exog_lags)
    else:
        X_all = np.zeros((n + h, 0))

    y_ext = np.r_[fit.y, np.zeros(h)]
    e_ext = np.r_[fit.residuals, np.zeros(h)]
    out = np.empty(h)
    for s in range(h):
        t = n + s
        val = fit.intercept
        for i, ph in enumerate(fit.phi, start=1):
            val += ph * y_ext[t - i]
        for j, th in enumerate(fit.theta, start=1):
            val += th * e_ext[t - j]
        if fit.psi.size:
            val += float(X_all[t] @ fit.psi)
        y_ext[t] = val
        out[s] = val
    return out
