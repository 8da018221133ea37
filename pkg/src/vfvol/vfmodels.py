"""Hybrid backfitting estimators for the VF-ARMA and VF-GARCH models.

Both models write the low-frequency response as a sum of three stage outputs:

* ARMAX fitted values in the volume covariate,
* the constant conditional mean of a GJR-GARCH fit,
* an additive spline model in the lagged high-frequency panel.

VF-GARCH runs the stages in the order ARMAX -> GJR -> GAM, VF-ARMA in the
order GAM -> ARMAX -> GJR, and both repeat until the in-sample MSE settles.

Two response-update rules are available.

``"partial"``
    Every stage is fitted to the response minus the other two stages'
    current outputs.  A stage whose refit would raise the composite SSE is
    kept at its previous value, so the MSE trace never increases.

``"literal"``
    The updates are applied as written in the original algorithm: VF-GARCH
    refits on ``y - e_GAM``; VF-ARMA refits the GAM on ``y - e_GJR`` and
    feeds ``y - e_GAM`` to the ARMAX stage.  Stage fitted values for the
    ARMAX stage are ``y - e_ARMAX``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .arma import ArmaxFit, ArmaxSpec, fit_armax, forecast_armax
from .dataset import VaryingFrequencyDataset
from .garch import GjrFit, fit_gjr
from .smooth import AdditiveFit, SplineConfig, backfit_additive, evaluate_additive

logger = logging.getLogger(__name__)

VF_ARMA = "vf-arma"
VF_GARCH = "vf-garch"
PARTIAL_RESIDUAL = "partial"
LITERAL = "literal"

MIN_LENGTH = 30
INCREASE_LIMIT = 3
# slack for accepting a stage update: float noise in SSE comparisons
_SSE_SLACK = 1e-12


class StageError(RuntimeError):
    """A component stage failed; ``stage`` names it."""

    def __init__(self, stage: str, iteration: int, cause: BaseException):
        super().__init__(f"{stage} stage failed at iteration {iteration}: {cause}")
        self.stage = stage
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class VfConfig:
    model_kind: str = VF_ARMA
    armax_spec: ArmaxSpec = field(default_factory=ArmaxSpec)
    spline_cfg: SplineConfig = field(default_factory=SplineConfig)
    mse_tol: float = 0.005
    max_iter: int = 50
    update_rule: str = PARTIAL_RESIDUAL
    leverage: bool = True

    def __post_init__(self) -> None:
        if self.model_kind not in (VF_ARMA, VF_GARCH):
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.update_rule not in (PARTIAL_RESIDUAL, LITERAL):
            raise ValueError(f"unknown update rule {self.update_rule!r}")
        if not self.mse_tol > 0:
            raise ValueError("mse_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True)
class VfModelFit:
    config: VfConfig
    armax: ArmaxFit
    gjr: GjrFit
    gam: AdditiveFit
    y: np.ndarray
    armax_fitted: np.ndarray
    gjr_fitted: np.ndarray
    gam_fitted: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    mse_trace: np.ndarray
    converged: bool
    iterations: int
    stop_reason: str
    rejected: tuple = ()

    @property
    def model_kind(self) -> str:
        return self.config.model_kind

    @property
    def mse(self) -> float:
        return float(self.mse_trace[-1])


class _State:
    """Current stage fits and their contributions to the composite fit."""

    def __init__(self, y: np.ndarray, m: int):
        n = y.shape[0]
        self.y = y
        self.armax: ArmaxFit | None = None
        self.gjr: GjrFit | None = None
        self.gam = AdditiveFit.zero(n, m)
        self.a = np.zeros(n)
        self.c = 0.0
        self.g = np.zeros(n)

    def sse(self, a=None, c=None, g=None) -> float:
        a = self.a if a is None else a
        c = self.c if c is None else c
        g = self.g if g is None else g
        e = self.y - a - c - g
        return float(e @ e)


def _stage(name: str, it: int, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - rewrapped with stage identity
        raise StageError(name, it, exc) from exc


def _partial_iteration(st: _State, ds: VaryingFrequencyDataset, cfg: VfConfig, it: int,
                       rejected: list) -> None:
    order = ("gam", "armax", "gjr") if cfg.model_kind == VF_ARMA else ("armax", "gjr", "gam")
    for name in order:
        before = st.sse()
        slack = _SSE_SLACK * max(before, 1.0)
        if name == "armax":
            target = st.y - st.g - st.c
            fit = _stage("ARMAX", it, fit_armax, target, ds.v, cfg.armax_spec)
            if st.armax is None or fit.sse <= before + slack:
                st.armax, st.a = fit, fit.fitted
            else:
                rejected.append((it, name))
        elif name == "gjr":
            target = st.y - st.g - st.a
            fit = _stage("GJR", it, fit_gjr, target, cfg.leverage)
            if st.gjr is None or st.sse(c=fit.mean_const) <= before + slack:
                st.gjr, st.c = fit, fit.mean_const
            else:
                rejected.append((it, name))
        else:
            target = st.y - st.a - st.c
            fit = _stage("GAM", it, backfit_additive, ds.x_lag, target, cfg.spline_cfg)
            if st.sse(g=fit.fitted) <= before + slack:
                st.gam, st.g = fit, fit.fitted
            else:
                rejected.append((it, name))


def _literal_iteration(st: _State, ds: VaryingFrequencyDataset, cfg: VfConfig, it: int,
                       response: np.ndarray) -> np.ndarray:
    """One pass of the text-literal updates; returns the next response."""
    y = st.y
    if cfg.model_kind == VF_GARCH:
        armax = _stage("ARMAX", it, fit_armax, response, ds.v, cfg.armax_spec)
        gjr = _stage("GJR", it, fit_gjr, armax.residuals, cfg.leverage)
        gam = _stage("GAM", it, backfit_additive, ds.x_lag, gjr.resid, cfg.spline_cfg)
        st.armax, st.gjr, st.gam = armax, gjr, gam
        st.a, st.c, st.g = y - armax.residuals, gjr.mean_const, gam.fitted
        return y - gam.residuals
    gam = _stage("GAM", it, backfit_additive, ds.x_lag, response, cfg.spline_cfg)
    updated = y - gam.residuals
    armax = _stage("ARMAX", it, fit_armax, updated, ds.v, cfg.armax_spec)
    gjr = _stage("GJR", it, fit_gjr, armax.residuals, cfg.leverage)
    st.armax, st.gjr, st.gam = armax, gjr, gam
    st.a, st.c, st.g = y - armax.residuals, gjr.mean_const, gam.fitted
    return y - gjr.resid


def _fit(ds: VaryingFrequencyDataset, cfg: VfConfig) -> VfModelFit:
    if ds.n < MIN_LENGTH:
        raise ValueError(f"dataset length {ds.n} below the minimum of {MIN_LENGTH}")
    y = np.asarray(ds.y, dtype=float)
    n = y.shape[0]
    st = _State(y, ds.m)
    trace: list[float] = []
    rejected: list = []
    response = y.copy()
    increases = 0
    converged = False
    stop = "max_iter"
    for it in range(1, cfg.max_iter + 1):
        if cfg.update_rule == PARTIAL_RESIDUAL:
            _partial_iteration(st, ds, cfg, it, rejected)
        else:
            response = _literal_iteration(st, ds, cfg, it, response)
        mse = st.sse() / n
        if not np.isfinite(mse):
            stop = "non-finite"
            trace.append(mse)
            break
        trace.append(mse)
        logger.debug("%s iteration %d: mse=%.6g", cfg.model_kind, it, mse)
        if it >= 2:
            delta = trace[-1] - trace[-2]
            increases = increases + 1 if delta > 0 else 0
            if abs(delta) < cfg.mse_tol:
                converged = True
                stop = "converged"
                break
            if increases >= INCREASE_LIMIT:
                stop = "diverging"
                break

    fitted = st.a + st.c + st.g
    return VfModelFit(
        config=cfg,
        armax=st.armax,
        gjr=st.gjr,
        gam=st.gam,
        y=y,
        armax_fitted=st.a.copy(),
        gjr_fitted=np.full(n, st.c),
        gam_fitted=st.g.copy(),
        fitted=fitted,
        residuals=y - fitted,
        mse_trace=np.array(trace),
        converged=converged,
        iterations=len(trace),
        stop_reason=stop,
        rejected=tuple(rejected),
    )


def fit_vf_garch(ds: VaryingFrequencyDataset, cfg: VfConfig | None = None) -> VfModelFit:
    """VF-GARCH: ARMAX on the response, GJR on its residuals, GAM on the GJR residuals.

    Returns the fit with its MSE trace; ``converged`` is False when the
    iteration cap was reached or the MSE rose for three iterations running.
    """
    cfg = replace(cfg or VfConfig(), model_kind=VF_GARCH)
    return _fit(ds, cfg)


def fit_vf_arma(ds: VaryingFrequencyDataset, cfg: VfConfig | None = None) -> VfModelFit:
    """VF-ARMA: GAM on the lagged panel first, then ARMAX, then GJR."""
    cfg = replace(cfg or VfConfig(), model_kind=VF_ARMA)
    return _fit(ds, cfg)


def fit_vf(ds: VaryingFrequencyDataset, cfg: VfConfig) -> VfModelFit:
    return _fit(ds, cfg)


def forecast_vf(fit: VfModelFit, ds_test: VaryingFrequencyDataset, h: int) -> np.ndarray:
    """Sum of stage forecasts for the ``h`` periods following the sample.

    The ARMAX recursion takes future ``v`` from ``ds_test``; the GAM is
    evaluated on each test row's ``x_lag`` (the previous period's panel,
    known one step ahead); the GJR stage adds its constant mean.
    """
    if h < 1:
        raise ValueError("h must be at least 1")
    if ds_test.n < h:
        raise ValueError(f"test data has {ds_test.n} rows, need {h} for the covariates")
    arma_part = forecast_armax(fit.armax, h, ds_test.v[:h])
    gam_part = evaluate_additive(fit.gam, ds_test.x_lag[:h])
    return arma_part + fit.gjr_fitted[0] + gam_part
