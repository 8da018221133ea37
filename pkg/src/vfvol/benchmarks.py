"""GARCH and GJR benchmarks that aggregate the high-frequency panel.

The panel row for each period is collapsed to one low-frequency covariate
(within-period mean by default) and enters the ARMAX mean equation next to
``v``.  The ARMAX residuals are then modelled by GARCH(1,1) or GJR-GARCH(1,1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arma import ArmaxFit, ArmaxSpec, fit_armax, forecast_armax
from .dataset import VaryingFrequencyDataset
from .garch import GjrFit, fit_gjr

GARCH = "garch"
GJR = "gjr"
AGGREGATIONS = ("mean", "last", "drop")


@dataclass(frozen=True)
class BenchmarkFit:
    kind: str
    aggregate: str
    armax: ArmaxFit
    gjr: GjrFit
    y: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray

    converged = True


def aggregate_panel(x_lag: np.ndarray, how: str) -> np.ndarray | None:
    if how == "mean":
        return x_lag.mean(axis=1)
    if how == "last":
        return x_lag[:, -1].copy()
    if how == "drop":
        return None
    raise ValueError(f"aggregate must be one of {AGGREGATIONS}, got {how!r}")


def _exog(ds: VaryingFrequencyDataset, how: str, rows: int | None = None) -> np.ndarray:
    x_lag = ds.x_lag if rows is None else ds.x_lag[:rows]
    v = ds.v if rows is None else ds.v[:rows]
    agg = aggregate_panel(x_lag, how)
    return v[:, None] if agg is None else np.column_stack([v, agg])


def fit_benchmark(
    ds: VaryingFrequencyDataset,
    kind: str = GJR,
    aggregate: str = "mean",
    armax_spec: ArmaxSpec | None = None,
) -> BenchmarkFit:
    if kind not in (GARCH, GJR):
        raise ValueError(f"benchmark kind must be {GARCH!r} or {GJR!r}")
    y = np.asarray(ds.y, dtype=float)
    armax = fit_armax(y, _exog(ds, aggregate), armax_spec or ArmaxSpec())
    gjr = fit_gjr(armax.residuals, leverage=(kind == GJR))
    fitted = armax.fitted + gjr.mean_const
    return BenchmarkFit(kind, aggregate, armax, gjr, y, fitted, y - fitted)


def forecast_benchmark(fit: BenchmarkFit, ds_test: VaryingFrequencyDataset, h: int) -> np.ndarray:
    if ds_test.n < h:
        raise ValueError(f"test data has {ds_test.n} rows, need {h}")
    return forecast_armax(fit.armax, h, _exog(ds_test, fit.aggregate, h)) + fit.gjr.mean_const
