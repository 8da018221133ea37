"""Versioned JSON model files for fitted VF and benchmark models.

Arrays are stored as lists; ``json`` writes floats with ``repr``, so a
save/load round trip reproduces every value bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .arma import ArmaxFit, ArmaxSpec
from .benchmarks import BenchmarkFit
from .garch import GjrFit, GjrParams
from .smooth import AdditiveFit, SmoothFunction, SplineConfig
from .vfmodels import VfConfig, VfModelFit

FORMAT = "vfvol-model"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    pass


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _armax_to_dict(f: ArmaxFit) -> dict:
    return {
        "spec": asdict(f.spec),
        "phi": _arr(f.phi),
        "theta": _arr(f.theta),
        "psi": _arr(f.psi),
        "intercept": f.intercept,
        "fitted": _arr(f.fitted),
        "residuals": _arr(f.residuals),
        "sse": f.sse,
        "y": _arr(f.y),
        "exog": _arr(f.exog),
        "n_exog_cols": int(f.exog.shape[1]),
        "converged": f.converged,
        "grad_norm": f.grad_norm,
        "near_unit_root": f.near_unit_root,
    }


def _armax_from_dict(d: dict) -> ArmaxFit:
    n = len(d["y"])
    exog = np.asarray(d["exog"], dtype=float).reshape(n, int(d["n_exog_cols"]))
    return ArmaxFit(
        spec=ArmaxSpec(**d["spec"]),
        phi=np.asarray(d["phi"], float),
        theta=np.asarray(d["theta"], float),
        psi=np.asarray(d["psi"], float),
        intercept=float(d["intercept"]),
        fitted=np.asarray(d["fitted"], float),
        residuals=np.asarray(d["residuals"], float),
        sse=float(d["sse"]),
        y=np.asarray(d["y"], float),
        exog=exog,
        converged=bool(d["converged"]),
        grad_norm=float(d["grad_norm"]),
        near_unit_root=bool(d["near_unit_root"]),
    )


def _gjr_to_dict(f: GjrFit) -> dict:
    return {
        "params": f.params.as_dict(),
        "mean_const": f.mean_const,
        "sigma2": _arr(f.sigma2),
        "loglik": f.loglik,
        "resid": _arr(f.resid),
        "leverage": f.leverage,
        "converged": f.converged,
        "boundary": list(f.boundary),
        "sigma2_init": f.sigma2_init,
    }


def _gjr_from_dict(d: dict) -> GjrFit:
    s2 = np.asarray(d["sigma2"], float)
    resid = np.asarray(d["resid"], float)
    p = d["params"]
    return GjrFit(
        params=GjrParams(float(p["omega"]), float(p["alpha"]), float(p["gamma"]), float(p["beta"])),
        mean_const=float(d["mean_const"]),
        sigma2=s2,
        std_resid=resid / np.sqrt(s2),
        loglik=float(d["loglik"]),
        resid=resid,
        leverage=bool(d["leverage"]),
        converged=bool(d["converged"]),
        boundary=tuple(d["boundary"]),
        sigma2_init=float(d["sigma2_init"]),
    )


def _gam_to_dict(f: AdditiveFit) -> dict:
    return {
        "s0": f.s0,
        "components": [c.to_dict() for c in f.components],
        "fitted": _arr(f.fitted),
        "residuals": _arr(f.residuals),
        "rss_trace": _arr(f.rss_trace),
        "converged": f.converged,
        "lam": f.lam,
        "edf": f.edf,
        "component_fitted": _arr(f.component_fitted),
    }


def _gam_from_dict(d: dict) -> AdditiveFit:
    fitted = np.asarray(d["fitted"], float)
    comps = tuple(SmoothFunction.from_dict(c) for c in d["components"])
    return AdditiveFit(
        s0=float(d["s0"]),
        components=comps,
        fitted=fitted,
        residuals=np.asarray(d["residuals"], float),
        rss_trace=np.asarray(d["rss_trace"], float),
        converged=bool(d["converged"]),
        lam=float(d["lam"]),
        edf=float(d["edf"]),
        component_fitted=np.asarray(d["component_fitted"], float).reshape(fitted.size, len(comps)),
    )


def config_to_dict(cfg: VfConfig) -> dict:
    out = asdict(cfg)
    out["spline_cfg"]["lam_grid"] = list(cfg.spline_cfg.lam_grid)
    return out


def config_from_dict(d: dict) -> VfConfig:
    d = dict(d)
    spline = dict(d.pop("spline_cfg"))
    spline["lam_grid"] = tuple(spline["lam_grid"])
    return VfConfig(armax_spec=ArmaxSpec(**d.pop("armax_spec")),
                    spline_cfg=SplineConfig(**spline), **d)


def fit_to_dict(fit, meta: dict | None = None) -> dict:
    header = {"format": FORMAT, "version": FORMAT_VERSION, "package_version": __version__,
              "meta": dict(meta or {})}
    if isinstance(fit, VfModelFit):
        body = {
            "model": fit.config.model_kind,
            "config": config_to_dict(fit.config),
            "armax": _armax_to_dict(fit.armax),
            "gjr": _gjr_to_dict(fit.gjr),
            "gam": _gam_to_dict(fit.gam),
            "y": _arr(fit.y),
            "armax_fitted": _arr(fit.armax_fitted),
            "gjr_fitted": _arr(fit.gjr_fitted),
            "gam_fitted": _arr(fit.gam_fitted),
            "mse_trace": _arr(fit.mse_trace),
            "converged": fit.converged,
            "iterations": fit.iterations,
            "stop_reason": fit.stop_reason,
            "rejected": [list(r) for r in fit.rejected],
        }
    elif isinstance(fit, BenchmarkFit):
        body = {
            "model": f"bench-{fit.kind}",
            "kind": fit.kind,
            "aggregate": fit.aggregate,
            "armax": _armax_to_dict(fit.armax),
            "gjr": _gjr_to_dict(fit.gjr),
            "y": _arr(fit.y),
        }
    else:
        raise TypeError(f"cannot serialize {type(fit).__name__}")
    return {**header, **body}


def fit_from_dict(d: dict):
    if d.get("format") != FORMAT:
        raise ModelFileError("not a vfvol model file")
    if d.get("version") != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model file version {d.get('version')}")
    armax = _armax_from_dict(d["armax"])
    gjr = _gjr_from_dict(d["gjr"])
    y = np.asarray(d["y"], float)
    if d["model"].startswith("bench-"):
        fitted = armax.fitted + gjr.mean_const
        return BenchmarkFit(d["kind"], d["aggregate"], armax, gjr, y, fitted, y - fitted)
    a = np.asarray(d["armax_fitted"], float)
    c = np.asarray(d["gjr_fitted"], float)
    g = np.asarray(d["gam_fitted"], float)
    fitted = a + c + g
    return VfModelFit(
        config=config_from_dict(d["config"]),
        armax=armax,
        gjr=gjr,
        gam=_gam_from_dict(d["gam"]),
        y=y,
        armax_fitted=a,
        gjr_fitted=c,
        gam_fitted=g,
        fitted=fitted,
        residuals=y - fitted,
        mse_trace=np.asarray(d["mse_trace"], float),
        converged=bool(d["converged"]),
        iterations=int(d["iterations"]),
        stop_reason=d["stop_reason"],
        rejected=tuple(tuple(r) for r in d["rejected"]),
    )


def save_model(fit, path: str | Path, meta: dict | None = None) -> None:
    doc = fit_to_dict(fit, meta)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path):
    """Returns ``(fit, meta)``."""
    with open(path) as fh:
        d = json.load(fh)
    return fit_from_dict(d), d.get("meta", {})
