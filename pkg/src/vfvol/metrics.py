"""Accuracy metrics and the Monte Carlo experiment runner.

Each replicate simulates one scenario, holds out the last ``HOLDOUT``
low-frequency observations, fits every requested model on the rest and
records in-sample RMSE/MAD and the out-of-sample MdAPE of a ``HOLDOUT``-step
forecast.  Replicates run in worker processes; results are collected in
submission order, so the report does not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .benchmarks import GARCH, GJR, fit_benchmark, forecast_benchmark
from .dataset import SplitSpec, split
from .simgen import ScenarioConfig, generate, replicate_seed
from .vfmodels import VF_ARMA, VF_GARCH, VfConfig, fit_vf, forecast_vf

logger = logging.getLogger(__name__)

HOLDOUT = 4
BENCH_GJR = "bench-gjr"
BENCH_GARCH = "bench-garch"
MODELS = (VF_ARMA, VF_GARCH, BENCH_GJR, BENCH_GARCH)
REPORT_COLUMNS = ("scenario_id", "model", "mean_rmse", "mean_mad", "mean_mdape", "diverged",
                  "replicates")

CONVERGED = "converged"
DIVERGED = "diverged"
ERROR = "error"


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size == 0:
        raise ValueError("empty input")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mad(y, yhat) -> float:
    """Mean absolute deviation of ``y`` from ``yhat``."""
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def mdape_with_count(y, yhat) -> tuple[float, int]:
    """MdAPE in percent and the number of points dropped because ``y == 0``."""
    y, yhat = _pair(y, yhat)
    keep = y != 0
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("all observations are zero; MdAPE undefined")
    return float(np.median(np.abs((y[keep] - yhat[keep]) / y[keep])) * 100.0), excluded


def mdape(y, yhat) -> float:
    return mdape_with_count(y, yhat)[0]


@dataclass(frozen=True)
class ReplicateResult:
    scenario_id: str
    replicate: int
    seed: int
    model: str
    status: str
    rmse: float = math.nan
    mad: float = math.nan
    mdape: float = math.nan
    iterations: int = 0
    message: str = ""

    def to_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ReportRow:
    scenario_id: str
    model: str
    mean_rmse: float
    mean_mad: float
    mean_mdape: float
    diverged: int
    replicates: int

    @property
    def converged(self) -> int:
        return self.replicates - self.diverged


def _mean(values: Sequence[float]) -> float:
    # fsum is exact, so the mean does not depend on replicate order
    vals = [v for v in values if math.isfinite(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


@dataclass
class ExperimentReport:
    rows: list[ReportRow]
    results: list[ReplicateResult]
    runtime: float = 0.0
    settings: dict = field(default_factory=dict)

    @classmethod
    def from_results(cls, results: list[ReplicateResult], runtime: float = 0.0,
                     settings: dict | None = None) -> "ExperimentReport":
        groups: dict[tuple[str, str], list[ReplicateResult]] = {}
        for r in results:
            groups.setdefault((r.scenario_id, r.model), []).append(r)
        rows = []
        for (sid, model), rs in groups.items():
            ok = [r for r in rs if r.status == CONVERGED]
            rows.append(ReportRow(
                scenario_id=sid,
                model=model,
                mean_rmse=_mean([r.rmse for r in ok]),
                mean_mad=_mean([r.mad for r in ok]),
                mean_mdape=_mean([r.mdape for r in ok]),
                diverged=len(rs) - len(ok),
                replicates=len(rs),
            ))
        return cls(rows, results, runtime, dict(settings or {}))

    def row(self, scenario_id: str, model: str) -> ReportRow:
        for r in self.rows:
            if r.scenario_id == scenario_id and r.model == model:
                return r
        raise KeyError((scenario_id, model))

    @property
    def failures(self) -> list[ReplicateResult]:
        return [r for r in self.results if r.status == ERROR]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([r.scenario_id, r.model, repr(r.mean_rmse), repr(r.mean_mad),
                            repr(r.mean_mdape), r.diverged, r.replicates])

    def write_replay(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for r in self.results:
                fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")

    def table(self) -> str:
        head = f"{'scenario':<44} {'model':<12} {'RMSE':>10} {'MAD':>10} {'MdAPE%':>9} {'div':>5} {'reps':>5}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.scenario_id:<44} {r.model:<12} {r.mean_rmse:>10.5f} {r.mean_mad:>10.5f} "
                f"{r.mean_mdape:>9.2f} {r.diverged:>5d} {r.replicates:>5d}"
            )
        lines.append(f"runtime {self.runtime:.1f}s")
        return "\n".join(lines)


def read_report_csv(path: str | Path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {rd.fieldnames}")
        return [
            ReportRow(r["scenario_id"], r["model"], float(r["mean_rmse"]), float(r["mean_mad"]),
                      float(r["mean_mdape"]), int(r["diverged"]), int(r["replicates"]))
            for r in rd
        ]


def scenario_key(scenario: ScenarioConfig) -> int:
    """Stable integer key of a scenario, independent of list position."""
    return zlib.crc32(scenario.scenario_id.encode())


def evaluate_models(ds, models: Sequence[str], vf_config: VfConfig | None = None,
                    aggregate: str = "mean") -> dict[str, tuple]:
    """Fit ``models`` on all but the last ``HOLDOUT`` rows of ``ds``.

    Returns ``{model: (status, rmse, mad, mdape, iterations, message)}``.
    Failures are caught per model so one bad stage does not hide the others.
    """
    train, test = split(ds, SplitSpec(ds.n - HOLDOUT, HOLDOUT))
    out = {}
    for model in models:
        try:
            if model in (VF_ARMA, VF_GARCH):
                cfg = replace(vf_config or VfConfig(), model_kind=model)
                fit = fit_vf(train, cfg)
                fc = forecast_vf(fit, test, HOLDOUT)
                status = CONVERGED if fit.converged else DIVERGED
                iters, msg = fit.iterations, fit.stop_reason
            elif model in (BENCH_GJR, BENCH_GARCH):
                kind = GJR if model == BENCH_GJR else GARCH
                fit = fit_benchmark(train, kind, aggregate)
                fc = forecast_benchmark(fit, test, HOLDOUT)
                status, iters, msg = CONVERGED, 1, ""
            else:
                raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
            mdp, excluded = mdape_with_count(test.y, fc)
            if excluded:
                msg = f"{msg}; {excluded} zero test values excluded".lstrip("; ")
            out[model] = (status, rmse(train.y, fit.fitted), mad(train.y, fit.fitted), mdp,
                          iters, msg)
        except Exception as exc:  # noqa: BLE001 - recorded for replay, never aborts the run
            out[model] = (ERROR, math.nan, math.nan, math.nan, 0, f"{type(exc).__name__}: {exc}")
    return out


def run_replicate(scenario: ScenarioConfig, replicate: int, seed: int, models: Sequence[str],
                  vf_config: VfConfig | None = None, aggregate: str = "mean"
                  ) -> list[ReplicateResult]:
    """Simulate and evaluate one replicate; exceptions become ``error`` records."""
    sid = scenario.scenario_id
    try:
        data = generate(scenario.with_seed(seed))
    except Exception as exc:  # noqa: BLE001
        msg = f"generate: {type(exc).__name__}: {exc}"
        return [ReplicateResult(sid, replicate, seed, m, ERROR, message=msg) for m in models]
    res = evaluate_models(data.dataset, models, vf_config, aggregate)
    out = []
    for m in models:
        status, r, a, p, it, msg = res[m]
        if status == ERROR:
            logger.warning("%s replicate %d (seed %d) %s failed: %s", sid, replicate, seed, m, msg)
        out.append(ReplicateResult(sid, replicate, seed, m, status, r, a, p, it, msg))
    return out


def _task(args):
    return run_replicate(*args)


def default_workers() -> int:
    raw = os.environ.get("VFVOL_WORKERS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        logger.warning("ignoring non-integer VFVOL_WORKERS=%r", raw)
        return 1


def run_experiment(
    scenarios: Iterable[ScenarioConfig],
    models: Sequence[str] = MODELS,
    replicates: int = 100,
    master_seed: int = 0,
    workers: int | None = None,
    vf_config: VfConfig | None = None,
    aggregate: str = "mean",
) -> ExperimentReport:
    """Monte Carlo study over ``scenarios``.

    Replicate ``k`` of a scenario uses the seed derived from
    ``(master_seed, scenario_key(scenario), k)``.  Means in the report are
    taken over converged replicates only; diverged and failed replicates are
    counted in ``diverged``.
    """
    if replicates < 1:
        raise ValueError("replicates must be at least 1")
    models = tuple(models)
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; choose from {MODELS}")
    scenarios = list(scenarios)
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = []
    for sc in scenarios:
        key = scenario_key(sc)
        for k in range(replicates):
            tasks.append((sc, k, replicate_seed(master_seed, key, k), models, vf_config,
                          aggregate))
    t0 = time.perf_counter()
    results: list[ReplicateResult] = []
    if workers == 1:
        for t in tasks:
            results.extend(_task(t))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for chunk in ex.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))):
                results.extend(chunk)
    runtime = time.perf_counter() - t0
    settings = {
        "models": list(models),
        "replicates": replicates,
        "master_seed": master_seed,
        "aggregate": aggregate,
        "scenarios": [s.scenario_id for s in scenarios],
    }
    return ExperimentReport.from_results(results, runtime, settings)
