"""Command-line interface: ``vfvol {simulate,fit,forecast,experiment,fixture}``.

Exit codes: 0 success, 1 runtime failure (stage error, bad data),
2 invalid arguments or configuration, 3 experiment finished with failed
replicates (report and replay log are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .arma import ArmaxSpec
from .benchmarks import AGGREGATIONS, GARCH, GJR, fit_benchmark, forecast_benchmark
from .dataset import DataError, SplitSpec, load_any, split, write_dataset_csv
from .fixture import FIXTURE_SEED, write_fixture
from .metrics import (BENCH_GARCH, BENCH_GJR, MODELS, default_workers, rmse, run_experiment)
from .modelfile import load_model, save_model
from .simgen import (GRID_DEPENDENCE, GRID_FORMS, ScenarioConfig, ScenarioError, generate,
                     parse_scenario_id, replicate_seed, scenario_grid)
from .smooth import SplineConfig
from .vfmodels import (LITERAL, PARTIAL_RESIDUAL, VF_ARMA, VF_GARCH, StageError, VfConfig, fit_vf,
                       forecast_vf)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3

# key -> (parser, destination); destinations prefixed "spline." / "armax." go
# into the nested configs
CONFIG_KEYS = {
    "model": (str, "model"),
    "mse_tol": (float, "mse_tol"),
    "max_iter": (int, "max_iter"),
    "update_rule": (str, "update_rule"),
    "leverage": (lambda s: _parse_bool(s), "leverage"),
    "p": (int, "armax.p"),
    "q": (int, "armax.q"),
    "exog_lags": (int, "armax.exog_lags"),
    "basis_size": (int, "spline.basis_size"),
    "lam": (lambda s: s if s == "auto" else float(s), "spline.lam"),
    "holdout": (int, "holdout"),
    "aggregate": (str, "aggregate"),
}


class UsageError(Exception):
    pass


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment.  Unknown keys are errors."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r} "
                                 f"(known: {', '.join(sorted(CONFIG_KEYS))})")
            conv, dest = CONFIG_KEYS[key]
            try:
                out[dest] = conv(value)
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


@dataclass
class RunConfig:
    """Resolved settings for one ``fit`` invocation (file values, then flags)."""

    model: str = VF_ARMA
    data: Path | None = None
    out: Path | None = None
    holdout: int = 0
    aggregate: str = "mean"
    mse_tol: float = 0.005
    max_iter: int = 50
    update_rule: str = PARTIAL_RESIDUAL
    leverage: bool = True
    armax: dict = field(default_factory=dict)
    spline: dict = field(default_factory=dict)

    def apply(self, values: dict) -> None:
        for dest, value in values.items():
            if value is None:
                continue
            if dest.startswith("armax."):
                self.armax[dest.split(".", 1)[1]] = value
            elif dest.startswith("spline."):
                self.spline[dest.split(".", 1)[1]] = value
            else:
                setattr(self, dest, value)

    def validate(self) -> None:
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.data is None or not self.data.is_file():
            raise UsageError(f"data file not found: {self.data}")
        if self.out is not None and not self.out.parent.exists():
            raise UsageError(f"output directory does not exist: {self.out.parent}")
        if self.holdout < 0:
            raise UsageError("holdout must be nonnegative")
        if self.aggregate not in AGGREGATIONS:
            raise UsageError(f"aggregate must be one of {AGGREGATIONS}")

    def vf_config(self) -> VfConfig:
        try:
            return VfConfig(
                model_kind=self.model if self.model in (VF_ARMA, VF_GARCH) else VF_ARMA,
                armax_spec=ArmaxSpec(**self.armax),
                spline_cfg=SplineConfig(**self.spline),
                mse_tol=self.mse_tol,
                max_iter=self.max_iter,
                update_rule=self.update_rule,
                leverage=self.leverage,
            )
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid model configuration: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    out = Path(args.out)
    try:
        scenario = ScenarioConfig(T=args.T, mu_annual=args.mu, sigma_annual=args.sigma,
                                  psi_weight=args.psi, dependence=args.dep, form=args.form,
                                  seed=args.seed)
    except ScenarioError as exc:
        for problem in str(exc).split("; "):
            print(f"error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    if args.replicates < 1:
        print("error: --replicates must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k in range(args.replicates):
        seed = args.seed if args.replicates == 1 else replicate_seed(args.seed, 0, k)
        data = generate(scenario.with_seed(seed))
        name = f"{scenario.scenario_id}_r{k:03d}.csv"
        write_dataset_csv(data.dataset, out / name)
        files.append({"file": name, "seed": seed, "seed_used": data.seed_used,
                      "regenerations": data.regenerations, "rows": data.dataset.n})
        print(f"wrote {out / name} ({data.dataset.n} rows, seed {data.seed_used})")
    _write_json(out / "manifest.json", {
        "command": "simulate",
        "version": __version__,
        "scenario": scenario.to_dict(),
        "scenario_id": scenario.scenario_id,
        "replicates": args.replicates,
        "files": files,
    })
    return EXIT_OK


# ---------------------------------------------------------------- fit

def _fit_model(run: RunConfig, train):
    if run.model in (BENCH_GJR, BENCH_GARCH):
        kind = GJR if run.model == BENCH_GJR else GARCH
        return fit_benchmark(train, kind, run.aggregate, ArmaxSpec(**run.armax))
    return fit_vf(train, run.vf_config())


def cmd_fit(args) -> int:
    run = RunConfig()
    if args.config:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        run.apply(read_config(args.config))
    run.apply({
        "model": args.model, "holdout": args.holdout, "aggregate": args.aggregate,
        "mse_tol": args.mse_tol, "max_iter": args.max_iter, "update_rule": args.update_rule,
        "armax.p": args.p, "armax.q": args.q,
    })
    run.data = Path(args.data)
    run.out = Path(args.out) if args.out else None
    run.validate()
    if run.model in (VF_ARMA, VF_GARCH):
        run.vf_config()

    ds = load_any(run.data)
    if run.holdout:
        if run.holdout >= ds.n:
            raise UsageError(f"holdout {run.holdout} leaves no training rows (n={ds.n})")
        train, _ = split(ds, SplitSpec(ds.n - run.holdout, run.holdout))
    else:
        train = ds
    fit = _fit_model(run, train)

    print(f"model: {run.model}")
    print(f"training rows: {train.n}")
    if run.model in (VF_ARMA, VF_GARCH):
        for i, mse in enumerate(fit.mse_trace, start=1):
            print(f"iteration {i}: mse={mse:.10g}")
        print(f"converged: {str(fit.converged).lower()} ({fit.stop_reason})")
    else:
        print("converged: true")
    print(f"in-sample rmse: {rmse(train.y, fit.fitted):.10g}")
    if run.out is not None:
        meta = {"data": str(run.data), "train_rows": train.n, "holdout": run.holdout}
        save_model(fit, run.out, meta)
        print(f"wrote {run.out}")
    return EXIT_OK


# ---------------------------------------------------------------- forecast

def cmd_forecast(args) -> int:
    if not Path(args.model).is_file():
        raise UsageError(f"model file not found: {args.model}")
    if not Path(args.data).is_file():
        raise UsageError(f"data file not found: {args.data}")
    if args.h < 1:
        raise UsageError("h must be at least 1")
    fit, meta = load_model(args.model)
    ds = load_any(args.data)
    start = int(meta.get("train_rows", fit.y.shape[0]))
    if ds.n < start + args.h:
        raise DataError(
            f"forecasting {args.h} steps needs covariate rows {start + 1}..{start + args.h}, "
            f"data has {ds.n}"
        )
    test = ds.subset(start, start + args.h)
    if hasattr(fit, "gam"):
        fc = forecast_vf(fit, test, args.h)
    else:
        fc = forecast_benchmark(fit, test, args.h)
    rows = [(k + 1, repr(float(v))) for k, v in enumerate(fc)]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "point_forecast"])
            w.writerows(rows)
        print(f"wrote {args.out}")
    else:
        print("step,point_forecast")
        for step, val in rows:
            print(f"{step},{val}")
    return EXIT_OK


# ---------------------------------------------------------------- experiment

def _scenarios(args) -> list[ScenarioConfig]:
    if args.grid == "full":
        return scenario_grid()
    ids = list(args.scenario or [])
    if args.scenario_file:
        with open(args.scenario_file) as fh:
            ids += [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not ids:
        raise UsageError("give --grid full, --scenario ID or --scenario-file")
    try:
        return [parse_scenario_id(s) for s in ids]
    except ScenarioError as exc:
        raise UsageError(str(exc)) from exc


def cmd_experiment(args) -> int:
    scenarios = _scenarios(args)
    models = tuple(args.models.split(",")) if args.models else tuple(MODELS)
    for m in models:
        if m not in MODELS:
            raise UsageError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
    if args.replicates < 1:
        raise UsageError("--replicates must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vf_cfg = VfConfig(update_rule=args.update_rule, mse_tol=args.mse_tol, max_iter=args.max_iter)
    workers = args.workers if args.workers is not None else default_workers()
    report = run_experiment(scenarios, models, args.replicates, args.master_seed, workers,
                            vf_cfg, args.aggregate)
    report.write_csv(out / "report.csv")
    report.write_replay(out / "replay.jsonl")
    with open(out / "report.txt", "w") as fh:
        fh.write(report.table() + "\n")
    _write_json(out / "manifest.json", {
        "command": "experiment",
        "version": __version__,
        "master_seed": args.master_seed,
        "replicates": args.replicates,
        "models": list(models),
        "aggregate": args.aggregate,
        "update_rule": args.update_rule,
        "mse_tol": args.mse_tol,
        "max_iter": args.max_iter,
        "scenarios": [s.scenario_id for s in scenarios],
    })
    print(report.table())
    failures = report.failures
    if failures:
        print(f"{len(failures)} replicate fits failed; see {out / 'replay.jsonl'}",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------- fixture

def cmd_fixture(args) -> int:
    write_fixture(args.out, args.seed)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vfvol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one scenario and write dataset CSVs")
    s.add_argument("--T", type=int, default=255, help="number of daily points")
    s.add_argument("--mu", type=float, default=0.20, help="annual drift")
    s.add_argument("--sigma", type=float, default=0.30, help="annual volatility")
    s.add_argument("--psi", type=float, default=0.50, help="weight of the noise term")
    s.add_argument("--form", default="linear", help=f"one of {', '.join(GRID_FORMS)}")
    s.add_argument("--dep", default="iid", help=f"one of {', '.join(GRID_DEPENDENCE)}")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--out", default=".", help="output directory")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a model to a daily or dataset CSV")
    f.add_argument("--model", choices=MODELS)
    f.add_argument("--data", required=True)
    f.add_argument("--config", help="key = value configuration file")
    f.add_argument("--out", help="model file to write (JSON)")
    f.add_argument("--holdout", type=int, help="rows kept out of the fit at the end")
    f.add_argument("--aggregate", choices=AGGREGATIONS)
    f.add_argument("--mse-tol", type=float)
    f.add_argument("--max-iter", type=int)
    f.add_argument("--update-rule", choices=(PARTIAL_RESIDUAL, LITERAL))
    f.add_argument("--p", type=int)
    f.add_argument("--q", type=int)
    f.set_defaults(func=cmd_fit)

    fc = sub.add_parser("forecast", help="forecast from a saved model")
    fc.add_argument("--model", required=True, help="model file written by fit")
    fc.add_argument("--data", required=True, help="data including the rows after training")
    fc.add_argument("--h", type=int, default=4)
    fc.add_argument("--out", help="CSV to write (default: stdout)")
    fc.set_defaults(func=cmd_forecast)

    e = sub.add_parser("experiment", help="Monte Carlo comparison over scenarios")
    e.add_argument("--grid", choices=("full",))
    e.add_argument("--scenario", action="append", help="scenario id (repeatable)")
    e.add_argument("--scenario-file")
    e.add_argument("--replicates", type=int, default=100)
    e.add_argument("--master-seed", type=int, default=0)
    e.add_argument("--workers", type=int, help="default: $VFVOL_WORKERS or 1")
    e.add_argument("--models", help=f"comma list from {','.join(MODELS)}")
    e.add_argument("--aggregate", choices=AGGREGATIONS, default="mean")
    e.add_argument("--update-rule", choices=(PARTIAL_RESIDUAL, LITERAL), default=PARTIAL_RESIDUAL)
    e.add_argument("--mse-tol", type=float, default=0.005)
    e.add_argument("--max-iter", type=int, default=50)
    e.add_argument("--out", default="experiment")
    e.set_defaults(func=cmd_experiment)

    x = sub.add_parser("fixture", help="write the synthetic daily fixture CSV")
    x.add_argument("--out", required=True)
    x.add_argument("--seed", type=int, default=FIXTURE_SEED)
    x.set_defaults(func=cmd_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc.stage} stage failed at iteration {exc.iteration}: {exc.cause}",
              file=sys.stderr)
        return EXIT_FAILURE
    except (DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
