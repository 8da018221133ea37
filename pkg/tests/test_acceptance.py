"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary (and to stdout under ``-s``).  Thresholds are applied as stated;
nothing here is tuned to make a criterion pass.
"""

import math
import time

import numpy as np
import pytest

from vfvol.benchmarks import fit_benchmark
from vfvol.cli import main
from vfvol.dataset import SplitSpec, build_dataset, split
from vfvol.fixture import FIXTURE_TEST, FIXTURE_TRAIN, load_fixture
from vfvol.garch import GjrParams, fit_gjr, simulate_gjr
from vfvol.metrics import BENCH_GARCH, BENCH_GJR, MODELS, default_workers, rmse, run_experiment
from vfvol.simgen import (
    LINEAR,
    ScenarioConfig,
    convert_frequency,
    generate,
    parse_scenario_id,
    scenario_grid,
)
from vfvol.smooth import backfit_additive, smooth_univariate
from vfvol.vfmodels import PARTIAL_RESIDUAL, VF_ARMA, VF_GARCH, VfConfig, fit_vf, fit_vf_arma

pytestmark = pytest.mark.slow

MASTER_SEED = 2024
REPLICATES = 100
MAIN_SCENARIO = "T255_mu0.20_sig0.30_psi0.50_iid_linear"
SCENARIOS = (
    MAIN_SCENARIO,
    "T255_mu0.20_sig0.30_psi0.50_ar1_linear",
    "T255_mu0.20_sig0.30_psi0.50_iid_exponential",
)
LONG_SCENARIO = "T1530_mu0.20_sig0.30_psi0.50_iid_linear"


def _verdict(log, number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    log[number] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def short_report():
    scenarios = [parse_scenario_id(s) for s in SCENARIOS]
    return run_experiment(scenarios, MODELS, REPLICATES, MASTER_SEED, default_workers(),
                          VfConfig(update_rule=PARTIAL_RESIDUAL))


def _best_benchmark(report, scenario, attr):
    return min(getattr(report.row(scenario, m), attr) for m in (BENCH_GJR, BENCH_GARCH))


def test_criterion_01_generator_moments(acceptance_log):
    t0 = time.perf_counter()
    cfg = ScenarioConfig(T=1530, psi_weight=0.0, form=LINEAR)
    incs = []
    for k in range(200):
        sim = generate(cfg.with_seed(k))
        incs.append(np.diff(np.log(np.r_[cfg.x0, sim.x])))
    incs = np.concatenate(incs)
    elapsed = time.perf_counter() - t0
    mu_ref, sd_ref = 7.9365e-4, 1.8898e-2
    assert np.allclose(convert_frequency(0.20, 0.30), (mu_ref, sd_ref), rtol=1e-4)
    n = incs.size
    mean, sd = incs.mean(), incs.std(ddof=1)
    se_mean, se_sd = sd / math.sqrt(n), sd / math.sqrt(2 * (n - 1))
    z_mean, z_sd = (mean - mu_ref) / se_mean, (sd - sd_ref) / se_sd
    ok = abs(z_mean) <= 3 and abs(z_sd) <= 3 and elapsed < 60
    _verdict(acceptance_log, 1, ok,
             f"mean={mean:.4e} (z={z_mean:+.2f}) sd={sd:.4e} (z={z_sd:+.2f}) in {elapsed:.1f}s")
    assert ok


def test_criterion_02_gjr_recovery(acceptance_log):
    truth = GjrParams(0.05, 0.05, 0.10, 0.85)
    t0 = time.perf_counter()
    hits, worst = 0, 0.0
    for seed in range(20):
        a = simulate_gjr(truth, 5000, np.random.default_rng(seed))
        est = fit_gjr(a).params
        err = max(abs(getattr(est, k) - getattr(truth, k)) for k in ("omega", "alpha", "gamma", "beta"))
        worst = max(worst, err)
        hits += err <= 0.05
    elapsed = time.perf_counter() - t0
    ok = hits == 20 and elapsed < 120
    _verdict(acceptance_log, 2, ok, f"{hits}/20 seeds within 0.05 (worst {worst:.4f}) in {elapsed:.1f}s")
    assert ok


def test_criterion_03_smoother_recovery(acceptance_log):
    rng = np.random.default_rng(42)
    x = rng.uniform(0, 1, 500)
    r = np.sin(2 * np.pi * x) + rng.normal(0, 0.1, 500)
    func, _, _ = smooth_univariate(x, r)
    grid = np.linspace(0.05, 0.95, 181)
    err = float(np.max(np.abs(func(grid) - np.sin(2 * np.pi * grid))))
    worst_centre = 0.0
    for seed in range(10):
        ds = generate(ScenarioConfig(seed=seed)).dataset
        fit = backfit_additive(ds.x_lag, ds.y)
        worst_centre = max(worst_centre, float(np.max(np.abs(fit.component_fitted.mean(axis=0)))))
    X = rng.uniform(-1, 1, (300, 3))
    fit = backfit_additive(X, np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + rng.normal(0, 0.1, 300))
    worst_centre = max(worst_centre, float(np.max(np.abs(fit.component_fitted.mean(axis=0)))))
    ok = err <= 0.15 and worst_centre <= 1e-8
    _verdict(acceptance_log, 3, ok, f"max interior error {err:.4f}, max component mean {worst_centre:.1e}")
    assert ok


def test_criterion_04_monotone_traces(acceptance_log):
    rng = np.random.default_rng(4)
    grid = scenario_grid()
    worst_rss, worst_mse = -np.inf, -np.inf
    for k in range(50):
        sc = grid[rng.integers(len(grid))].with_seed(int(rng.integers(2**31)))
        ds = generate(sc).dataset
        gam = backfit_additive(ds.x_lag, ds.y)
        rss = np.r_[np.var(ds.y), gam.rss_trace]
        worst_rss = max(worst_rss, float(np.max(np.diff(rss))))
        kind = VF_ARMA if k % 2 == 0 else VF_GARCH
        vf = fit_vf(ds, VfConfig(model_kind=kind, mse_tol=1e-12, max_iter=6))
        if vf.mse_trace.size > 1:
            worst_mse = max(worst_mse, float(np.max(np.diff(vf.mse_trace))))
    ok = worst_rss <= 1e-10 and worst_mse <= 1e-10
    _verdict(acceptance_log, 4, ok,
             f"largest rss step {worst_rss:+.2e}, largest mse step {worst_mse:+.2e} over 50 datasets")
    assert ok


def test_criterion_05_vf_arma_beats_benchmark(short_report, acceptance_log):
    row = short_report.row(MAIN_SCENARIO, VF_ARMA)
    b_rmse = _best_benchmark(short_report, MAIN_SCENARIO, "mean_rmse")
    b_mad = _best_benchmark(short_report, MAIN_SCENARIO, "mean_mad")
    ratio = row.mean_rmse / b_rmse
    ok = row.mean_rmse < b_rmse and row.mean_mad < b_mad and ratio <= 0.8
    _verdict(acceptance_log, 5, ok,
             f"RMSE {row.mean_rmse:.5f} vs {b_rmse:.5f} (ratio {ratio:.3f}, need <= 0.8), "
             f"MAD {row.mean_mad:.5f} vs {b_mad:.5f}")
    assert ok


def test_criterion_06_vf_garch_beats_benchmark(short_report, acceptance_log):
    row = short_report.row(MAIN_SCENARIO, VF_GARCH)
    b_rmse = _best_benchmark(short_report, MAIN_SCENARIO, "mean_rmse")
    ratio = row.mean_rmse / b_rmse
    ok = row.mean_rmse < b_rmse and ratio <= 0.9
    _verdict(acceptance_log, 6, ok,
             f"RMSE {row.mean_rmse:.5f} vs {b_rmse:.5f} (ratio {ratio:.3f}, need <= 0.9)")
    assert ok


def test_criterion_07_mdape_ordering(short_report, acceptance_log):
    held, parts = 0, []
    for sid in SCENARIOS:
        a = short_report.row(sid, VF_ARMA).mean_mdape
        g = short_report.row(sid, VF_GARCH).mean_mdape
        b = _best_benchmark(short_report, sid, "mean_mdape")
        held += a < g < b
        parts.append(f"{a:.1f}/{g:.1f}/{b:.1f}")
    ok = held >= 2
    _verdict(acceptance_log, 7, ok, f"ordering held in {held}/3 (arma/garch/bench %: {', '.join(parts)})")
    assert ok


def test_criterion_08_divergence_grows_with_length(short_report, acceptance_log):
    long = run_experiment([parse_scenario_id(LONG_SCENARIO)], (VF_ARMA,), REPLICATES, MASTER_SEED,
                          default_workers())
    d_long = long.row(LONG_SCENARIO, VF_ARMA).diverged
    d_short = short_report.row(MAIN_SCENARIO, VF_ARMA).diverged
    ok = d_long > d_short
    _verdict(acceptance_log, 8, ok, f"diverged T=1530: {d_long}/100, T=255: {d_short}/100")
    assert ok


def test_criterion_09_benchmark_symmetry(short_report, acceptance_log):
    worst = 0.0
    for sid in SCENARIOS:
        gjr, garch = short_report.row(sid, BENCH_GJR), short_report.row(sid, BENCH_GARCH)
        for attr in ("mean_rmse", "mean_mad"):
            worst = max(worst, abs(getattr(gjr, attr) / getattr(garch, attr) - 1))
    ok = worst <= 0.02
    _verdict(acceptance_log, 9, ok, f"largest GJR/GARCH relative gap {worst:.2e}")
    assert ok


def test_criterion_10_bitwise_determinism(tmp_path, acceptance_log):
    sim = ["simulate", "--T", "510", "--seed", "17", "--replicates", "3"]
    exp = ["experiment", "--scenario", MAIN_SCENARIO, "--scenario",
           "T255_mu0.40_sig0.45_psi0.20_ar1_exponential", "--replicates", "3",
           "--master-seed", "17"]
    for tag, workers in (("a", "1"), ("b", "2")):
        assert main(sim + ["--out", str(tmp_path / f"sim_{tag}")]) == 0
        assert main(exp + ["--workers", workers, "--out", str(tmp_path / f"exp_{tag}")]) == 0
    files = sorted(p.relative_to(tmp_path / "sim_a") for p in (tmp_path / "sim_a").glob("*.csv"))
    same = all((tmp_path / "sim_a" / f).read_bytes() == (tmp_path / "sim_b" / f).read_bytes()
               for f in files)
    same &= ((tmp_path / "exp_a" / "report.csv").read_bytes()
             == (tmp_path / "exp_b" / "report.csv").read_bytes())
    ok = same and len(files) == 3
    _verdict(acceptance_log, 10, ok, f"{len(files) + 1} CSV files compared across reruns (1 vs 2 workers)")
    assert ok


def test_criterion_11_fixture_workflow(acceptance_log):
    ds = build_dataset(load_fixture(), grouping="week")
    train, test = split(ds, SplitSpec(FIXTURE_TRAIN, FIXTURE_TEST))
    vf = fit_vf_arma(train)
    bench = fit_benchmark(train)
    r_vf, r_b = rmse(train.y, vf.fitted), rmse(train.y, bench.fitted)
    ok = ds.n == FIXTURE_TRAIN + FIXTURE_TEST and r_vf < r_b
    _verdict(acceptance_log, 11, ok,
             f"{ds.n} weekly rows, in-sample RMSE VF-ARMA {r_vf:.5f} vs benchmark {r_b:.5f}")
    assert ok
