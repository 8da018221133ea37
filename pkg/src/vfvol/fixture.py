"""Synthetic daily price/volume fixture with a known high-frequency effect.

The fixture stands in for a real daily stock series (two years of business
days).  Each week's log return is driven by last week's daily closes:

    y_t = 0.03 * sin((x_{1,t-1} - 100) / 2.5) - 0.004 * (x_{5,t-1} - 100) + e_t,
    e_t ~ N(0, 0.004^2)

The sine term is a nonlinear function of a single day's close, which an
additive smooth can pick up and a weekly-mean covariate cannot.  Intraweek
closes follow a Brownian bridge between consecutive Friday closes.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import RawDailySeries, read_daily_csv, write_daily_csv

FIXTURE_DAYS = 520
FIXTURE_START = "2016-01-04"
FIXTURE_SEED = 2016
FIXTURE_TRAIN = 99
FIXTURE_TEST = 4
_FILE = "fixture_daily.csv"


def fixture_effect(x_prev: np.ndarray) -> np.ndarray:
    """Conditional mean of the weekly return given last week's closes (rows)."""
    x_prev = np.atleast_2d(x_prev)
    return 0.03 * np.sin((x_prev[:, 0] - 100.0) / 2.5) - 0.004 * (x_prev[:, -1] - 100.0)


def make_fixture(seed: int = FIXTURE_SEED, days: int = FIXTURE_DAYS, m: int = 5) -> RawDailySeries:
    rng = np.random.default_rng(seed)
    weeks = days // m
    closes = np.empty((weeks, m))
    closes[0] = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.01, m)))
    for t in range(1, weeks):
        y = fixture_effect(closes[t - 1])[0] + rng.normal(0.0, 0.004)
        start = np.log(closes[t - 1, -1])
        steps = rng.normal(0.0, 0.008, m)
        walk = np.cumsum(steps)
        bridge = walk - np.arange(1, m + 1) / m * walk[-1]
        closes[t] = np.exp(start + y * np.arange(1, m + 1) / m + bridge)
    volume = np.round(rng.lognormal(np.log(1e6), 0.3, weeks * m))
    dates = pd.bdate_range(FIXTURE_START, periods=weeks * m).strftime("%Y-%m-%d").to_numpy()
    return RawDailySeries(closes.ravel(), volume, dates)


def fixture_path() -> Path:
    """Location of the shipped fixture CSV."""
    return Path(str(resources.files("vfvol") / "data" / _FILE))


def load_fixture() -> RawDailySeries:
    return read_daily_csv(fixture_path())


def write_fixture(path: str | Path, seed: int = FIXTURE_SEED) -> None:
    write_daily_csv(make_fixture(seed), path)
