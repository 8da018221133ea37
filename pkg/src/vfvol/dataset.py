"""Aligned varying-frequency datasets built from high-frequency price/volume data.

A low-frequency period is a block of ``m`` consecutive high-frequency points
(five trading days per week by default).  For period ``t`` the dataset holds

* ``y[t]``  log return between the last closes of periods ``t-1`` and ``t``,
* ``v[t]``  log change of the summed period volume,
* ``x_lag[t]``  the ``m`` closes of period ``t-1``.

The first complete period is consumed by the differencing and lagging, so a
series with ``P`` complete periods yields ``P - 1`` aligned rows.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

DEFAULT_PERIOD = 5


class DataError(ValueError):
    """Raised when raw input cannot be turned into a valid dataset."""


@dataclass(frozen=True)
class RawDailySeries:
    """High-frequency closing prices and traded volumes.

    Parameters
    ----------
    dates : sequence of datetime64 or None
        Strictly increasing calendar dates.  ``None`` for synthetic data
        without a calendar.
    close : ndarray
        Positive closing prices.
    volume : ndarray
        Nonnegative traded volume.
    """

    close: np.ndarray
    volume: np.ndarray
    dates: np.ndarray | None = None

    def __post_init__(self) -> None:
        close = np.asarray(self.close, dtype=float)
        volume = np.asarray(self.volume, dtype=float)
        if close.ndim != 1 or volume.shape != close.shape:
            raise DataError("close and volume must be 1-d arrays of equal length")
        object.__setattr__(self, "close", close)
        object.__setattr__(self, "volume", volume)
        if self.dates is not None:
            dates = np.asarray(self.dates, dtype="datetime64[D]")
            if dates.shape != close.shape:
                raise DataError("dates must match close in length")
            if np.any(np.diff(dates) <= np.timedelta64(0, "D")):
                raise DataError("dates must be strictly increasing")
            object.__setattr__(self, "dates", dates)

    def __len__(self) -> int:
        return self.close.shape[0]

    def validate(self, m: int = DEFAULT_PERIOD) -> None:
        bad = np.flatnonzero(~(np.isfinite(self.close) & (self.close > 0)))
        if bad.size:
            raise DataError(
                f"nonpositive or non-finite close at index {int(bad[0])} "
                f"(value {self.close[bad[0]]!r})"
            )
        badv = np.flatnonzero(~(np.isfinite(self.volume) & (self.volume >= 0)))
        if badv.size:
            raise DataError(f"negative or non-finite volume at index {int(badv[0])}")
        if len(self) < 2 * m:
            raise DataError(f"need at least {2 * m} points, got {len(self)}")


@dataclass(frozen=True)
class VaryingFrequencyDataset:
    """Low-frequency response and covariate with the lagged high-frequency panel."""

    y: np.ndarray
    v: np.ndarray
    x_lag: np.ndarray
    m: int = DEFAULT_PERIOD
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        v = np.asarray(self.v, dtype=float)
        x_lag = np.asarray(self.x_lag, dtype=float)
        if x_lag.ndim != 2 or x_lag.shape[1] != self.m:
            raise DataError(f"x_lag must be n x {self.m}, got shape {x_lag.shape}")
        if not (y.shape == v.shape == (x_lag.shape[0],)):
            raise DataError("y, v and x_lag must share the same length")
        if not np.all(np.isfinite(x_lag)):
            raise DataError("x_lag contains non-finite entries")
        for arr in (y, v, x_lag):
            arr.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "x_lag", x_lag)

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def subset(self, start: int, stop: int) -> "VaryingFrequencyDataset":
        meta = dict(self.metadata)
        meta["offset"] = meta.get("offset", 0) + start
        return VaryingFrequencyDataset(
            self.y[start:stop], self.v[start:stop], self.x_lag[start:stop], self.m, meta
        )


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    horizon: int = 4

    def check(self, n: int) -> None:
        if self.horizon < 1:
            raise DataError("horizon must be at least 1")
        if self.train_len < 1:
            raise DataError("train_len must be at least 1")
        if self.train_len + self.horizon > n:
            raise DataError(
                f"train_len + horizon = {self.train_len + self.horizon} exceeds n = {n}"
            )


def period_blocks(values: np.ndarray, m: int) -> np.ndarray:
    """Reshape into complete ``m``-blocks, dropping an incomplete tail."""
    values = np.asarray(values, dtype=float)
    n_periods = values.shape[0] // m
    return values[: n_periods * m].reshape(n_periods, m)


def aggregate_blocks(
    close_blocks: np.ndarray, volume_blocks: np.ndarray, metadata: dict | None = None
) -> VaryingFrequencyDataset:
    """Align period blocks of closes and volumes into a dataset.

    Both arrays are ``(P, m)``.  Row ``t`` of the result uses periods ``t`` and
    ``t + 1`` of the input.
    """
    close_blocks = np.asarray(close_blocks, dtype=float)
    volume_blocks = np.asarray(volume_blocks, dtype=float)
    n_periods, m = close_blocks.shape
    if n_periods < 3:
        raise DataError(f"need at least 3 complete periods, got {n_periods}")
    bad = np.flatnonzero(~(close_blocks.ravel() > 0))
    if bad.size:
        raise DataError(f"nonpositive close at index {int(bad[0])}")

    last = close_blocks[:, -1]
    y = np.log(last[1:] / last[:-1])
    total = volume_blocks.sum(axis=1)
    zero = np.flatnonzero(total <= 0)
    if zero.size:
        raise DataError(
            f"zero total volume in period {int(zero[0])}; volume change undefined"
        )
    v = np.log(total[1:] / total[:-1])
    return VaryingFrequencyDataset(y, v, close_blocks[:-1].copy(), m, metadata or {})


def _calendar_week_blocks(daily: RawDailySeries, m: int):
    """Group by ISO week, padding short weeks by carrying the last close."""
    frame = pd.DataFrame(
        {"close": daily.close, "volume": daily.volume},
        index=pd.DatetimeIndex(daily.dates),
    )
    iso = frame.index.isocalendar()
    keys = (iso["year"].to_numpy(dtype=np.int64) * 100 + iso["week"].to_numpy(dtype=np.int64))
    closes, volumes, fills = [], [], []
    for _, grp in frame.groupby(keys, sort=True):
        c = grp["close"].to_numpy()
        w = grp["volume"].to_numpy()
        if c.shape[0] > m:
            raise DataError(f"calendar period holds {c.shape[0]} points, more than m={m}")
        n_fill = m - c.shape[0]
        if n_fill:
            c = np.concatenate([c, np.repeat(c[-1], n_fill)])
            w = np.concatenate([w, np.zeros(n_fill)])
        closes.append(c)
        volumes.append(w)
        fills.append(n_fill)
    return np.array(closes), np.array(volumes), fills


def build_dataset(
    daily: RawDailySeries, m: int = DEFAULT_PERIOD, grouping: str = "block"
) -> VaryingFrequencyDataset:
    """Aggregate a high-frequency series into an aligned dataset.

    Parameters
    ----------
    daily : RawDailySeries
    m : int
        Points per low-frequency period.
    grouping : {"block", "week"}
        ``"block"`` cuts consecutive runs of ``m`` points from the first
        observation and drops an incomplete tail.  ``"week"`` groups by ISO
        calendar week (requires dates); short weeks are padded by repeating
        the last close with zero volume and the pad count is recorded in
        ``metadata["fill_counts"]``.
    """
    daily.validate(m)
    if grouping == "block":
        closes = period_blocks(daily.close, m)
        volumes = period_blocks(daily.volume, m)
        dropped = len(daily) - closes.size
        meta = {"grouping": "block", "dropped_tail": dropped}
        if dropped:
            logger.info("dropping %d trailing points of an incomplete period", dropped)
    elif grouping == "week":
        if daily.dates is None:
            raise DataError("calendar grouping requires dates")
        closes, volumes, fills = _calendar_week_blocks(daily, m)
        meta = {"grouping": "week", "fill_counts": fills[1:]}
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    if daily.dates is not None and grouping == "block":
        ends = period_blocks(np.arange(len(daily)), m)[:, -1].astype(int)
        meta["period_end"] = [str(d) for d in daily.dates[ends][1:]]
    return aggregate_blocks(closes, volumes, meta)


def split(
    ds: VaryingFrequencyDataset, spec: SplitSpec
) -> tuple[VaryingFrequencyDataset, VaryingFrequencyDataset]:
    """Contiguous train prefix and test block of ``spec.horizon`` rows.

    Test rows keep their own ``v`` and ``x_lag``; both are known one period
    ahead, which is what forecasting needs.
    """
    spec.check(ds.n)
    stop = spec.train_len + spec.horizon
    return ds.subset(0, spec.train_len), ds.subset(spec.train_len, stop)


def concat(parts: Sequence[VaryingFrequencyDataset]) -> VaryingFrequencyDataset:
    m = parts[0].m
    return VaryingFrequencyDataset(
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.v for p in parts]),
        np.vstack([p.x_lag for p in parts]),
        m,
        dict(parts[0].metadata),
    )


def read_daily_csv(path: str | Path) -> RawDailySeries:
    """Read a ``date,close,volume`` CSV with ISO-8601 dates."""
    frame = pd.read_csv(path, dtype={"close": float, "volume": float}, float_precision="round_trip")
    expected = ["date", "close", "volume"]
    if list(frame.columns) != expected:
        raise DataError(f"expected header {','.join(expected)}, got {','.join(frame.columns)}")
    try:
        dates = pd.to_datetime(frame["date"], format="ISO8601").to_numpy(dtype="datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise DataError(f"bad date in {path}: {exc}") from exc
    return RawDailySeries(frame["close"].to_numpy(), frame["volume"].to_numpy(), dates)


def write_daily_csv(daily: RawDailySeries, path: str | Path) -> None:
    if daily.dates is None:
        raise DataError("writing a daily CSV requires dates")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "close", "volume"])
        for d, c, w in zip(daily.dates, daily.close, daily.volume):
            writer.writerow([str(d), repr(float(c)), repr(float(w))])


def dataset_columns(m: int) -> list[str]:
    return ["t", "y", "v"] + [f"x{i + 1}" for i in range(m)]


def write_dataset_csv(ds: VaryingFrequencyDataset, path: str | Path) -> None:
    """Export with header ``t,y,v,x1..xm``; floats use round-trip repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset_columns(ds.m))
        for t in range(ds.n):
            row = [t + 1, repr(float(ds.y[t])), repr(float(ds.v[t]))]
            row += [repr(float(x)) for x in ds.x_lag[t]]
            writer.writerow(row)


def read_dataset_csv(path: str | Path) -> VaryingFrequencyDataset:
    frame = pd.read_csv(path, float_precision="round_trip")
    cols = list(frame.columns)
    if cols[:3] != ["t", "y", "v"] or len(cols) < 4:
        raise DataError(f"unexpected dataset header {','.join(cols)}")
    m = len(cols) - 3
    if cols != dataset_columns(m):
        raise DataError(f"unexpected dataset header {','.join(cols)}")
    return VaryingFrequencyDataset(
        frame["y"].to_numpy(float),
        frame["v"].to_numpy(float),
        frame[cols[3:]].to_numpy(float),
        m,
    )


def load_any(path: str | Path, m: int = DEFAULT_PERIOD) -> VaryingFrequencyDataset:
    """Load either a raw daily CSV or an exported dataset CSV, by header."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    if header == ["date", "close", "volume"]:
        return build_dataset(read_daily_csv(path), m)
    return read_dataset_csv(path)
