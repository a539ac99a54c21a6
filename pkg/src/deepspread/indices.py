"""Volume-weighted spread and mid-price indices over book depth.

For a depth d the ask-side index TMOBAP is the volume-weighted average
ask price over the top d levels (the average cost per share of sweeping
those levels); TMOBBP is the bid-side counterpart.  From these:

* TMOBBAS(d) = TMOBAP(d) - TMOBBP(d), a depth-resolved spread, and
* GMP(d) = (TMOBAP(d) + TMOBBP(d)) / 2, a depth-resolved mid price.

All index values are reported in USD.  Log returns are taken event to
event without resampling; an equal-weighted portfolio (EWP) return is
the arithmetic mean of the per-depth return series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .lob import TICKS_PER_USD, DepthSnapshot, SnapshotSeries

__all__ = [
    "IndexSeries",
    "tmobap",
    "tmobbp",
    "tmobbas",
    "gmp",
    "snapshot_tmobap",
    "snapshot_tmobbp",
    "log_returns",
    "index_series",
    "build_ewp",
    "resample_locf",
    "write_index_csv",
    "read_index_csv",
]


def _vwap(px: np.ndarray, sz: np.ndarray, depth: int) -> np.ndarray:
    if depth < 1 or depth > px.shape[1]:
        raise ConfigError(
            f"depth must lie in [1, {px.shape[1]}], got {depth}")
    notional = (px[:, :depth] * sz[:, :depth]).sum(axis=1)
    shares = sz[:, :depth].sum(axis=1)
    return notional / shares / TICKS_PER_USD


def tmobap(series: SnapshotSeries, depth: int) -> np.ndarray:
    """Volume-weighted average ask price over the top ``depth`` levels, USD."""
    return _vwap(series.ask_px, series.ask_sz, depth)


def tmobbp(series: SnapshotSeries, depth: int) -> np.ndarray:
    """Volume-weighted average bid price over the top ``depth`` levels, USD."""
    return _vwap(series.bid_px, series.bid_sz, depth)


def tmobbas(series: SnapshotSeries, depth: int) -> np.ndarray:
    """Depth-d spread index: ask-side minus bid-side sweep price."""
    return tmobap(series, depth) - tmobbp(series, depth)


def gmp(series: SnapshotSeries, depth: int) -> np.ndarray:
    """Depth-d global mid price: midpoint of the two sweep prices."""
    return 0.5 * (tmobap(series, depth) + tmobbp(series, depth))


def _side_vwap(levels, depth: int) -> float:
    if depth < 1 or depth > len(levels):
        raise ConfigError(
            f"depth must lie in [1, {len(levels)}], got {depth}")
    notional = sum(px * sz for px, sz in levels[:depth])
    shares = sum(sz for _, sz in levels[:depth])
    return notional / shares / TICKS_PER_USD


def snapshot_tmobap(snap: DepthSnapshot, depth: int) -> float:
    """Scalar TMOBAP for one snapshot (reference path for the vectorized one)."""
    return _side_vwap(snap.asks, depth)


def snapshot_tmobbp(snap: DepthSnapshot, depth: int) -> float:
    return _side_vwap(snap.bids, depth)


def log_returns(values: np.ndarray) -> np.ndarray:
    """Event-to-event log returns ln(v[t+1]/v[t]); zeros are retained."""
    values = np.asarray(values, dtype=np.float64)
    bad = np.flatnonzero(values <= 0)
    if bad.size:
        raise DataError(
            f"index value at position {bad[0]} is non-positive; "
            "log returns are undefined")
    return np.diff(np.log(values))


@dataclass
class IndexSeries:
    """One spread or mid-price index track at a fixed depth."""

    ticker: str
    kind: str            # "tmobbas" or "gmp"
    depth: int
    time_s: np.ndarray
    values: np.ndarray   # USD

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def returns(self) -> np.ndarray:
        return log_returns(self.values)


def index_series(series: SnapshotSeries, kind: str,
                 depth: int) -> IndexSeries:
    kind = kind.lower()
    if kind == "tmobbas":
        values = tmobbas(series, depth)
    elif kind == "gmp":
        values = gmp(series, depth)
    else:
        raise ConfigError(f"unknown index kind {kind!r}")
    return IndexSeries(ticker=series.ticker, kind=kind, depth=depth,
                       time_s=series.time_s.copy(), values=values)


def build_ewp(returns_by_depth) -> np.ndarray:
    """Equal-weighted portfolio return: elementwise mean across depths."""
    arrays = [np.asarray(r, dtype=np.float64) for r in returns_by_depth]
    if not arrays:
        raise DataError("no return series supplied")
    n = arrays[0].shape[0]
    for i, arr in enumerate(arrays):
        if arr.shape[0] != n:
            raise DataError(
                f"return series {i} has length {arr.shape[0]}, expected {n}")
    return np.mean(np.vstack(arrays), axis=0)


def resample_locf(idx: IndexSeries, step_s: float) -> IndexSeries:
    """Resample to a fixed grid by last observation carried forward.

    The grid starts at the first observation time and steps by step_s;
    grid points before the first observation are impossible by
    construction, so every grid value is defined.
    """
    if step_s <= 0:
        raise ConfigError(f"step must be positive, got {step_s}")
    if len(idx) == 0:
        raise DataError("cannot resample an empty index series")
    t0, t1 = idx.time_s[0], idx.time_s[-1]
    grid = np.arange(t0, t1 + 0.5 * step_s, step_s)
    pos = np.searchsorted(idx.time_s, grid, side="right") - 1
    return IndexSeries(ticker=idx.ticker, kind=idx.kind, depth=idx.depth,
                       time_s=grid, values=idx.values[pos])


def write_index_csv(idx: IndexSeries, path) -> None:
    """Write time_s,value_usd,log_return rows; the first return is empty."""
    rets = idx.returns if len(idx) > 1 else np.array([])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("time_s,value_usd,log_return\n")
        for i in range(len(idx)):
            ret = "" if i == 0 else f"{rets[i - 1]:.12e}"
            fh.write(f"{idx.time_s[i]:.9f},{idx.values[i]:.10f},{ret}\n")


def read_index_csv(path, ticker: str = "", kind: str = "",
                   depth: int = 0) -> IndexSeries:
    data = np.genfromtxt(path, delimiter=",", skip_header=1,
                         usecols=(0, 1), ndmin=2)
    if data.size == 0:
        raise DataError(f"index file {path} holds no rows")
    return IndexSeries(ticker=ticker, kind=kind, depth=depth,
                       time_s=data[:, 0], values=data[:, 1])
