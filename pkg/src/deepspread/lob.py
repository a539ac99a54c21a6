"""Loading and cleaning of level-aggregated limit order book files.

Input files follow the LOBSTER order book layout: no header, one row per
book event, a time column (seconds after midnight) followed by repeating
``ask price i, ask size i, bid price i, bid size i`` groups for levels
i = 1..L.  Prices are integer ticks worth 1/10000 USD.  Absent levels
are padded with sentinel prices (non-positive, or magnitude >= 1e10).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "TICKS_PER_USD",
    "SENTINEL_ABS",
    "SESSION_OPEN_S",
    "SESSION_CLOSE_S",
    "DepthSnapshot",
    "SnapshotSeries",
    "parse_orderbook",
    "serialize_orderbook",
    "session_filter",
    "trim_burn_in",
    "load_orderbook",
]

TICKS_PER_USD = 10_000
# LOBSTER pads absent levels with +/-9999999999; anything at or beyond
# that magnitude is a dummy, not a price.
SENTINEL_ABS = 9_999_999_999
SESSION_OPEN_S = 34_200.0   # 09:30
SESSION_CLOSE_S = 57_600.0  # 16:00


@dataclass(frozen=True)
class DepthSnapshot:
    """One book event: price/size pairs sorted best-first on both sides."""

    time_s: float
    asks: tuple[tuple[int, int], ...]  # (price_ticks, size), ascending prices
    bids: tuple[tuple[int, int], ...]  # (price_ticks, size), descending prices


@dataclass
class SnapshotSeries:
    """Columnar book event series at a fixed number of levels.

    Price matrices hold integer ticks, one row per event and one column
    per level.  Drop counters record how many raw rows each cleaning
    step removed.
    """

    time_s: np.ndarray
    ask_px: np.ndarray
    ask_sz: np.ndarray
    bid_px: np.ndarray
    bid_sz: np.ndarray
    ticker: str = ""
    dropped_invalid: int = 0
    dropped_session: int = 0
    dropped_burn_in: int = 0
    source: str = field(default="", repr=False)

    def __len__(self) -> int:
        return self.time_s.shape[0]

    @property
    def depth(self) -> int:
        return self.ask_px.shape[1]

    def snapshot(self, i: int) -> DepthSnapshot:
        return DepthSnapshot(
            time_s=float(self.time_s[i]),
            asks=tuple(zip(self.ask_px[i].tolist(), self.ask_sz[i].tolist())),
            bids=tuple(zip(self.bid_px[i].tolist(), self.bid_sz[i].tolist())),
        )


def _read_matrix(source) -> np.ndarray:
    """Read a headerless comma-separated numeric matrix.

    Tries the fast bulk path first; on failure reparses row by row so the
    error can name the offending row.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    if not text.strip():
        raise DataError("order book file is empty")
    try:
        return np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
    except ValueError:
        pass
    rows = []
    width = None
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise DataError(
                f"row {i}: expected {width} columns, found {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise DataError(f"row {i}: unparseable field ({exc})") from None
    return np.asarray(rows, dtype=np.float64)


def parse_orderbook(source, depth: int | None = None,
                    ticker: str = "") -> SnapshotSeries:
    """Parse an order book file and drop invalid rows at the given depth.

    A row is invalid when, within the top ``depth`` levels, any price is
    a sentinel (non-positive or magnitude >= 1e10), any size is
    non-positive, ask prices decrease or bid prices increase across
    levels, or the book is crossed (best ask <= best bid).  Dropped rows
    are counted in ``dropped_invalid``.  Duplicate timestamps are kept.

    Parameters
    ----------
    source : path or file-like
        The comma-separated book file.
    depth : int, optional
        Number of levels to retain; defaults to all levels present.
    """
    mat = _read_matrix(source)
    ncols = mat.shape[1]
    if ncols < 5 or (ncols - 1) % 4 != 0:
        raise DataError(
            f"expected 1 + 4*levels columns, found {ncols}")
    levels = (ncols - 1) // 4
    if depth is None:
        depth = levels
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    if depth > levels:
        raise ConfigError(
            f"requested depth {depth} exceeds the {levels} levels in the file")

    time_s = mat[:, 0]
    body = mat[:, 1:].reshape(mat.shape[0], levels, 4)
    ask_px = body[:, :depth, 0]
    ask_sz = body[:, :depth, 1]
    bid_px = body[:, :depth, 2]
    bid_sz = body[:, :depth, 3]

    ok = np.ones(mat.shape[0], dtype=bool)
    for px in (ask_px, bid_px):
        ok &= (px > 0).all(axis=1)
        ok &= (np.abs(px) < SENTINEL_ABS).all(axis=1)
    ok &= (ask_sz > 0).all(axis=1)
    ok &= (bid_sz > 0).all(axis=1)
    if depth > 1:
        ok &= (np.diff(ask_px, axis=1) >= 0).all(axis=1)
        ok &= (np.diff(bid_px, axis=1) <= 0).all(axis=1)
    ok &= ask_px[:, 0] > bid_px[:, 0]

    dropped = int((~ok).sum())
    to_int = lambda x: np.rint(x[ok]).astype(np.int64)
    return SnapshotSeries(
        time_s=time_s[ok].copy(),
        ask_px=to_int(ask_px),
        ask_sz=to_int(ask_sz),
        bid_px=to_int(bid_px),
        bid_sz=to_int(bid_sz),
        ticker=ticker,
        dropped_invalid=dropped,
        source=str(getattr(source, "name", source)),
    )


def serialize_orderbook(series: SnapshotSeries, path) -> None:
    """Write a series back to the parse layout (inverse of parse_orderbook)."""
    n, d = len(series), series.depth
    body = np.empty((n, d, 4), dtype=np.int64)
    body[:, :, 0] = series.ask_px
    body[:, :, 1] = series.ask_sz
    body[:, :, 2] = series.bid_px
    body[:, :, 3] = series.bid_sz
    flat = body.reshape(n, 4 * d)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            fields = [f"{series.time_s[i]:.9f}"]
            fields += [str(v) for v in flat[i]]
            fh.write(",".join(fields) + "\n")


def session_filter(series: SnapshotSeries,
                   open_s: float = SESSION_OPEN_S,
                   close_s: float = SESSION_CLOSE_S) -> SnapshotSeries:
    """Keep events with open_s <= time <= close_s (bounds inclusive)."""
    if close_s < open_s:
        raise ConfigError("session close precedes session open")
    keep = (series.time_s >= open_s) & (series.time_s <= close_s)
    dropped = int((~keep).sum())
    return replace(
        series,
        time_s=series.time_s[keep],
        ask_px=series.ask_px[keep],
        ask_sz=series.ask_sz[keep],
        bid_px=series.bid_px[keep],
        bid_sz=series.bid_sz[keep],
        dropped_session=series.dropped_session + dropped,
    )


def trim_burn_in(series: SnapshotSeries,
                 fraction: float = 0.05) -> SnapshotSeries:
    """Drop the first ceil(fraction * n) events (opening burn-in)."""
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(
            f"burn-in fraction must lie in [0, 1), got {fraction}")
    n = len(series)
    cut = int(np.ceil(fraction * n))
    return replace(
        series,
        time_s=series.time_s[cut:],
        ask_px=series.ask_px[cut:],
        ask_sz=series.ask_sz[cut:],
        bid_px=series.bid_px[cut:],
        bid_sz=series.bid_sz[cut:],
        dropped_burn_in=series.dropped_burn_in + cut,
    )


def load_orderbook(source, depth: int | None = None, ticker: str = "",
                   open_s: float = SESSION_OPEN_S,
                   close_s: float = SESSION_CLOSE_S,
                   burn_in: float = 0.05) -> SnapshotSeries:
    """Parse, session-filter and burn-in-trim a book file in one call."""
    series = parse_orderbook(source, depth=depth, ticker=ticker)
    series = session_filter(series, open_s=open_s, close_s=close_s)
    return trim_burn_in(series, fraction=burn_in)
