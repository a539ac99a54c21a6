"""Tail risk and systemic co-risk measures on scenario samples.

Sign conventions follow the two families being reported:

* ``var`` and ``avar`` are loss measures: positive numbers for samples
  whose lower tail sits below zero (VaR is minus the lower quantile,
  AVaR the average loss beyond it).
* The conditional family (``covar``, ``coes``, ``coetl``) stays on the
  return scale, so distress values come out negative, matching how
  co-risk tables are usually printed.

Empirical quantiles use the (i - 0.5)/n plotting-position convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericalError

__all__ = [
    "quantile",
    "var",
    "avar",
    "RachevReport",
    "rachev_ratio",
    "covar",
    "coes",
    "coetl",
    "SystemicRow",
    "systemic_report",
    "write_systemic_csv",
    "write_rachev_csv",
]


def _sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size == 0:
        raise DataError("empty sample")
    if not np.isfinite(x).all():
        raise DataError("sample contains non-finite values")
    return x


def _check_level(q: float) -> float:
    if not 0.0 < q < 1.0:
        raise ConfigError(f"tail level must lie in (0, 1), got {q}")
    return float(q)


def quantile(x, p: float) -> float:
    """Empirical quantile with (i - 0.5)/n plotting positions."""
    return float(np.quantile(_sample(x), _check_level(p), method="hazen"))


def var(x, u: float = 0.05) -> float:
    """Value at risk at tail level u: minus the empirical u-quantile."""
    return -quantile(x, u)


def avar(x, beta: float = 0.05) -> float:
    """Average value at risk: E[(q - X)+] / beta - q at the beta-quantile q.

    Coincides with the expected loss conditional on exceeding VaR for
    continuous laws and is never below ``var`` on any sample.
    """
    x = _sample(x)
    beta = _check_level(beta)
    q = float(np.quantile(x, beta, method="hazen"))
    return float(np.mean(np.maximum(q - x, 0.0)) / beta - q)


@dataclass(frozen=True)
class RachevReport:
    """Reward-to-risk tail ratio with both components.

    avar_gain is the upper-tail AVaR of gains (AVaR_beta applied to -X),
    avar_loss the lower-tail AVaR of losses; ratio is their quotient.
    """

    beta: float
    gamma: float
    avar_gain: float
    avar_loss: float
    ratio: float


def rachev_ratio(x, beta: float = 0.05, gamma: float = 0.05) -> RachevReport:
    """Ratio of upper-tail reward to lower-tail risk, AVaR_beta(-X) / AVaR_gamma(X)."""
    x = _sample(x)
    loss = avar(x, gamma)
    if loss <= 0.0:
        raise NumericalError(
            f"degenerate lower tail: AVaR_gamma = {loss:.6g} is not "
            f"positive, ratio undefined")
    gain = avar(-x, beta)
    return RachevReport(beta=float(beta), gamma=float(gamma),
                        avar_gain=gain, avar_loss=loss,
                        ratio=gain / loss)


def _distress_slice(x, y, q: float) -> np.ndarray:
    x = _sample(x)
    y = _sample(y)
    if x.size != y.size:
        raise DataError(
            f"conditioning and target samples differ in length "
            f"({x.size} vs {y.size})")
    t = np.quantile(x, q, method="hazen")
    sel = y[x <= t]
    if sel.size == 0:
        raise NumericalError("empty distress set")
    return sel


def covar(x, y, q: float = 0.05) -> float:
    """Conditional VaR of y given x in distress, on the return scale.

    The q-quantile of y restricted to scenarios where x sits at or below
    its own q-quantile.
    """
    q = _check_level(q)
    sel = _distress_slice(x, y, q)
    return float(np.quantile(sel, q, method="hazen"))


def coetl(x, y, q: float = 0.05) -> float:
    """Expected value of y beyond its CoVaR inside the distress set."""
    q = _check_level(q)
    sel = _distress_slice(x, y, q)
    c = np.quantile(sel, q, method="hazen")
    tail = sel[sel <= c]
    if tail.size == 0:
        raise NumericalError("empty conditional tail")
    return float(tail.mean())


def coes(x, y, q: float = 0.05) -> float:
    """Distress-set average of y counted only beyond its CoVaR.

    Same tail sum as ``coetl`` but normalized by the full distress-set
    size, so magnitudes scale roughly by q relative to coetl.
    """
    q = _check_level(q)
    sel = _distress_slice(x, y, q)
    c = np.quantile(sel, q, method="hazen")
    return float(sel[sel <= c].sum() / sel.size)


@dataclass
class SystemicRow:
    depth: int
    covar_95: float
    coes_95: float
    coetl_95: float
    covar_99: float
    coes_99: float
    coetl_99: float


def systemic_report(scenarios: np.ndarray, depths=None,
                    levels=(0.95, 0.99)) -> list[SystemicRow]:
    """Co-risk of the last column conditioned on each depth column.

    ``scenarios`` has one column per depth plus a final index column.
    A confidence level L maps to lower-tail conditioning at q = 1 - L.
    """
    scen = np.asarray(scenarios, dtype=np.float64)
    if scen.ndim != 2 or scen.shape[1] < 2:
        raise DataError("scenario matrix must have >= 2 columns")
    n_dep = scen.shape[1] - 1
    if depths is None:
        depths = list(range(1, n_dep + 1))
    if len(depths) != n_dep:
        raise ConfigError(
            f"{len(depths)} depth labels for {n_dep} depth columns")
    if len(levels) != 2:
        raise ConfigError("exactly two confidence levels expected")
    y = scen[:, -1]
    rows = []
    for j, depth in enumerate(depths):
        x = scen[:, j]
        vals = {}
        for level in levels:
            q = 1.0 - level
            tag = f"{level * 100:.0f}"
            vals["covar_" + tag] = covar(x, y, q)
            vals["coes_" + tag] = coes(x, y, q)
            vals["coetl_" + tag] = coetl(x, y, q)
        rows.append(SystemicRow(depth=int(depth), **vals))
    return rows


def write_systemic_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("depth,coes_95,coetl_95,coes_99,coetl_99\n")
        for r in rows:
            fh.write(f"{r.depth},{r.coes_95:.6f},{r.coetl_95:.6f},"
                     f"{r.coes_99:.6f},{r.coetl_99:.6f}\n")


def write_rachev_csv(rows, path) -> None:
    """rows: iterables of (ticker, kind, depth, ratio)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ticker,kind,depth,ratio\n")
        for ticker, kind, depth, ratio in rows:
            fh.write(f"{ticker},{kind},{depth},{ratio:.6f}\n")
