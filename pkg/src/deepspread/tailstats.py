"""Static heavy-tail diagnostics for return samples.

Moment and quantile-ratio kurtosis, kernel density and QQ curves, mean
excess functions, generalized Pareto (peaks-over-threshold) maximum
likelihood with asymptotic confidence intervals, Hill tail-index curves
with Wald bands, and the rank-minus-one-half log-log regression for the
power-law exponent of the full positive tail.

Empirical quantiles throughout use the (i - 0.5)/n plotting-position
convention (numpy's "hazen" method).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import gaussian_kde, norm

from .errors import DataError, NumericalError
from ._numdiff import numeric_hessian

__all__ = [
    "excess_kurtosis",
    "robust_kurtosis",
    "kde_curve",
    "qq_points",
    "mean_excess",
    "MeanExcess",
    "GpdFit",
    "gpd_fit",
    "tail_exceedances",
    "gpd_tail_fit",
    "HillCurve",
    "hill_curve",
    "RankFit",
    "rank_half_fit",
    "write_kurtosis_csv",
    "write_gpd_csv",
    "write_hill_csv",
    "write_rank_csv",
]


def _clean_sample(x, min_n: int = 2) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < min_n:
        raise DataError(f"need at least {min_n} observations, got {x.size}")
    if not np.isfinite(x).all():
        raise DataError("sample contains non-finite values")
    return x


def excess_kurtosis(x) -> float:
    """Moment kurtosis m4 / m2^2 - 3 (zero for the normal law)."""
    x = _clean_sample(x)
    c = x - x.mean()
    s = float(np.max(np.abs(c)))
    if s == 0.0:
        raise NumericalError("kurtosis undefined for a constant sample")
    c /= s      # scale-free statistic; keeps m2^2 from underflowing
    m2 = np.mean(c ** 2)
    return float(np.mean(c ** 4) / m2 ** 2 - 3.0)


def robust_kurtosis(x, alpha: float = 0.05, mid: float = 0.5,
                    center: float = 2.59) -> float:
    """Quantile-ratio kurtosis robust to extreme observations.

    Compares the spread of the outer alpha tails with the spread of the
    outer ``mid`` tails via trimmed means of the top/bottom ceil(frac*n)
    order statistics, then subtracts the Gaussian reference value
    (approximately 2.59), so the normal law again scores near zero.
    """
    x = np.sort(_clean_sample(x))
    n = x.size

    def tails(frac: float) -> tuple[float, float]:
        k = int(np.ceil(frac * n))
        return float(x[n - k:].mean()), float(x[:k].mean())

    u_a, l_a = tails(alpha)
    u_m, l_m = tails(mid)
    denom = u_m - l_m
    if denom <= 0:
        raise NumericalError("robust kurtosis undefined for a constant sample")
    return (u_a - l_a) / denom - center


def kde_curve(x, n_points: int = 512, padding: float = 3.0):
    """Gaussian kernel density over an evenly spaced grid.

    Returns (grid, density); the grid spans the sample range extended by
    ``padding`` bandwidths so the density decays to ~0 at both ends.
    """
    x = _clean_sample(x)
    if np.ptp(x) == 0:
        raise NumericalError("density estimate undefined for a constant sample")
    kde = gaussian_kde(x)
    bw = np.sqrt(kde.covariance[0, 0])
    grid = np.linspace(x.min() - padding * bw, x.max() + padding * bw,
                       n_points)
    return grid, kde(grid)


def qq_points(x):
    """Normal QQ scatter: fitted-normal quantiles against sorted sample."""
    x = np.sort(_clean_sample(x))
    n = x.size
    p = (np.arange(1, n + 1) - 0.5) / n
    theo = x.mean() + x.std(ddof=0) * norm.ppf(p)
    return theo, x


@dataclass
class MeanExcess:
    thresholds: np.ndarray
    values: np.ndarray   # NaN where no exceedances
    counts: np.ndarray


def mean_excess(x, thresholds=None, n_thresholds: int = 30) -> MeanExcess:
    """Empirical mean excess e(u) = mean(x - u | x > u) over thresholds."""
    x = _clean_sample(x)
    if thresholds is None:
        qs = np.linspace(0.05, 0.98, n_thresholds)
        thresholds = np.quantile(x, qs, method="hazen")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    values = np.full(thresholds.shape, np.nan)
    counts = np.zeros(thresholds.shape, dtype=np.int64)
    for i, u in enumerate(thresholds):
        exc = x[x > u] - u
        counts[i] = exc.size
        if exc.size:
            values[i] = exc.mean()
    return MeanExcess(thresholds=thresholds, values=values, counts=counts)


@dataclass
class GpdFit:
    xi: float
    sigma: float
    xi_ci: tuple[float, float]
    sigma_ci: tuple[float, float]
    loglik: float
    n_exceed: int
    threshold: float = np.nan
    converged: bool = True


def _gpd_nll(params, exc):
    xi, log_sigma = params
    sigma = np.exp(log_sigma)
    if abs(xi) < 1e-10:
        return exc.size * log_sigma + exc.sum() / sigma
    z = 1.0 + xi * exc / sigma
    if np.any(z <= 0):
        return 1e10
    return exc.size * log_sigma + (1.0 + 1.0 / xi) * np.log(z).sum()


def gpd_fit(exceedances, conf: float = 0.95,
            threshold: float = np.nan) -> GpdFit:
    """Maximum likelihood generalized Pareto fit to positive exceedances.

    Works on excesses over the threshold, i.e. the sample must already be
    shifted so its support starts at 0.  Confidence intervals come from
    the observed information in the (xi, log sigma) parameterization;
    sigma bounds are exponentiated back, which keeps them positive.
    """
    exc = _clean_sample(exceedances)
    if exc.size == 0:
        raise DataError("empty exceedance sample")
    if np.any(exc < 0):
        raise DataError("exceedances must be non-negative")
    if np.ptp(exc) == 0 or exc.max() <= 0:
        raise NumericalError("degenerate exceedance sample")

    m, v = exc.mean(), exc.var(ddof=0)
    # Method-of-moments start, clamped into the usable region.
    xi0 = 0.5 * (1.0 - m * m / v) if v > 0 else 0.0
    xi0 = float(np.clip(xi0, -0.4, 0.9))
    sigma0 = max(m * (1.0 - xi0), 1e-12)

    best = None
    for start in ((xi0, np.log(sigma0)), (0.1, np.log(m))):
        res = minimize(_gpd_nll, np.asarray(start), args=(exc,),
                       method="Nelder-Mead",
                       options={"xatol": 1e-7, "fatol": 1e-9,
                                "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res
    xi_hat, log_sigma_hat = best.x
    if best.fun >= 1e10:
        raise NumericalError("generalized Pareto likelihood did not converge")

    z = norm.ppf(0.5 + conf / 2.0)
    try:
        hess = numeric_hessian(lambda p: _gpd_nll(p, exc), best.x)
        cov = np.linalg.inv(hess)
        se_xi = np.sqrt(max(cov[0, 0], 0.0))
        se_ls = np.sqrt(max(cov[1, 1], 0.0))
    except np.linalg.LinAlgError:
        se_xi = se_ls = np.nan
    sigma_hat = float(np.exp(log_sigma_hat))
    return GpdFit(
        xi=float(xi_hat),
        sigma=sigma_hat,
        xi_ci=(float(xi_hat - z * se_xi), float(xi_hat + z * se_xi)),
        sigma_ci=(float(np.exp(log_sigma_hat - z * se_ls)),
                  float(np.exp(log_sigma_hat + z * se_ls))),
        loglik=float(-best.fun),
        n_exceed=int(exc.size),
        threshold=threshold,
        converged=bool(best.success),
    )


def tail_exceedances(x, q: float = 0.95):
    """Excesses of x over its empirical q-quantile, with the threshold."""
    x = _clean_sample(x)
    u = float(np.quantile(x, q, method="hazen"))
    exc = x[x > u] - u
    if exc.size == 0:
        raise DataError(f"no exceedances above the {q:.0%} threshold")
    return exc, u


def gpd_tail_fit(x, q: float = 0.95, conf: float = 0.95) -> GpdFit:
    """Peaks-over-threshold fit over the empirical q-quantile of x."""
    exc, u = tail_exceedances(x, q)
    return gpd_fit(exc, conf=conf, threshold=u)


@dataclass
class HillCurve:
    k: np.ndarray
    alpha: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_tail: int


def hill_curve(x, k_min: int | None = None, k_max: int | None = None,
               tail_fraction: float = 0.05, conf: float = 0.95) -> HillCurve:
    """Hill tail-index estimates over a window of order statistics.

    The estimator runs on the largest ceil(tail_fraction * n) sample
    values; the default k window spans 1%..5% of that tail subsample.
    For each k, alpha_k = 1 / (mean of log(X_(1..k)) - log(X_(k+1)))
    with descending order statistics, and the Wald band is
    [alpha / (1 + z/sqrt(k)), alpha / (1 - z/sqrt(k))].
    """
    x = _clean_sample(x)
    m = int(np.ceil(tail_fraction * x.size))
    if m < 3:
        raise DataError("tail subsample too small for Hill estimation")
    tail = np.sort(x)[-m:][::-1]
    if tail[-1] <= 0:
        tail = tail[tail > 0]
        m = tail.size
        if m < 3:
            raise DataError("tail subsample holds fewer than 3 positive values")
    if k_min is None:
        k_min = max(int(round(0.01 * m)), 1)
    if k_max is None:
        k_max = int(round(0.05 * m))
    if not 1 <= k_min <= k_max:
        raise DataError(f"invalid k window [{k_min}, {k_max}]")
    if k_max > m - 1:
        raise DataError(
            f"k_max {k_max} exceeds usable tail order statistics {m - 1}")

    logs = np.log(tail)
    csum = np.cumsum(logs)
    ks = np.arange(k_min, k_max + 1)
    mean_top = csum[ks - 1] / ks
    alpha = 1.0 / (mean_top - logs[ks])

    z = norm.ppf(0.5 + conf / 2.0)
    root_k = np.sqrt(ks)
    lo = alpha / (1.0 + z / root_k)
    hi = np.where(root_k > z, alpha / (1.0 - z / root_k), np.inf)
    return HillCurve(k=ks, alpha=alpha, ci_lo=lo, ci_hi=hi, n_tail=m)


@dataclass
class RankFit:
    b: float
    se: float          # rank-regression standard error b * sqrt(2 / n)
    ci: tuple[float, float]
    intercept: float
    se_ols: float      # naive OLS slope standard error, for reference
    n_pos: int


def rank_half_fit(x, conf: float = 0.95) -> RankFit:
    """Log-log rank regression estimate of the power-law tail exponent.

    Regresses log(rank - 1/2) on the log of the descending positive
    sample values.  The slope magnitude estimates the tail exponent; its
    standard error uses the rank-regression asymptotics b * sqrt(2/n),
    which corrects the severe optimism of the naive OLS formula.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    pos = np.sort(x[x > 0])[::-1]
    n = pos.size
    if n < 3:
        raise DataError("need at least 3 positive observations")
    ly = np.log(np.arange(1, n + 1) - 0.5)
    lx = np.log(pos)
    if np.ptp(lx) == 0:
        raise NumericalError("rank regression undefined for a constant tail")
    slope, intercept = np.polyfit(lx, ly, 1)
    b = float(-slope)
    resid = ly - (slope * lx + intercept)
    dof = max(n - 2, 1)
    se_ols = float(np.sqrt(resid @ resid / dof / ((lx - lx.mean()) ** 2).sum()))
    se = b * np.sqrt(2.0 / n)
    z = norm.ppf(0.5 + conf / 2.0)
    return RankFit(b=b, se=float(se), ci=(b - z * se, b + z * se),
                   intercept=float(intercept), se_ols=se_ols, n_pos=int(n))


def write_kurtosis_csv(rows, path) -> None:
    """rows: iterables of (ticker, kind, depth, n, kurtosis, robust)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ticker,kind,depth,n,excess_kurtosis,robust_kurtosis\n")
        for ticker, kind, depth, n, k, rk in rows:
            fh.write(f"{ticker},{kind},{depth},{n},{k:.6f},{rk:.6f}\n")


def write_gpd_csv(fits_by_depth, path) -> None:
    """fits_by_depth: iterable of (depth, GpdFit).

    The leading six columns are the stable reading interface; the sigma
    CI and threshold ride behind them as extras.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("depth,xi,ci_lo,ci_hi,sigma,n_exceed,"
                 "sigma_lo,sigma_hi,threshold\n")
        for depth, f in fits_by_depth:
            fh.write(f"{depth},{f.xi:.6f},{f.xi_ci[0]:.6f},{f.xi_ci[1]:.6f},"
                     f"{f.sigma:.6e},{f.n_exceed},"
                     f"{f.sigma_ci[0]:.6e},{f.sigma_ci[1]:.6e},"
                     f"{f.threshold:.6e}\n")


def write_hill_csv(curve: HillCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,alpha,ci_lo,ci_hi\n")
        for i in range(curve.k.size):
            fh.write(f"{curve.k[i]},{curve.alpha[i]:.6f},"
                     f"{curve.ci_lo[i]:.6f},{curve.ci_hi[i]:.6f}\n")


def write_rank_csv(rows, path) -> None:
    """rows: iterables of (ticker, kind, depth, RankFit)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ticker,kind,depth,b,ci_lo,ci_hi,se,se_ols,n_pos\n")
        for ticker, kind, depth, f in rows:
            fh.write(f"{ticker},{kind},{depth},{f.b:.6f},{f.ci[0]:.6f},"
                     f"{f.ci[1]:.6f},{f.se:.6f},{f.se_ols:.6f},{f.n_pos}\n")
