"""ARMA(1,1)-GARCH(1,1) estimation, simulation and tail diagnostics.

The conditional model for a log-return series r_t is

    r_t     = phi0 + phi1 r_{t-1} + a_t + theta1 a_{t-1}
    a_t     = sigma_t eps_t,   eps_t iid standardized innovation
    sigma^2_t = alpha0 + alpha1 a^2_{t-1} + beta1 sigma^2_{t-1}

with eps drawn from one of the families in `innovations`.  Estimation is
joint maximum likelihood over dynamics and innovation shape, seeded by a
two-stage Gaussian quasi-MLE.  The filter recursion lives in `kernels` so
the compiled path is shared between fitting and simulation.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from ._numdiff import numeric_hessian
from .errors import ConfigError, DataError, FitError
from .innovations import get_family
from .tailstats import (GpdFit, HillCurve, RankFit, excess_kurtosis,
                        gpd_tail_fit, hill_curve, rank_half_fit,
                        robust_kurtosis)

__all__ = [
    "ArmaGarchParams",
    "ModelFit",
    "ScenarioSet",
    "TailReport",
    "fit_arma_garch",
    "standardized_residuals",
    "simulate_ensemble",
    "joint_scenarios",
    "dynamic_tail_report",
    "ljung_box",
    "write_fit_json",
    "save_fit_state",
    "load_fit_state",
    "write_scenarios",
    "read_scenarios",
]

_MIN_OBS = 1000
_STATIONARITY_CAP = 0.9995
_BOUNDARY_TOL = 5e-4


@dataclass(frozen=True)
class ArmaGarchParams:
    phi0: float
    phi1: float
    theta1: float
    alpha0: float
    alpha1: float
    beta1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi0, self.phi1, self.theta1,
                         self.alpha0, self.alpha1, self.beta1])

    @property
    def persistence(self) -> float:
        return self.alpha1 + self.beta1


PARAM_NAMES = ("phi0", "phi1", "theta1", "alpha0", "alpha1", "beta1")


@dataclass
class ModelFit:
    """Joint MLE result for one return series."""

    params: ArmaGarchParams
    innovation: str
    innovation_params: tuple
    loglik: float
    aic: float
    bic: float
    aic_per_obs: float
    bic_per_obs: float
    n_obs: int
    n_eff: int
    residuals: np.ndarray       # standardized, t = 1..n-1
    sigma2: np.ndarray          # conditional variance, t = 0..n-1
    last_state: tuple           # (r_T, a_T, sigma2_T)
    se: dict = field(default_factory=dict)
    converged: bool = True
    boundary: bool = False
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return 6 + len(self.innovation_params)


def _filter(r, p: np.ndarray, sigma2_0: float):
    """Run the ARMA/GARCH recursions for a natural parameter vector."""
    return kernels.arma_garch_filter(
        r, p[0], p[1], p[2], p[3], p[4], p[5], 0.0, sigma2_0)


def _negloglik(r, p, shape, family, sigma2_0):
    if p[3] <= 0 or p[4] < 0 or p[5] < 0 or p[4] + p[5] >= 1.0:
        return 1e12
    if abs(p[1]) >= 1.0 or abs(p[2]) >= 1.0:
        return 1e12
    if shape and not family.valid(shape):
        return 1e12
    a, s2 = _filter(r, p, sigma2_0)
    s2 = s2[1:]
    if not np.all(np.isfinite(s2)) or np.any(s2 <= 0):
        return 1e12
    eps = a[1:] / np.sqrt(s2)
    with np.errstate(all="ignore"):
        ll = family.logpdf(eps, shape) - 0.5 * np.log(s2)
    total = float(np.sum(ll))
    return -total if np.isfinite(total) else 1e12


def _qmle_start(r, sigma2_0):
    """Two-stage start: Gaussian quasi-MLE over the six dynamics params."""
    normal = get_family("normal")
    v = float(np.var(r))
    acf1 = 0.0
    if r.size > 2:
        d = r - r.mean()
        denom = float(np.dot(d, d))
        if denom > 0:
            acf1 = float(np.dot(d[:-1], d[1:]) / denom)
    phi1 = float(np.clip(acf1, -0.9, 0.9))
    p0 = np.array([float(np.mean(r)) * (1.0 - phi1), phi1, 0.0,
                   v * 0.05, 0.05, 0.90])

    def nll(p):
        return _negloglik(r, p, (), normal, sigma2_0)

    scale = max(float(np.std(r)), 1e-12)
    bounds = [(-10 * scale, 10 * scale), (-0.999, 0.999), (-0.999, 0.999),
              (v * 1e-8, v * 10.0), (0.0, 0.999), (0.0, 0.999)]
    cons = [{"type": "ineq",
             "fun": lambda p: _STATIONARITY_CAP - p[4] - p[5]}]
    res = _slsqp(nll, p0, bounds, cons, maxiter=300)
    return res.x if np.isfinite(res.fun) and res.fun < 1e12 else p0


def _slsqp(nll, x0, bounds, cons, maxiter):
    with warnings.catch_warnings():
        # SLSQP probes bound-clipped points during line search; the
        # objective already guards every constraint violation
        warnings.filterwarnings("ignore", message=".*outside bounds.*",
                                category=RuntimeWarning)
        return minimize(nll, x0, method="SLSQP", bounds=bounds,
                        constraints=cons,
                        options={"maxiter": maxiter, "ftol": 1e-12})


def fit_arma_garch(returns, innovation: str = "normal",
                   compute_se: bool = True) -> ModelFit:
    """Fit the ARMA(1,1)-GARCH(1,1) model by joint maximum likelihood.

    The innovation shape parameters are estimated together with the six
    dynamics parameters.  Standard errors come from the observed
    information (numerical Hessian at the optimum); entries that cannot
    be resolved are NaN.
    """
    r_raw = np.asarray(returns, dtype=np.float64).ravel()
    if r_raw.size < _MIN_OBS:
        raise DataError(
            f"need at least {_MIN_OBS} observations for a stable fit, "
            f"got {r_raw.size}")
    if not np.all(np.isfinite(r_raw)):
        raise DataError("returns contain non-finite values")
    family = get_family(innovation)
    c = float(np.std(r_raw))
    if c <= 1e-15 * max(1.0, float(np.max(np.abs(r_raw)))):
        raise DataError("constant return series")
    # fit on unit-variance returns so every coordinate of the problem is
    # O(1); map phi0 and alpha0 back through c afterwards
    r = r_raw / c
    sigma2_0 = float(np.var(r))

    p_dyn = _qmle_start(r, sigma2_0)
    a, s2 = _filter(r, p_dyn, sigma2_0)
    eps0 = a[1:] / np.sqrt(s2[1:])
    shape0 = family.start(eps0)
    if shape0:
        shape0 = _shape_mle(eps0, family, shape0)

    x0 = np.concatenate([p_dyn, shape0])
    k_dyn = 6

    def nll(x):
        return _negloglik(r, x[:k_dyn], tuple(x[k_dyn:]), family, sigma2_0)

    v = sigma2_0
    bounds = [(-10.0, 10.0), (-0.999, 0.999), (-0.999, 0.999),
              (v * 1e-8, v * 10.0), (0.0, 0.999), (0.0, 0.999)]
    bounds += list(family.bounds)
    cons = [{"type": "ineq",
             "fun": lambda x: _STATIONARITY_CAP - x[4] - x[5]}]
    if family.name == "nig":
        # keep |beta| strictly inside (-alpha, alpha)
        cons.append({"type": "ineq",
                     "fun": lambda x: 0.999 * x[k_dyn] - abs(x[k_dyn + 1])})
    res = _slsqp(nll, x0, bounds, cons, maxiter=500)
    xhat = res.x
    fun = nll(xhat)
    if fun >= 1e12 or not np.isfinite(fun):
        raise FitError(
            "dynamics likelihood optimization failed",
            diagnostics={"start": x0.tolist(), "message": str(res.message)})
    if nll(x0) < fun:  # optimizer walked uphill; keep the better point
        xhat, fun = x0, nll(x0)

    shape = tuple(float(t) for t in xhat[k_dyn:])
    params = ArmaGarchParams(
        phi0=float(xhat[0]) * c, phi1=float(xhat[1]), theta1=float(xhat[2]),
        alpha0=float(xhat[3]) * c * c, alpha1=float(xhat[4]),
        beta1=float(xhat[5]))
    n_eff = r.size - 1
    loglik = -fun - n_eff * math.log(c)  # undo the unit-variance rescale
    k = k_dyn + len(shape)
    aic = 2.0 * k - 2.0 * loglik
    bic = k * math.log(n_eff) - 2.0 * loglik

    a, s2 = _filter(r, xhat[:k_dyn], sigma2_0)
    residuals = a[1:] / np.sqrt(s2[1:])
    boundary = (params.persistence > _STATIONARITY_CAP - _BOUNDARY_TOL
                or params.alpha1 <= 1e-6
                or float(xhat[3]) <= v * 2e-8)

    se = {}
    if compute_se:
        se = _standard_errors(nll, xhat, family)
        if "phi0" in se:
            se["phi0"] *= c
        if "alpha0" in se:
            se["alpha0"] *= c * c

    return ModelFit(
        params=params, innovation=family.name, innovation_params=shape,
        loglik=loglik, aic=aic, bic=bic,
        aic_per_obs=aic / n_eff, bic_per_obs=bic / n_eff,
        n_obs=r.size, n_eff=n_eff,
        residuals=residuals, sigma2=s2 * (c * c),
        last_state=(float(r_raw[-1]), float(a[-1]) * c,
                    float(s2[-1]) * c * c),
        se=se, converged=bool(res.success), boundary=boundary,
        diagnostics={"n_iter": int(res.get("nit", -1)),
                     "message": str(res.message)})


def _shape_mle(eps, family, shape0):
    def nll(s):
        lo_hi = family.bounds
        for v, (lo, hi) in zip(s, lo_hi):
            if not (lo <= v <= hi):
                return 1e12
        if family.name == "nig" and abs(s[1]) >= s[0]:
            return 1e12
        with np.errstate(all="ignore"):
            val = -float(np.sum(family.logpdf(eps, tuple(s))))
        return val if np.isfinite(val) else 1e12

    res = minimize(nll, np.asarray(shape0, dtype=np.float64),
                   method="Nelder-Mead",
                   options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 2000})
    return tuple(res.x) if res.fun < 1e12 else tuple(shape0)


def _standard_errors(nll, xhat, family) -> dict:
    names = PARAM_NAMES + tuple(family.param_names)
    se = {n: float("nan") for n in names}
    try:
        hess = numeric_hessian(nll, xhat)
        cov = np.linalg.inv(hess)
        d = np.diag(cov)
        for n, v in zip(names, d):
            se[n] = math.sqrt(v) if v > 0 else float("nan")
    except (np.linalg.LinAlgError, ValueError):
        pass
    return se


def standardized_residuals(fit: ModelFit) -> np.ndarray:
    """Residual sample eps_t = a_t / sigma_t for t = 1..n-1."""
    return fit.residuals


def ljung_box(x, lags: int = 10) -> tuple[float, float]:
    """Ljung-Box portmanteau statistic and its chi-square p-value."""
    from scipy.stats import chi2

    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.size
    if n <= lags + 1:
        raise DataError(f"need more than {lags + 1} points, got {n}")
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0:
        raise DataError("constant series has no autocorrelation")
    q = 0.0
    for k in range(1, lags + 1):
        rho = float(np.dot(d[:-k], d[k:]) / denom)
        q += rho * rho / (n - k)
    q *= n * (n + 2.0)
    return q, float(chi2.sf(q, lags))


@dataclass
class ScenarioSet:
    """Ensemble of simulated return paths from a fitted model."""

    returns: np.ndarray         # (n_scenarios, horizon)
    sigma2: np.ndarray          # (n_scenarios, horizon)
    horizon: int
    n_scenarios: int
    seed: int
    innovation: str
    innovation_params: tuple

    @property
    def terminal(self) -> np.ndarray:
        return self.returns[:, -1]


def simulate_ensemble(fit: ModelFit, n_scenarios: int = 10_000,
                      horizon: int = 1, seed: int = 0,
                      innovations: np.ndarray | None = None) -> ScenarioSet:
    """Propagate the fitted recursion forward under fresh innovations.

    Draws are generated from a counter-based Philox stream keyed by
    `seed`, so the ensemble is bit-reproducible for a fixed seed.  Pass
    an explicit `innovations` matrix (n_scenarios x horizon) to override
    the draws; all-zero innovations give the deterministic forecast.
    """
    if n_scenarios < 1 or horizon < 1:
        raise ConfigError(
            f"n_scenarios and horizon must be positive, got "
            f"{n_scenarios}, {horizon}")
    family = get_family(fit.innovation)
    if innovations is None:
        rng = np.random.Generator(np.random.Philox(seed))
        eps = family.sample(rng, (n_scenarios, horizon),
                            fit.innovation_params)
    else:
        eps = np.asarray(innovations, dtype=np.float64)
        if eps.shape != (n_scenarios, horizon):
            raise ConfigError(
                f"innovations shape {eps.shape} does not match "
                f"(n_scenarios, horizon) = ({n_scenarios}, {horizon})")
    p = fit.params
    r_last, a_last, s2_last = fit.last_state
    returns, sigma2 = kernels.simulate_paths(
        np.ascontiguousarray(eps), r_last, a_last, s2_last,
        p.phi0, p.phi1, p.theta1, p.alpha0, p.alpha1, p.beta1)
    return ScenarioSet(returns=returns, sigma2=sigma2, horizon=horizon,
                       n_scenarios=n_scenarios, seed=seed,
                       innovation=fit.innovation,
                       innovation_params=fit.innovation_params)


def joint_scenarios(fits: list[ModelFit], n_scenarios: int = 10_000,
                    horizon: int = 1, seed: int = 0) -> np.ndarray:
    """Dependence-preserving one-step-ahead scenarios for several series.

    Bootstraps whole cross-sectional rows of the standardized residual
    matrix so the empirical co-movement of the innovations survives,
    then pushes each column through its own fitted recursion.  Returns
    the terminal-step return matrix, shape (n_scenarios, len(fits)).
    """
    if not fits:
        raise ConfigError("need at least one fitted model")
    lengths = {f.residuals.size for f in fits}
    if len(lengths) != 1:
        raise DataError(
            f"residual series are not aligned: lengths {sorted(lengths)}")
    t_len = lengths.pop()
    resid = np.column_stack([f.residuals for f in fits])
    rng = np.random.Generator(np.random.Philox(seed))
    rows = rng.integers(0, t_len, size=(n_scenarios, horizon))
    out = np.empty((n_scenarios, len(fits)))
    for k, fit in enumerate(fits):
        eps = resid[rows, k]
        scen = simulate_ensemble(fit, n_scenarios, horizon, seed=seed,
                                 innovations=eps)
        out[:, k] = scen.terminal
    return out


@dataclass
class TailReport:
    """Heavy-tail diagnostics for a pooled scenario sample."""

    gpd: GpdFit
    hill: HillCurve
    rank: RankFit
    excess_kurtosis: float
    robust_kurtosis: float
    n: int


def dynamic_tail_report(scenarios, tail_q: float = 0.95) -> TailReport:
    """Static tail battery applied to a simulated ensemble."""
    x = np.asarray(scenarios, dtype=np.float64).ravel()
    if x.size < 100:
        raise DataError(f"need at least 100 scenario values, got {x.size}")
    if np.ptp(x) == 0:
        raise DataError("degenerate ensemble: all scenario values equal")
    return TailReport(
        gpd=gpd_tail_fit(x, q=tail_q),
        hill=hill_curve(x),
        rank=rank_half_fit(x),
        excess_kurtosis=excess_kurtosis(x),
        robust_kurtosis=robust_kurtosis(x),
        n=x.size)


def write_fit_json(fit: ModelFit, path) -> None:
    doc = {
        "model": "arma(1,1)-garch(1,1)",
        "innovation": fit.innovation,
        "params": {n: getattr(fit.params, n) for n in PARAM_NAMES},
        "innovation_params": dict(zip(
            get_family(fit.innovation).param_names, fit.innovation_params)),
        "loglik": fit.loglik,
        "aic": fit.aic, "bic": fit.bic,
        "aic_per_obs": fit.aic_per_obs, "bic_per_obs": fit.bic_per_obs,
        "n_obs": fit.n_obs, "n_eff": fit.n_eff,
        "se": fit.se,
        "converged": fit.converged, "boundary": fit.boundary,
        "last_state": list(fit.last_state),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_fit_state(fit: ModelFit, path) -> None:
    """Persist everything simulation needs to restart from this fit.

    Binary companion to the JSON report: carries the residual and
    variance arrays, which the report omits.
    """
    np.savez(
        path,
        params=fit.params.as_array(),
        innovation=np.str_(fit.innovation),
        innovation_params=np.asarray(fit.innovation_params,
                                     dtype=np.float64),
        loglik=fit.loglik, aic=fit.aic, bic=fit.bic,
        aic_per_obs=fit.aic_per_obs, bic_per_obs=fit.bic_per_obs,
        n_obs=fit.n_obs, n_eff=fit.n_eff,
        residuals=fit.residuals, sigma2=fit.sigma2,
        last_state=np.asarray(fit.last_state, dtype=np.float64),
        converged=fit.converged, boundary=fit.boundary)


def load_fit_state(path) -> ModelFit:
    """Rebuild a ModelFit from `save_fit_state` output.

    Standard errors and fit diagnostics live only in the JSON report;
    the loaded object carries empty dicts for them.
    """
    with np.load(path) as z:
        p = z["params"]
        return ModelFit(
            params=ArmaGarchParams(*(float(v) for v in p)),
            innovation=str(z["innovation"]),
            innovation_params=tuple(float(v)
                                    for v in z["innovation_params"]),
            loglik=float(z["loglik"]), aic=float(z["aic"]),
            bic=float(z["bic"]),
            aic_per_obs=float(z["aic_per_obs"]),
            bic_per_obs=float(z["bic_per_obs"]),
            n_obs=int(z["n_obs"]), n_eff=int(z["n_eff"]),
            residuals=z["residuals"].copy(), sigma2=z["sigma2"].copy(),
            last_state=tuple(float(v) for v in z["last_state"]),
            converged=bool(z["converged"]), boundary=bool(z["boundary"]))


def write_scenarios(scen: ScenarioSet, basepath, sample_rows: int = 100):
    """Persist an ensemble: full matrix as .npy plus a CSV preview."""
    base = str(basepath)
    npy = base + ".npy"
    csv = base + "_sample.csv"
    np.save(npy, scen.returns)
    m = min(sample_rows, scen.n_scenarios)
    with open(csv, "w") as fh:
        fh.write(",".join(f"h{j + 1}" for j in range(scen.horizon)) + "\n")
        for i in range(m):
            fh.write(",".join(f"{v:.12e}" for v in scen.returns[i]) + "\n")
    return npy, csv


def read_scenarios(npy_path) -> np.ndarray:
    return np.load(npy_path)
