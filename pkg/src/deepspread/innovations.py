"""Standardized innovation laws for the conditional dynamics model.

Each family is reparameterized so every member has mean 0 and variance 1
regardless of its shape parameters; the GARCH filter then owns all scale.
Families expose log-density, sampling, shape-parameter MLE on residual
samples, and analytic excess kurtosis (used by moment checks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, k1e
from scipy.stats import gennorm, invgauss
from scipy.stats import t as student_t

from .errors import FitError

__all__ = [
    "NigParams",
    "Normal",
    "StudentT",
    "Ged",
    "Nig",
    "FAMILIES",
    "get_family",
    "fit_nig",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NigParams:
    """Four-parameter normal inverse Gaussian law.

    Density (Barndorff-Nielsen form, K1 the modified Bessel function of
    the second kind):

        f(x) = alpha*delta/pi * K1(alpha*q(x))/q(x)
               * exp(delta*g + beta*(x - mu)),
        q(x) = sqrt(delta^2 + (x-mu)^2),  g = sqrt(alpha^2 - beta^2)

    Mean mu + delta*beta/g, variance delta*alpha^2/g^3.
    """

    alpha: float
    beta: float
    mu: float
    delta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.delta <= 0 or abs(self.beta) >= self.alpha:
            raise ValueError(
                f"invalid NIG parameters alpha={self.alpha}, "
                f"beta={self.beta}, delta={self.delta}")

    @property
    def gam(self) -> float:
        return math.sqrt(self.alpha ** 2 - self.beta ** 2)

    @property
    def mean(self) -> float:
        return self.mu + self.delta * self.beta / self.gam

    @property
    def variance(self) -> float:
        return self.delta * self.alpha ** 2 / self.gam ** 3

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        dx = x - self.mu
        q = np.sqrt(self.delta ** 2 + dx ** 2)
        aq = self.alpha * q
        # K1(z) = k1e(z) * exp(-z) keeps the tail stable
        return (math.log(self.alpha * self.delta / math.pi)
                + self.delta * self.gam + self.beta * dx
                + np.log(k1e(aq)) - aq - np.log(q))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        # mixture representation: X | Z ~ N(mu + beta Z, Z) with
        # Z inverse Gaussian, mean delta/gam and shape delta^2
        d, g = self.delta, self.gam
        z = invgauss.rvs(1.0 / (d * g), scale=d * d, size=size,
                         random_state=rng)
        return self.mu + self.beta * z + np.sqrt(z) * rng.standard_normal(size)


def standardized_nig(alpha: float, beta: float) -> NigParams:
    """The unique NIG with given (alpha, beta) and mean 0, variance 1."""
    if alpha <= 0 or abs(beta) >= alpha:
        raise ValueError(f"need 0 < |beta| < alpha, got {alpha}, {beta}")
    g = math.sqrt(alpha ** 2 - beta ** 2)
    delta = g ** 3 / alpha ** 2
    mu = -delta * beta / g
    return NigParams(alpha=alpha, beta=beta, mu=mu, delta=delta)


class Normal:
    """Unit normal innovations (no shape parameters)."""

    name = "normal"
    param_names: tuple[str, ...] = ()
    bounds: tuple = ()

    @staticmethod
    def valid(shape=()):
        return True

    @staticmethod
    def logpdf(x, shape=()):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (x * x + _LOG_2PI)

    @staticmethod
    def sample(rng, size, shape=()):
        return rng.standard_normal(size)

    @staticmethod
    def start(residuals):
        return ()

    @staticmethod
    def excess_kurtosis(shape=()):
        return 0.0


class StudentT:
    """Student-t scaled to unit variance; shape = (nu,), nu > 2."""

    name = "student_t"
    param_names = ("nu",)
    bounds = ((2.1, 200.0),)

    @staticmethod
    def valid(shape):
        return shape[0] > 2.0

    @staticmethod
    def _scale(nu):
        return math.sqrt((nu - 2.0) / nu)

    @classmethod
    def logpdf(cls, x, shape):
        (nu,) = shape
        c = cls._scale(nu)
        x = np.asarray(x, dtype=np.float64) / c
        return (gammaln((nu + 1) / 2) - gammaln(nu / 2)
                - 0.5 * math.log(nu * math.pi)
                - (nu + 1) / 2 * np.log1p(x * x / nu) - math.log(c))

    @classmethod
    def sample(cls, rng, size, shape):
        (nu,) = shape
        return student_t.rvs(nu, size=size, random_state=rng) * cls._scale(nu)

    @staticmethod
    def start(residuals):
        k = max(float(np.mean(residuals ** 4)) - 3.0, 0.05)
        nu = 4.0 + 6.0 / k  # invert excess kurtosis 6/(nu-4)
        return (float(np.clip(nu, 2.5, 100.0)),)

    @staticmethod
    def excess_kurtosis(shape):
        (nu,) = shape
        return 6.0 / (nu - 4.0) if nu > 4.0 else math.inf


class Ged:
    """Generalized error (exponential power) law, unit variance; shape=(nu,)."""

    name = "ged"
    param_names = ("nu",)
    bounds = ((0.3, 5.0),)

    @staticmethod
    def valid(shape):
        return shape[0] > 0.0

    @staticmethod
    def _scale(nu):
        return math.exp(0.5 * (gammaln(1.0 / nu) - gammaln(3.0 / nu)))

    @classmethod
    def logpdf(cls, x, shape):
        (nu,) = shape
        c = cls._scale(nu)
        x = np.asarray(x, dtype=np.float64)
        return gennorm.logpdf(x / c, nu) - math.log(c)

    @classmethod
    def sample(cls, rng, size, shape):
        (nu,) = shape
        return gennorm.rvs(nu, size=size, random_state=rng) * cls._scale(nu)

    @staticmethod
    def start(residuals):
        return (1.5,)

    @staticmethod
    def excess_kurtosis(shape):
        (nu,) = shape
        return math.exp(gammaln(5.0 / nu) + gammaln(1.0 / nu)
                        - 2.0 * gammaln(3.0 / nu)) - 3.0


class Nig:
    """Standardized normal inverse Gaussian; shape = (alpha, beta)."""

    name = "nig"
    param_names = ("alpha", "beta")
    bounds = ((0.05, 100.0), (-99.9, 99.9))

    @staticmethod
    def valid(shape):
        alpha, beta = shape
        return alpha > 0 and abs(beta) < alpha

    @staticmethod
    def logpdf(x, shape):
        alpha, beta = shape
        return standardized_nig(alpha, beta).logpdf(x)

    @staticmethod
    def sample(rng, size, shape):
        alpha, beta = shape
        return standardized_nig(alpha, beta).sample(rng, size)

    @staticmethod
    def start(residuals):
        k = max(float(np.mean(residuals ** 4)) - 3.0, 0.05)
        # symmetric moment inversion: excess kurtosis = 3/(delta*gam) = 3/alpha^2
        alpha = math.sqrt(3.0 / k)
        return (float(np.clip(alpha, 0.2, 50.0)), 0.0)

    @staticmethod
    def excess_kurtosis(shape):
        alpha, beta = shape
        p = standardized_nig(alpha, beta)
        return 3.0 * (1.0 + 4.0 * (beta / alpha) ** 2) / (p.delta * p.gam)


FAMILIES = {f.name: f for f in (Normal, StudentT, Ged, Nig)}


def get_family(name: str):
    try:
        return FAMILIES[name.lower()]
    except KeyError:
        raise ValueError(
            f"unknown innovation family {name!r}; "
            f"choose from {sorted(FAMILIES)}") from None


def fit_nig(residuals, conf_start: tuple | None = None) -> NigParams:
    """MLE of the mean-0/variance-1 NIG family on a residual sample.

    Optimizes (log alpha, atanh(beta/alpha)) so the |beta| < alpha
    constraint can never be violated.  On optimizer failure raises a
    FitError carrying moment-based fallback estimates.
    """
    x = np.asarray(residuals, dtype=np.float64).ravel()
    if x.size < 10:
        raise FitError("need at least 10 residuals for the NIG fit")

    def unpack(p):
        alpha = math.exp(p[0])
        beta = alpha * math.tanh(p[1])
        return alpha, beta

    def nll(p):
        alpha, beta = unpack(p)
        try:
            val = -standardized_nig(alpha, beta).logpdf(x).sum()
        except (ValueError, FloatingPointError):
            return 1e12
        return val if np.isfinite(val) else 1e12

    a0, b0 = Nig.start(x)
    skew = float(np.mean(x ** 3))
    start = np.array([math.log(a0), math.atanh(np.clip(skew / 3.0,
                                                       -0.9, 0.9))])
    if conf_start is not None:
        start = np.asarray(conf_start, dtype=np.float64)
    res = minimize(nll, start, method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    alpha, beta = unpack(res.x)
    if not res.success or not np.isfinite(res.fun) or res.fun >= 1e12:
        raise FitError(
            "NIG likelihood optimization failed",
            diagnostics={"fallback_alpha": a0, "fallback_beta": b0,
                         "message": res.message})
    return standardized_nig(alpha, beta)
