"""Hot numerical kernels with numba acceleration and a numpy fallback.

Two recursions dominate the package runtime: the ARMA(1,1)-GARCH(1,1)
filter evaluated inside the likelihood optimizer, and the scenario
propagation loop of the Monte Carlo engine.  Both are implemented twice:

* a numba ``@njit`` version compiled on first use, and
* a vectorized numpy/scipy version with identical semantics.

Set the environment variable ``DEEPSPREAD_NO_NUMBA=1`` before import to
force the numpy path (it is also selected automatically when numba is
missing or fails to import).  ``BACKEND`` reports which path is live.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "BACKEND",
    "NUMBA_AVAILABLE",
    "arma_garch_filter",
    "arma_garch_filter_numpy",
    "simulate_paths",
    "simulate_paths_numpy",
]

_FORCE_NUMPY = os.environ.get("DEEPSPREAD_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        return wrap


def arma_garch_filter_numpy(r, phi0, phi1, theta1, alpha0, alpha1, beta1,
                            a0, sigma2_0):
    """Run the ARMA(1,1)-GARCH(1,1) filter over a return series.

    Innovations a_t = r_t - phi0 - phi1 r_{t-1} - theta1 a_{t-1} and
    conditional variances sigma2_t = alpha0 + alpha1 a_{t-1}^2 +
    beta1 sigma2_{t-1}, both seeded with (a0, sigma2_0) at index 0.
    Entry 0 of each output is the seed itself; model-implied values
    start at index 1.

    Returns (a, sigma2) as float64 arrays of the same length as r.
    """
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[0]
    a = np.empty(n)
    sigma2 = np.empty(n)
    a[0] = a0
    sigma2[0] = sigma2_0
    if n == 1:
        return a, sigma2
    # a_t = c_t - theta1 a_{t-1} is linear, so one IIR pass does it.
    c = r[1:] - phi0 - phi1 * r[:-1]
    a[1:] = lfilter([1.0], [1.0, theta1], c, zi=np.array([-theta1 * a0]))[0]
    u = alpha0 + alpha1 * a[:-1] ** 2
    sigma2[1:] = lfilter([1.0], [1.0, -beta1], u,
                         zi=np.array([beta1 * sigma2_0]))[0]
    return a, sigma2


@njit(nogil=True, cache=True)
def _arma_garch_filter_nb(r, phi0, phi1, theta1, alpha0, alpha1, beta1,
                          a0, sigma2_0):  # pragma: no cover - numba path
    n = r.shape[0]
    a = np.empty(n)
    sigma2 = np.empty(n)
    a[0] = a0
    sigma2[0] = sigma2_0
    for t in range(1, n):
        a[t] = r[t] - phi0 - phi1 * r[t - 1] - theta1 * a[t - 1]
        sigma2[t] = alpha0 + alpha1 * a[t - 1] ** 2 + beta1 * sigma2[t - 1]
    return a, sigma2


def arma_garch_filter_numba(r, phi0, phi1, theta1, alpha0, alpha1, beta1,
                            a0, sigma2_0):
    r = np.ascontiguousarray(r, dtype=np.float64)
    return _arma_garch_filter_nb(r, phi0, phi1, theta1, alpha0, alpha1,
                                 beta1, a0, sigma2_0)


def simulate_paths_numpy(eps, r_last, a_last, sigma2_last,
                         phi0, phi1, theta1, alpha0, alpha1, beta1):
    """Propagate fitted dynamics forward over a matrix of innovations.

    eps has shape (scenarios, horizon); draws are consumed column by
    column so every scenario advances through the same recursion started
    from the observed terminal state (r_last, a_last, sigma2_last).

    Returns (returns, sigma2) matrices of the same shape as eps.
    """
    eps = np.asarray(eps, dtype=np.float64)
    n_scen, horizon = eps.shape
    out_r = np.empty((n_scen, horizon))
    out_s2 = np.empty((n_scen, horizon))
    r_prev = np.full(n_scen, float(r_last))
    a_prev = np.full(n_scen, float(a_last))
    s2_prev = np.full(n_scen, float(sigma2_last))
    for h in range(horizon):
        s2 = alpha0 + alpha1 * a_prev ** 2 + beta1 * s2_prev
        a = np.sqrt(s2) * eps[:, h]
        r = phi0 + phi1 * r_prev + a + theta1 * a_prev
        out_r[:, h] = r
        out_s2[:, h] = s2
        r_prev, a_prev, s2_prev = r, a, s2
    return out_r, out_s2


@njit(nogil=True, cache=True)
def _simulate_paths_nb(eps, r_last, a_last, sigma2_last,
                       phi0, phi1, theta1, alpha0, alpha1,
                       beta1):  # pragma: no cover - numba path
    n_scen, horizon = eps.shape
    out_r = np.empty((n_scen, horizon))
    out_s2 = np.empty((n_scen, horizon))
    for i in range(n_scen):
        r_prev = r_last
        a_prev = a_last
        s2_prev = sigma2_last
        for h in range(horizon):
            s2 = alpha0 + alpha1 * a_prev * a_prev + beta1 * s2_prev
            a = np.sqrt(s2) * eps[i, h]
            r = phi0 + phi1 * r_prev + a + theta1 * a_prev
            out_r[i, h] = r
            out_s2[i, h] = s2
            r_prev = r
            a_prev = a
            s2_prev = s2
    return out_r, out_s2


def simulate_paths_numba(eps, r_last, a_last, sigma2_last,
                         phi0, phi1, theta1, alpha0, alpha1, beta1):
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    return _simulate_paths_nb(eps, float(r_last), float(a_last),
                              float(sigma2_last), phi0, phi1, theta1,
                              alpha0, alpha1, beta1)


if NUMBA_AVAILABLE and not _FORCE_NUMPY:
    BACKEND = "numba"
    arma_garch_filter = arma_garch_filter_numba
    simulate_paths = simulate_paths_numba
else:
    BACKEND = "numpy"
    arma_garch_filter = arma_garch_filter_numpy
    simulate_paths = simulate_paths_numpy
