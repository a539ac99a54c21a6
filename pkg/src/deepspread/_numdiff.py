"""Small finite-difference helpers for observed-information matrices."""

from __future__ import annotations

import numpy as np

__all__ = ["numeric_hessian"]


def numeric_hessian(f, x, rel_step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function at x.

    Step sizes scale with the magnitude of each coordinate, floored so
    parameters near zero still get a usable step.
    """
    x = np.asarray(x, dtype=np.float64)
    k = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    hess = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        hess[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                f(x + ei + ej) - f(x + ei - ej)
                - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return hess
