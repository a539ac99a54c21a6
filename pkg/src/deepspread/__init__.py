"""Depth-resolved order book spread analytics.

The package builds total-market order book spread indices (TMOBBAS) and
global mid-prices (GMP) from level-aggregated limit order book snapshots,
characterizes the heavy tails of their log returns, fits ARMA-GARCH
dynamics with flexible innovation laws, prices European options under a
double inverse-Gaussian subordinated log-price model, and computes
Rachev ratios and conditional (CoVaR-family) systemic risk measures.
"""

__version__ = "0.1.0"

from . import (errors, garch, indices, innovations, lob, ndig, pipeline,
               pricing, risk, tailstats)

__all__ = ["errors", "garch", "indices", "innovations", "lob", "ndig",
           "pipeline", "pricing", "risk", "tailstats", "__version__"]
