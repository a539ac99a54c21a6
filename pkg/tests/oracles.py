"""Independent brute-force reference implementations used by the tests.

Everything here is written the slow, obvious way (explicit loops,
exact-fraction arithmetic, full enumeration) and deliberately shares no
code with the package, so agreement between the two routes is evidence
rather than tautology.
"""

from __future__ import annotations

import math
from fractions import Fraction


def brute_quantile(values, p):
    """Plotting-position quantile with positions (i - 0.5)/n, by hand."""
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 1:
        return xs[0]
    positions = [(i + 0.5) / n for i in range(n)]
    if p <= positions[0]:
        return xs[0]
    if p >= positions[-1]:
        return xs[-1]
    for i in range(n - 1):
        if positions[i] <= p <= positions[i + 1]:
            w = (p - positions[i]) / (positions[i + 1] - positions[i])
            return xs[i] + w * (xs[i + 1] - xs[i])
    raise AssertionError("unreachable")


def brute_var(values, u=0.05):
    return -brute_quantile(values, u)


def brute_avar(values, beta=0.05):
    q = brute_quantile(values, beta)
    total = sum(max(q - float(x), 0.0) for x in values)
    return total / len(list(values)) / beta - q


def brute_rachev(values, beta=0.05, gamma=0.05):
    neg = [-float(x) for x in values]
    return brute_avar(neg, beta) / brute_avar(values, gamma)


def brute_covar(x, y, q=0.05):
    t = brute_quantile(x, q)
    sel = [yi for xi, yi in zip(x, y) if xi <= t]
    return brute_quantile(sel, q)


def brute_coetl(x, y, q=0.05):
    t = brute_quantile(x, q)
    sel = [yi for xi, yi in zip(x, y) if xi <= t]
    c = brute_quantile(sel, q)
    tail = [v for v in sel if v <= c]
    return sum(tail) / len(tail)


def brute_coes(x, y, q=0.05):
    t = brute_quantile(x, q)
    sel = [yi for xi, yi in zip(x, y) if xi <= t]
    c = brute_quantile(sel, q)
    return sum(v for v in sel if v <= c) / len(sel)


def exact_side_vwap(levels, depth):
    """Volume-weighted average price over the top levels, exact fractions.

    levels: [(price_ticks, size), ...]; returns a Fraction in USD.
    """
    notional = sum(Fraction(px) * sz for px, sz in levels[:depth])
    shares = sum(sz for _, sz in levels[:depth])
    return notional / shares / 10_000


def exact_spread(asks, bids, depth):
    return exact_side_vwap(asks, depth) - exact_side_vwap(bids, depth)


def exact_mid(asks, bids, depth):
    return (exact_side_vwap(asks, depth) + exact_side_vwap(bids, depth)) / 2


def loop_arma_garch_filter(r, phi0, phi1, theta1, alpha0, alpha1, beta1,
                           a0, sigma2_0):
    """Plain-Python ARMA(1,1)-GARCH(1,1) filter."""
    n = len(r)
    a = [0.0] * n
    s2 = [0.0] * n
    a[0] = a0
    s2[0] = sigma2_0
    for t in range(1, n):
        a[t] = r[t] - phi0 - phi1 * r[t - 1] - theta1 * a[t - 1]
        s2[t] = alpha0 + alpha1 * a[t - 1] ** 2 + beta1 * s2[t - 1]
    return a, s2


def loop_simulate_paths(eps, r_last, a_last, s2_last,
                        phi0, phi1, theta1, alpha0, alpha1, beta1):
    """Plain-Python scenario propagation over an innovation matrix."""
    out_r = []
    out_s2 = []
    for row in eps:
        r_prev, a_prev, s2_prev = r_last, a_last, s2_last
        rs, ss = [], []
        for e in row:
            s2 = alpha0 + alpha1 * a_prev ** 2 + beta1 * s2_prev
            a = math.sqrt(s2) * e
            r = phi0 + phi1 * r_prev + a + theta1 * a_prev
            rs.append(r)
            ss.append(s2)
            r_prev, a_prev, s2_prev = r, a, s2
        out_r.append(rs)
        out_s2.append(ss)
    return out_r, out_s2


def brute_hill(sample_desc, k):
    """Hill estimate at one k from a descending positive sample."""
    top = sample_desc[: k + 1]
    mean_log = sum(math.log(v) for v in top[:k]) / k
    return 1.0 / (mean_log - math.log(top[k]))


def brute_excess_kurtosis(values):
    n = len(values)
    mean = sum(values) / n
    m2 = sum((v - mean) ** 2 for v in values) / n
    m4 = sum((v - mean) ** 4 for v in values) / n
    return m4 / m2 ** 2 - 3.0


def brute_trimmed_tail_means(values, frac):
    """(upper, lower) means of the top/bottom ceil(frac*n) order stats."""
    xs = sorted(values)
    k = math.ceil(frac * len(xs))
    lower = sum(xs[:k]) / k
    upper = sum(xs[-k:]) / k
    return upper, lower
