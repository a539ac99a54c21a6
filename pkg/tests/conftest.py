import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))


def make_book(path, n=13500, levels=3, seed=7, t0=34200.0, t1=57000.0):
    """Write a synthetic order book file: heavy-tailed mid walk with
    jittered level offsets, 1 + 4*levels columns, integer ticks."""
    rng = np.random.Generator(np.random.Philox(seed))
    gaps = rng.exponential(1.0, n)
    times = t0 + np.cumsum(gaps) / gaps.sum() * (t1 - t0)
    incr = 2.2e-4 * rng.standard_t(4, n)
    mid = np.rint(2_000_000.0 * np.exp(np.cumsum(incr))).astype(np.int64)
    a_off = rng.integers(1, 9, n)
    b_off = rng.integers(1, 9, n)
    cols = [times]
    for lv in range(levels):
        if lv:
            a_off = a_off + rng.integers(1, 6, n)
            b_off = b_off + rng.integers(1, 6, n)
        cols += [mid + a_off, rng.integers(1, 500, n),
                 mid - b_off, rng.integers(1, 500, n)]
    mat = np.column_stack(cols)
    with open(path, "w", encoding="utf-8") as fh:
        for row in mat:
            fh.write(f"{row[0]:.9f}," +
                     ",".join(str(int(v)) for v in row[1:]) + "\n")
    return path
