"""Timing comparison of the numba kernels against the numpy fallbacks.

Runs both implementations of the likelihood filter and the scenario
propagation loop over a range of problem sizes, checks they agree, and
prints a table of best-of-N wall times.

    python3 benchmarks/bench_kernels.py [--quick] [--repeats N]
"""

import argparse
import time

import numpy as np

from deepspread import kernels

PARAMS = dict(phi0=1e-5, phi1=0.12, theta1=-0.08,
              alpha0=1e-6, alpha1=0.05, beta1=0.90)


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_filter(n, rng, repeats):
    r = 1e-3 * rng.standard_normal(n)
    args = (r, PARAMS["phi0"], PARAMS["phi1"], PARAMS["theta1"],
            PARAMS["alpha0"], PARAMS["alpha1"], PARAMS["beta1"],
            0.0, 1e-6)
    a_np, s_np = kernels.arma_garch_filter_numpy(*args)
    rows = {"numpy": best_of(lambda: kernels.arma_garch_filter_numpy(*args),
                             repeats)}
    if kernels.NUMBA_AVAILABLE:
        a_nb, s_nb = kernels.arma_garch_filter_numba(*args)
        err = max(np.abs(a_np - a_nb).max(), np.abs(s_np - s_nb).max())
        assert err < 1e-10, f"backend mismatch: {err}"
        rows["numba"] = best_of(
            lambda: kernels.arma_garch_filter_numba(*args), repeats)
    return rows


def bench_simulate(n_scen, horizon, rng, repeats):
    eps = rng.standard_normal((n_scen, horizon))
    args = (eps, 1e-4, 5e-5, 1e-6, PARAMS["phi0"], PARAMS["phi1"],
            PARAMS["theta1"], PARAMS["alpha0"], PARAMS["alpha1"],
            PARAMS["beta1"])
    r_np, s_np = kernels.simulate_paths_numpy(*args)
    rows = {"numpy": best_of(lambda: kernels.simulate_paths_numpy(*args),
                             repeats)}
    if kernels.NUMBA_AVAILABLE:
        r_nb, s_nb = kernels.simulate_paths_numba(*args)
        err = max(np.abs(r_np - r_nb).max(), np.abs(s_np - s_nb).max())
        assert err < 1e-12, f"backend mismatch: {err}"
        rows["numba"] = best_of(
            lambda: kernels.simulate_paths_numba(*args), repeats)
    return rows


def fmt_ms(seconds):
    return f"{seconds * 1e3:10.3f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true",
                    help="smaller sizes and fewer repeats")
    ap.add_argument("--repeats", type=int, default=None,
                    help="timing repeats per case (best is kept)")
    args = ap.parse_args()

    repeats = args.repeats or (3 if args.quick else 7)
    filter_sizes = [10_000, 100_000] if args.quick else \
        [10_000, 100_000, 1_000_000]
    sim_sizes = [(10_000, 1), (10_000, 20)] if args.quick else \
        [(10_000, 1), (10_000, 20), (100_000, 20)]

    print(f"active backend: {kernels.BACKEND} "
          f"(numba available: {kernels.NUMBA_AVAILABLE})")
    rng = np.random.Generator(np.random.Philox(0))

    if kernels.NUMBA_AVAILABLE:
        # trigger JIT compilation outside the timed region
        small = rng.standard_normal(64)
        kernels.arma_garch_filter_numba(small, *[0.0] * 5, 0.9, 0.0, 1e-6)
        kernels.simulate_paths_numba(small.reshape(8, 8), 0.0, 0.0, 1e-6,
                                     *[0.0] * 5, 0.9)

    header = f"{'case':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>9}"
    print()
    print(header)
    print("-" * len(header))
    for n in filter_sizes:
        rows = bench_filter(n, rng, repeats)
        speed = (f"{rows['numpy'] / rows['numba']:8.1f}x"
                 if "numba" in rows else "      --")
        print(f"{'likelihood filter n=%d' % n:<28}"
              f"{fmt_ms(rows['numpy']):>12}"
              f"{fmt_ms(rows.get('numba', float('nan'))):>12}{speed:>9}")
    for n_scen, horizon in sim_sizes:
        rows = bench_simulate(n_scen, horizon, rng, repeats)
        speed = (f"{rows['numpy'] / rows['numba']:8.1f}x"
                 if "numba" in rows else "      --")
        case = f"simulate {n_scen}x{horizon}"
        print(f"{case:<28}{fmt_ms(rows['numpy']):>12}"
              f"{fmt_ms(rows.get('numba', float('nan'))):>12}{speed:>9}")


if __name__ == "__main__":
    main()
