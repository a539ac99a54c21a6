"""Command line front end for the analytics pipeline.

Each pipeline stage is a subcommand; `run-all` executes the full chain
with digest-based skipping of up-to-date stages.  Options mirror the
config file schema and override it, so a config file is optional: a run
can be assembled entirely from flags, and a zero-flag run needs only
`--book TICKER=PATH`.

Exit codes: 0 success, 2 configuration problem, 3 data problem,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, DataError, NumericalError
from .pipeline import STAGES, config_from_dict, run

__all__ = ["main", "build_parser"]


def _parse_book(spec: str):
    ticker, sep, path = spec.partition("=")
    if not sep or not ticker or not path:
        raise argparse.ArgumentTypeError(
            f"expected TICKER=PATH, got {spec!r}")
    return ticker, path


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(part) for part in text.split(",") if part != ""]
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"expected comma-separated {conv.__name__} values, "
                f"got {text!r}")
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", metavar="FILE",
                   help="YAML or JSON config file; flags override it")
    g.add_argument("--book", metavar="TICKER=PATH", type=_parse_book,
                   action="append", default=[],
                   help="order book csv for one ticker (repeatable)")
    g.add_argument("--out-dir", metavar="DIR",
                   help="output directory (default: out)")
    g.add_argument("--depths", type=_csv_list(int), metavar="D1,D2,...",
                   help="book depths to analyze (subset of 1..10)")
    g.add_argument("--kinds", type=_csv_list(str), metavar="K1,K2",
                   help="index kinds: tmobbas, gmp")
    g.add_argument("--burn-in-fraction", type=float, metavar="F",
                   help="fraction of the session dropped at the open")
    g.add_argument("--tail-fraction", type=float, metavar="F",
                   help="upper-tail mass used for threshold fits")
    g.add_argument("--innovation", metavar="NAME",
                   help="innovation family: normal, t, ged, nig")
    g.add_argument("--n-scenarios", type=int, metavar="N",
                   help="simulated scenarios per series")
    g.add_argument("--horizon", type=int, metavar="H",
                   help="simulation horizon in steps")
    g.add_argument("--seed", type=int, metavar="S",
                   help="seed for every stochastic stage")
    g.add_argument("--rachev-beta", type=float, metavar="B",
                   help="upper tail level of the gain/loss ratio")
    g.add_argument("--rachev-gamma", type=float, metavar="G",
                   help="lower tail level of the gain/loss ratio")

    p = common.add_argument_group("pricing")
    p.add_argument("--pricing-depths", type=_csv_list(int),
                   metavar="D1,...", help="depths to price options for")
    p.add_argument("--damping", type=float, metavar="A",
                   help="FFT damping exponent (default: stability scan)")
    p.add_argument("--n-grid", type=int, metavar="N",
                   help="FFT grid size (power of two)")
    p.add_argument("--eta", type=float, metavar="ETA",
                   help="FFT frequency spacing")
    p.add_argument("--rate", type=float, metavar="R",
                   help="risk-free rate")
    p.add_argument("--dt", type=float, metavar="DT",
                   help="model-time length of one return step (1.0 = "
                        "event scale; 1/events-per-year annualizes)")
    p.add_argument("--spot", type=float, metavar="S0",
                   help="spot level (default: last index value)")
    p.add_argument("--strikes", type=_csv_list(float), metavar="K1,...",
                   help="strike grid (default: moneyness fan)")
    p.add_argument("--maturities", type=_csv_list(float), metavar="T1,...",
                   help="maturities in years")

    parser = argparse.ArgumentParser(
        prog="deepspread",
        description="Order book spread indices, tail statistics, option "
                    "pricing, and systemic risk in one pipeline.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="COMMAND")
    helps = {
        "ingest": "clean raw order book files into the output layout",
        "spreads": "build spread and mid-price index series",
        "static-tails": "threshold, Hill, rank, and kurtosis tail reports",
        "fit-dynamics": "fit the conditional volatility model per depth",
        "simulate": "draw dependence-preserving scenario matrices",
        "price-options": "price European options on the index level",
        "implied-vol": "invert priced surfaces to implied volatilities",
        "rachev": "gain/loss tail ratios per depth",
        "systemic": "CoVaR-family co-risk measures from scenarios",
    }
    for name in STAGES:
        sub.add_parser(name, parents=[common], help=helps[name])
    run_all = sub.add_parser("run-all", parents=[common],
                             help="run every stage, skipping up-to-date "
                                  "ones")
    run_all.add_argument("--force", action="store_true",
                         help="rerun all stages even if outputs are "
                              "current")
    return parser


# flag destination -> config document key
_TOP_FLAGS = {
    "out_dir": "out_dir", "depths": "depths", "kinds": "kinds",
    "burn_in_fraction": "burn_in_fraction",
    "tail_fraction": "tail_fraction", "innovation": "innovation",
    "n_scenarios": "n_scenarios", "horizon": "horizon", "seed": "seed",
    "rachev_beta": "rachev_beta", "rachev_gamma": "rachev_gamma",
}
_PRICING_FLAGS = {
    "pricing_depths": "depths", "damping": "a", "n_grid": "n_grid",
    "eta": "eta", "rate": "r", "dt": "dt", "spot": "s0",
    "strikes": "strikes", "maturities": "maturities",
}


def _assemble_config(args):
    doc = {}
    if args.config:
        import yaml
        from pathlib import Path
        text = Path(args.config).read_text(encoding="utf-8")
        try:
            doc = (json.loads(text) if args.config.endswith(".json")
                   else yaml.safe_load(text))
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(
                f"cannot parse config file {args.config}: {exc}") from None
        if doc is None:
            raise ConfigError(f"config file {args.config} is empty")
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a mapping")
    if args.book:
        books = dict(doc.get("tickers") or {})
        books.update(dict(args.book))
        doc["tickers"] = books
    for dest, key in _TOP_FLAGS.items():
        v = getattr(args, dest)
        if v is not None:
            doc[key] = v
    pricing = dict(doc.get("pricing") or {})
    for dest, key in _PRICING_FLAGS.items():
        v = getattr(args, dest)
        if v is not None:
            pricing[key] = v
    if pricing:
        doc["pricing"] = pricing
    return config_from_dict(doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _assemble_config(args)
        if args.command == "run-all":
            run(cfg, stages=None, force=args.force, log=print)
        else:
            run(cfg, stages=[args.command], log=print)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
