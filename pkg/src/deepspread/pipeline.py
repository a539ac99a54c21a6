"""Configuration-driven pipeline binding ingestion, indices, tail
statistics, dynamics, pricing, and risk into one reproducible run.

Stages execute in a fixed order (ingest, spreads, static-tails,
fit-dynamics, simulate, price-options, implied-vol, rachev, systemic)
and communicate only through files under the output directory.  Every
run writes a manifest recording the config hash and a SHA-256 digest of
each stage's declared inputs and outputs; a later run with the same
config skips any stage whose recorded files are all still intact, and
reruns everything downstream of a stage that had to recompute.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .garch import (fit_arma_garch, joint_scenarios, load_fit_state,
                    save_fit_state, write_fit_json)
from .indices import build_ewp, index_series, read_index_csv, write_index_csv
from .lob import load_orderbook, parse_orderbook, serialize_orderbook
from .ndig import estimate_ndig
from .pricing import (OptionSurface, carr_madan_call_surface,
                      implied_vol_surface, put_surface, write_surface_csv)
from .risk import rachev_ratio, systemic_report, write_rachev_csv, \
    write_systemic_csv
from .tailstats import (excess_kurtosis, gpd_tail_fit, hill_curve, kde_curve,
                        qq_points, rank_half_fit, robust_kurtosis,
                        write_gpd_csv, write_hill_csv, write_kurtosis_csv,
                        write_rank_csv)

__all__ = [
    "PricingConfig",
    "PipelineConfig",
    "RunManifest",
    "STAGES",
    "load_config",
    "config_from_dict",
    "run",
]

STAGES = ("ingest", "spreads", "static-tails", "fit-dynamics", "simulate",
          "price-options", "implied-vol", "rachev", "systemic")

# which earlier stages feed each stage; a rerun upstream forces a rerun
_DEPS = {
    "ingest": (),
    "spreads": ("ingest",),
    "static-tails": ("spreads",),
    "fit-dynamics": ("spreads",),
    "simulate": ("fit-dynamics",),
    "price-options": ("spreads",),
    "implied-vol": ("price-options",),
    "rachev": ("spreads",),
    "systemic": ("simulate",),
}

KINDS = ("tmobbas", "gmp")
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class PricingConfig:
    """Option-surface settings; `depths` defaults to the shallowest
    configured book depth, strikes to a +/-20% log-moneyness fan around
    the closing index level.

    `dt` is the model-time length of one return step.  The default 1.0
    fits the process at the event scale, which keeps exponential moments
    of the wildly volatile spread series finite; set it to 1/events-
    per-year to work in annualized units instead.
    """

    depths: tuple = ()
    a: float | None = None          # damping; None = stability scan
    n_grid: int = 4096
    eta: float = 0.25
    r: float = 0.0
    dt: float = 1.0
    s0: float | None = None         # None = last index value
    strikes: tuple | None = None    # None = moneyness fan
    moneyness_span: float = 0.2
    n_strikes: int = 21
    maturities: tuple = (1.0 / 12.0, 0.25, 0.5, 1.0)


@dataclass(frozen=True)
class PipelineConfig:
    tickers: dict                   # ticker -> order book csv path
    out_dir: str = "out"
    depths: tuple = tuple(range(1, 11))
    kinds: tuple = KINDS
    burn_in_fraction: float = 0.05
    session_open_s: float = 34200.0
    session_close_s: float = 57600.0
    tail_fraction: float = 0.05
    innovation: str = "nig"
    n_scenarios: int = 10_000
    horizon: int = 1
    seed: int = 0
    pricing: PricingConfig = field(default_factory=PricingConfig)
    rachev_beta: float = 0.05
    rachev_gamma: float = 0.05
    systemic_levels: tuple = (0.95, 0.99)


_PRICING_KEYS = {
    "depths", "a", "n_grid", "eta", "r", "dt", "s0", "strikes",
    "moneyness_span", "n_strikes", "maturities",
}
_TOP_KEYS = {
    "tickers", "out_dir", "depths", "kinds", "burn_in_fraction",
    "session_open_s", "session_close_s", "tail_fraction", "innovation",
    "n_scenarios", "horizon", "seed", "pricing", "rachev_beta",
    "rachev_gamma", "systemic_levels",
}


@dataclass(frozen=True)
class RunManifest:
    """What a pipeline run did, as persisted in manifest.json.

    `stages` maps stage name to its record: status (ran, skipped or
    failed), wall-clock seconds, and SHA-256 digests of declared input
    and output files.  Two runs of the same config and seed produce
    identical output digests.
    """

    tool_version: str
    config_hash: str
    seed: int
    stages: dict

    def to_dict(self) -> dict:
        return {"tool_version": self.tool_version,
                "config_hash": self.config_hash,
                "seed": self.seed,
                "stages": self.stages}


def _check_level(name, v):
    if not (isinstance(v, (int, float)) and 0.0 < float(v) < 1.0):
        raise ConfigError(f"{name} must lie in (0, 1), got {v!r}")
    return float(v)


def config_from_dict(doc: dict) -> PipelineConfig:
    """Build and validate a config from a parsed mapping.

    Unknown keys are rejected so typos fail loudly instead of silently
    falling back to defaults.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping, got "
                          f"{type(doc).__name__}")
    doc = dict(doc)
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(map(str, unknown))}")

    tickers = doc.get("tickers")
    if not isinstance(tickers, dict) or not tickers:
        raise ConfigError("config must map at least one ticker to an "
                          "order book file under 'tickers'")
    tickers = {str(t): str(p) for t, p in tickers.items()}
    for t, p in tickers.items():
        if not Path(p).is_file():
            raise ConfigError(f"order book file for {t} not found: {p}")

    depths = tuple(int(d) for d in doc.get("depths", range(1, 11)))
    if not depths or not set(depths) <= set(range(1, 11)):
        raise ConfigError(f"depths must be a non-empty subset of 1..10, "
                          f"got {list(depths)}")
    if len(set(depths)) != len(depths):
        raise ConfigError(f"duplicate depths in {list(depths)}")
    depths = tuple(sorted(depths))

    kinds = tuple(str(k).lower() for k in doc.get("kinds", KINDS))
    if not kinds or not set(kinds) <= set(KINDS):
        raise ConfigError(f"kinds must be a non-empty subset of "
                          f"{list(KINDS)}, got {list(kinds)}")

    burn = float(doc.get("burn_in_fraction", 0.05))
    if not 0.0 <= burn < 1.0:
        raise ConfigError(f"burn_in_fraction must lie in [0, 1), got {burn}")
    tail = float(doc.get("tail_fraction", 0.05))
    if not 0.0 < tail <= 0.5:
        raise ConfigError(f"tail_fraction must lie in (0, 0.5], got {tail}")

    n_scen = int(doc.get("n_scenarios", 10_000))
    horizon = int(doc.get("horizon", 1))
    if n_scen < 1 or horizon < 1:
        raise ConfigError(f"n_scenarios and horizon must be positive, got "
                          f"{n_scen}, {horizon}")

    levels = tuple(float(v) for v in doc.get("systemic_levels", (0.95, 0.99)))
    if levels != (0.95, 0.99):
        raise ConfigError(f"systemic_levels must be [0.95, 0.99] (the "
                          f"report columns are fixed), got {list(levels)}")

    praw = doc.get("pricing", {}) or {}
    if not isinstance(praw, dict):
        raise ConfigError("pricing section must be a mapping")
    praw = dict(praw)
    if "N" in praw:                  # accepted alias for the grid size
        praw["n_grid"] = praw.pop("N")
    unknown = set(praw) - _PRICING_KEYS
    if unknown:
        raise ConfigError(
            f"unknown pricing keys: {sorted(map(str, unknown))}")
    pdepths = tuple(int(d) for d in praw.get("depths") or (depths[0],))
    if not set(pdepths) <= set(depths):
        raise ConfigError(f"pricing depths {list(pdepths)} not all in "
                          f"configured depths {list(depths)}")
    pricing = PricingConfig(
        depths=pdepths,
        a=None if praw.get("a") is None else float(praw["a"]),
        n_grid=int(praw.get("n_grid", 4096)),
        eta=float(praw.get("eta", 0.25)),
        r=float(praw.get("r", 0.0)),
        dt=float(praw.get("dt", 1.0)),
        s0=None if praw.get("s0") is None else float(praw["s0"]),
        strikes=(None if praw.get("strikes") is None
                 else tuple(float(k) for k in praw["strikes"])),
        moneyness_span=float(praw.get("moneyness_span", 0.2)),
        n_strikes=int(praw.get("n_strikes", 21)),
        maturities=tuple(float(t) for t in
                         praw.get("maturities", (1.0 / 12, 0.25, 0.5, 1.0))))
    if pricing.dt <= 0:
        raise ConfigError(f"pricing dt must be positive, got {pricing.dt}")

    return PipelineConfig(
        tickers=tickers,
        out_dir=str(doc.get("out_dir", "out")),
        depths=depths,
        kinds=kinds,
        burn_in_fraction=burn,
        session_open_s=float(doc.get("session_open_s", 34200.0)),
        session_close_s=float(doc.get("session_close_s", 57600.0)),
        tail_fraction=tail,
        innovation=str(doc.get("innovation", "nig")),
        n_scenarios=n_scen,
        horizon=horizon,
        seed=int(doc.get("seed", 0)),
        pricing=pricing,
        rachev_beta=_check_level("rachev_beta",
                                 doc.get("rachev_beta", 0.05)),
        rachev_gamma=_check_level("rachev_gamma",
                                  doc.get("rachev_gamma", 0.05)),
        systemic_levels=levels)


def load_config(path) -> PipelineConfig:
    """Read a YAML or JSON config file."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        doc = json.loads(text)
    else:
        import yaml
        doc = yaml.safe_load(text)
    if doc is None:
        raise ConfigError(f"config file {path} is empty")
    return config_from_dict(doc)


def config_hash(cfg: PipelineConfig) -> str:
    doc = asdict(cfg)
    doc.pop("out_dir")      # where results land does not change them
    doc["tool_version"] = __version__
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Paths:
    """All artifact locations under one output directory."""

    def __init__(self, cfg: PipelineConfig):
        self.root = Path(cfg.out_dir)

    def manifest(self):
        return self.root / MANIFEST_NAME

    def book(self, t):
        return self.root / t / "book.csv"

    def kind_dir(self, t, kind):
        return self.root / t / kind

    def index(self, t, kind, d):
        return self.kind_dir(t, kind) / f"index_d{d}.csv"

    def gpd(self, t, kind):
        return self.kind_dir(t, kind) / "gpd_fits.csv"

    def hill(self, t, kind, d):
        return self.kind_dir(t, kind) / f"hill_curve_{d}.csv"

    def rank(self, t, kind):
        return self.kind_dir(t, kind) / "rank_fit.csv"

    def kurtosis(self, t, kind):
        return self.kind_dir(t, kind) / "kurtosis.csv"

    def density(self, t, kind, d):
        return self.kind_dir(t, kind) / f"density_d{d}.csv"

    def qq(self, t, kind, d):
        return self.kind_dir(t, kind) / f"qq_d{d}.csv"

    def fit_json(self, t, kind, d):
        return self.kind_dir(t, kind) / f"fit_d{d}.json"

    def fit_state(self, t, kind, d):
        return self.kind_dir(t, kind) / f"fitstate_d{d}.npz"

    def scenarios(self, t, kind):
        return self.kind_dir(t, kind) / "scenarios.npy"

    def scenarios_sample(self, t, kind):
        return self.kind_dir(t, kind) / "scenarios_sample.csv"

    def surface_raw(self, t, kind, d):
        return self.kind_dir(t, kind) / f"surface_d{d}.npz"

    def surface(self, t, kind, d):
        return self.kind_dir(t, kind) / f"surface_d{d}.csv"

    def rachev(self, t, kind):
        return self.kind_dir(t, kind) / "rachev.csv"

    def systemic(self, t, kind):
        return self.kind_dir(t, kind) / "systemic.csv"


def _require(path: Path, producer: str) -> Path:
    if not path.is_file():
        raise DataError(f"missing input {path}; run the '{producer}' "
                        f"stage first")
    return path


def _returns_from_csv(path: Path, producer: str = "spreads") -> np.ndarray:
    idx = read_index_csv(_require(path, producer))
    if len(idx) < 2:
        raise DataError(f"{path} holds fewer than 2 observations")
    return idx.returns


# ---------------------------------------------------------------------------
# stage bodies: each returns (input paths, output paths, info dict)


def _stage_ingest(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t, src in sorted(cfg.tickers.items()):
        series = load_orderbook(src, ticker=t,
                                open_s=cfg.session_open_s,
                                close_s=cfg.session_close_s,
                                burn_in=cfg.burn_in_fraction)
        if series.depth < max(cfg.depths):
            raise DataError(
                f"{t}: book has {series.depth} levels, config requests "
                f"depth {max(cfg.depths)}")
        out = paths.book(t)
        out.parent.mkdir(parents=True, exist_ok=True)
        serialize_orderbook(series, out)
        inputs.append(Path(src))
        outputs.append(out)
        info[t] = {"rows": len(series),
                   "dropped_invalid": series.dropped_invalid,
                   "dropped_session": series.dropped_session,
                   "dropped_burn_in": series.dropped_burn_in}
    return inputs, outputs, info


def _stage_spreads(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        book = _require(paths.book(t), "ingest")
        series = parse_orderbook(book, ticker=t)
        inputs.append(book)
        n = {}
        for kind in cfg.kinds:
            paths.kind_dir(t, kind).mkdir(parents=True, exist_ok=True)
            for d in cfg.depths:
                idx = index_series(series, kind, d)
                out = paths.index(t, kind, d)
                write_index_csv(idx, out)
                outputs.append(out)
                n[f"{kind}_d{d}"] = len(idx)
        info[t] = n
    return inputs, outputs, info


def _stage_static_tails(cfg, paths):
    inputs, outputs, info = [], [], {}
    q = 1.0 - cfg.tail_fraction
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            rets = {}
            for d in cfg.depths:
                src = paths.index(t, kind, d)
                rets[d] = _returns_from_csv(src)
                inputs.append(src)
            ewp = build_ewp([rets[d] for d in cfg.depths])

            gpd_rows, rank_rows, kurt_rows = [], [], []
            for d in cfg.depths:
                x = rets[d]
                gpd_rows.append((d, gpd_tail_fit(x, q=q)))
                rank_rows.append((t, kind, d, rank_half_fit(x)))
                kurt_rows.append((t, kind, d, x.size,
                                  excess_kurtosis(x), robust_kurtosis(x)))
                curve = hill_curve(x)
                write_hill_csv(curve, paths.hill(t, kind, d))
                outputs.append(paths.hill(t, kind, d))
                grid, dens = kde_curve(x)
                _write_xy(paths.density(t, kind, d), "x,density",
                          grid, dens)
                outputs.append(paths.density(t, kind, d))
                theo, emp = qq_points(x)
                _write_xy(paths.qq(t, kind, d), "theoretical,empirical",
                          theo, emp)
                outputs.append(paths.qq(t, kind, d))
            gpd_rows.append(("ewp", gpd_tail_fit(ewp, q=q)))
            rank_rows.append((t, kind, "ewp", rank_half_fit(ewp)))
            kurt_rows.append((t, kind, "ewp", ewp.size,
                              excess_kurtosis(ewp), robust_kurtosis(ewp)))

            write_gpd_csv(gpd_rows, paths.gpd(t, kind))
            write_rank_csv(rank_rows, paths.rank(t, kind))
            write_kurtosis_csv(kurt_rows, paths.kurtosis(t, kind))
            outputs += [paths.gpd(t, kind), paths.rank(t, kind),
                        paths.kurtosis(t, kind)]
            info[f"{t}/{kind}"] = {
                "gpd_xi_by_depth": {str(d): round(f.xi, 6)
                                    for d, f in gpd_rows}}
    return inputs, outputs, info


def _write_xy(path: Path, header: str, xs, ys) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for a, b in zip(xs, ys):
            fh.write(f"{a:.10e},{b:.10e}\n")


def _stage_fit_dynamics(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            for d in cfg.depths:
                src = paths.index(t, kind, d)
                x = _returns_from_csv(src)
                inputs.append(src)
                fit = fit_arma_garch(x, innovation=cfg.innovation)
                write_fit_json(fit, paths.fit_json(t, kind, d))
                save_fit_state(fit, paths.fit_state(t, kind, d))
                outputs += [paths.fit_json(t, kind, d),
                            paths.fit_state(t, kind, d)]
                info[f"{t}/{kind}/d{d}"] = {
                    "loglik": round(fit.loglik, 4),
                    "converged": fit.converged,
                    "boundary": fit.boundary}
    return inputs, outputs, info


def _stage_simulate(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            fits = []
            for d in cfg.depths:
                src = _require(paths.fit_state(t, kind, d), "fit-dynamics")
                fits.append(load_fit_state(src))
                inputs.append(src)
            term = joint_scenarios(fits, n_scenarios=cfg.n_scenarios,
                                   horizon=cfg.horizon, seed=cfg.seed)
            ewp = term.mean(axis=1, keepdims=True)
            scen = np.hstack([term, ewp])
            out = paths.scenarios(t, kind)
            np.save(out, scen)
            header = ",".join([f"d{d}" for d in cfg.depths] + ["ewp"])
            sample = paths.scenarios_sample(t, kind)
            with open(sample, "w", encoding="utf-8") as fh:
                fh.write(header + "\n")
                for row in scen[:100]:
                    fh.write(",".join(f"{v:.12e}" for v in row) + "\n")
            outputs += [out, sample]
            info[f"{t}/{kind}"] = {"shape": list(scen.shape)}
    return inputs, outputs, info


def _stage_price_options(cfg, paths):
    inputs, outputs, info = [], [], {}
    pc = cfg.pricing
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            for d in pc.depths:
                src = paths.index(t, kind, d)
                idx = read_index_csv(_require(src, "spreads"))
                inputs.append(src)
                s0 = pc.s0 if pc.s0 is not None else float(idx.values[-1])
                if s0 <= 0:
                    raise DataError(
                        f"{t}/{kind}/d{d}: non-positive spot {s0}")
                p = estimate_ndig(idx.returns, dt=pc.dt, seed=cfg.seed)
                if pc.strikes is not None:
                    strikes = np.asarray(pc.strikes, dtype=np.float64)
                else:
                    strikes = s0 * np.exp(np.linspace(
                        -pc.moneyness_span, pc.moneyness_span,
                        pc.n_strikes))
                surf = put_surface(carr_madan_call_surface(
                    p, s0, pc.r, strikes, pc.maturities, a=pc.a,
                    n_grid=pc.n_grid, eta=pc.eta))
                out = paths.surface_raw(t, kind, d)
                np.savez(out, s0=s0, r=pc.r, strikes=surf.strikes,
                         maturities=surf.maturities, calls=surf.calls,
                         puts=surf.puts,
                         damping=surf.meta["damping"],
                         damping_unstable=bool(
                             surf.meta.get("damping_unstable", False)),
                         ndig=np.array([p.mu3, p.gamma, p.rho, p.sigma3,
                                        p.lambda_t, p.mu_t,
                                        p.lambda_u, p.mu_u]))
                outputs.append(out)
                info[f"{t}/{kind}/d{d}"] = {
                    "s0": round(s0, 8),
                    "damping": surf.meta["damping"],
                    "damping_unstable": bool(
                        surf.meta.get("damping_unstable", False))}
    return inputs, outputs, info


def _stage_implied_vol(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            for d in cfg.pricing.depths:
                src = _require(paths.surface_raw(t, kind, d),
                               "price-options")
                inputs.append(src)
                with np.load(src) as z:
                    surf = OptionSurface(
                        s0=float(z["s0"]), r=float(z["r"]),
                        strikes=z["strikes"].copy(),
                        maturities=z["maturities"].copy(),
                        calls=z["calls"].copy(), puts=z["puts"].copy(),
                        meta={"damping": float(z["damping"])})
                implied_vol_surface(surf)
                out = paths.surface(t, kind, d)
                write_surface_csv(surf, out)
                outputs.append(out)
                n_missing = sum(1 for row in surf.missing
                                for reason in row if reason)
                info[f"{t}/{kind}/d{d}"] = {"missing_cells": n_missing}
    return inputs, outputs, info


def _stage_rachev(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            rows = []
            for d in cfg.depths:
                src = paths.index(t, kind, d)
                x = _returns_from_csv(src)
                inputs.append(src)
                rep = rachev_ratio(x, beta=cfg.rachev_beta,
                                   gamma=cfg.rachev_gamma)
                rows.append((t, kind, d, rep.ratio))
            out = paths.rachev(t, kind)
            write_rachev_csv(rows, out)
            outputs.append(out)
            info[f"{t}/{kind}"] = {
                "ratio_by_depth": {str(d): round(r, 6)
                                   for _, _, d, r in rows}}
    return inputs, outputs, info


def _stage_systemic(cfg, paths):
    inputs, outputs, info = [], [], {}
    for t in sorted(cfg.tickers):
        for kind in cfg.kinds:
            src = _require(paths.scenarios(t, kind), "simulate")
            inputs.append(src)
            scen = np.load(src)
            rows = systemic_report(scen, depths=cfg.depths,
                                   levels=cfg.systemic_levels)
            out = paths.systemic(t, kind)
            write_systemic_csv(rows, out)
            outputs.append(out)
            info[f"{t}/{kind}"] = {"depths": [r.depth for r in rows]}
    return inputs, outputs, info


_STAGE_FN = {
    "ingest": _stage_ingest,
    "spreads": _stage_spreads,
    "static-tails": _stage_static_tails,
    "fit-dynamics": _stage_fit_dynamics,
    "simulate": _stage_simulate,
    "price-options": _stage_price_options,
    "implied-vol": _stage_implied_vol,
    "rachev": _stage_rachev,
    "systemic": _stage_systemic,
}


# ---------------------------------------------------------------------------
# orchestration


def _relpath(p: Path, root: Path) -> str:
    # files under the output root are recorded relative to it so the
    # whole directory can be moved; external inputs keep absolute paths
    p = Path(p).resolve()
    try:
        return p.relative_to(root.resolve()).as_posix()
    except ValueError:
        return p.as_posix()


def _digest_map(files, root: Path) -> dict:
    return {_relpath(f, root): _digest(f) for f in sorted(set(map(Path,
                                                                  files)))}


def _files_intact(recorded: dict, root: Path) -> bool:
    # recorded keys are posix paths, either relative to the output root
    # or absolute (external inputs); joining handles both
    for rel, want in recorded.items():
        p = root / rel
        if not p.is_file() or _digest(p) != want:
            return False
    return True


def _load_manifest(paths: _Paths) -> dict:
    mp = paths.manifest()
    if not mp.is_file():
        return {}
    try:
        return json.loads(mp.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return {}


def _write_manifest(paths: _Paths, doc: dict) -> None:
    paths.root.mkdir(parents=True, exist_ok=True)
    with open(paths.manifest(), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(cfg: PipelineConfig, stages=None, force: bool = False,
        log=None) -> RunManifest:
    """Execute the pipeline (or a subset of stages) and return the manifest.

    With `stages=None` all stages run in order, each skipped when the
    manifest from a previous run with the identical config still
    describes its inputs and outputs byte-for-byte and nothing upstream
    recomputed.  Explicit `stages` (or `force=True`) disables skipping
    for the named stages.  On a stage failure the manifest is written
    with the stage marked failed before the error propagates.
    """
    say = log or (lambda s: None)
    requested = list(STAGES) if stages is None else list(stages)
    unknown = [s for s in requested if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stages: {unknown}")
    use_skip = stages is None and not force

    paths = _Paths(cfg)
    paths.root.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    prev = _load_manifest(paths)
    prev_stages = (prev.get("stages", {})
                   if prev.get("config_hash") == chash else {})

    manifest = {
        "tool_version": __version__,
        "config_hash": chash,
        "seed": cfg.seed,
        "stages": dict(prev_stages) if prev.get("config_hash") == chash
        else {},
    }

    reran = set()
    for name in STAGES:
        if name not in requested:
            continue
        rec = prev_stages.get(name)
        upstream_reran = any(dep in reran for dep in _DEPS[name])
        can_skip = (use_skip and rec is not None
                    and rec.get("status") in ("ran", "skipped")
                    and not upstream_reran
                    and _files_intact(rec.get("inputs", {}), paths.root)
                    and _files_intact(rec.get("outputs", {}), paths.root))
        if can_skip:
            manifest["stages"][name] = {**rec, "status": "skipped"}
            say(f"stage {name}: skipped (up to date)")
            continue

        t0 = time.perf_counter()
        try:
            inputs, outputs, info = _STAGE_FN[name](cfg, paths)
        except Exception as exc:
            manifest["stages"][name] = {
                "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                "wall_s": round(time.perf_counter() - t0, 6)}
            _write_manifest(paths, manifest)
            say(f"stage {name}: FAILED ({exc})")
            raise
        wall = time.perf_counter() - t0
        manifest["stages"][name] = {
            "status": "ran",
            "wall_s": round(wall, 6),
            "inputs": _digest_map(inputs, paths.root),
            "outputs": _digest_map(outputs, paths.root),
            "info": info,
        }
        reran.add(name)
        say(f"stage {name}: ran ({wall:.2f}s)")

    _write_manifest(paths, manifest)
    return RunManifest(**manifest)
