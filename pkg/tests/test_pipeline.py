"""Pipeline orchestration: config validation, manifest skip logic,
stage wiring, and the command line front end."""

import json
import os

import numpy as np
import pytest

from conftest import make_book
from deepspread.cli import main
from deepspread.errors import ConfigError, DataError
from deepspread.pipeline import (RunManifest, config_from_dict, config_hash,
                                 load_config, run)


@pytest.fixture(scope="module")
def book(tmp_path_factory):
    return str(make_book(tmp_path_factory.mktemp("data") / "book.csv"))


def base_doc(book, out):
    return {"tickers": {"TEST": book}, "out_dir": str(out),
            "depths": [1, 2], "n_scenarios": 4000, "seed": 3}


@pytest.fixture(scope="module")
def full_run(book, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cfg = config_from_dict(base_doc(book, out))
    manifest = run(cfg)
    return cfg, out, manifest


class TestConfig:
    def test_defaults(self, book):
        cfg = config_from_dict({"tickers": {"T": book}})
        assert cfg.depths == tuple(range(1, 11))
        assert cfg.kinds == ("tmobbas", "gmp")
        assert cfg.innovation == "nig"
        assert cfg.out_dir == "out"
        assert cfg.seed == 0
        assert cfg.pricing.depths == (1,)
        assert cfg.pricing.dt == 1.0
        assert cfg.pricing.a is None
        assert cfg.systemic_levels == (0.95, 0.99)

    def test_requires_tickers(self):
        with pytest.raises(ConfigError, match="ticker"):
            config_from_dict({})
        with pytest.raises(ConfigError, match="ticker"):
            config_from_dict({"tickers": {}})

    def test_missing_book_file(self):
        with pytest.raises(ConfigError, match="not found"):
            config_from_dict({"tickers": {"T": "/no/such/file.csv"}})

    def test_unknown_keys_rejected(self, book):
        with pytest.raises(ConfigError, match="unknown config keys"):
            config_from_dict({"tickers": {"T": book}, "depht": [1]})
        with pytest.raises(ConfigError, match="unknown pricing keys"):
            config_from_dict({"tickers": {"T": book},
                              "pricing": {"grid": 8}})

    def test_bad_depths(self, book):
        for depths in ([0], [11], [], [1, 1]):
            with pytest.raises(ConfigError):
                config_from_dict({"tickers": {"T": book}, "depths": depths})

    def test_depths_sorted(self, book):
        cfg = config_from_dict({"tickers": {"T": book},
                                "depths": [5, 1, 10]})
        assert cfg.depths == (1, 5, 10)

    def test_bad_kinds(self, book):
        with pytest.raises(ConfigError, match="kinds"):
            config_from_dict({"tickers": {"T": book}, "kinds": ["vwap"]})

    def test_levels_validated(self, book):
        for key, val in [("rachev_beta", 0.0), ("rachev_beta", 1.0),
                         ("rachev_gamma", -0.1), ("tail_fraction", 0.6),
                         ("burn_in_fraction", 1.0)]:
            with pytest.raises(ConfigError):
                config_from_dict({"tickers": {"T": book}, key: val})

    def test_systemic_levels_fixed(self, book):
        with pytest.raises(ConfigError, match="systemic_levels"):
            config_from_dict({"tickers": {"T": book},
                              "systemic_levels": [0.9, 0.99]})

    def test_pricing_depths_must_be_configured(self, book):
        with pytest.raises(ConfigError, match="pricing depths"):
            config_from_dict({"tickers": {"T": book}, "depths": [1, 2],
                              "pricing": {"depths": [3]}})

    def test_grid_size_alias(self, book):
        cfg = config_from_dict({"tickers": {"T": book},
                                "pricing": {"N": 1024}})
        assert cfg.pricing.n_grid == 1024

    def test_yaml_and_json_files(self, book, tmp_path):
        doc = {"tickers": {"T": book}, "depths": [1, 3],
               "pricing": {"eta": 0.1}}
        yml = tmp_path / "c.yaml"
        yml.write_text(
            f"tickers:\n  T: {book}\ndepths: [1, 3]\n"
            f"pricing:\n  eta: 0.1\n")
        jsn = tmp_path / "c.json"
        jsn.write_text(json.dumps(doc))
        assert load_config(yml) == load_config(jsn) == config_from_dict(doc)

    def test_empty_config_file(self, tmp_path):
        empty = tmp_path / "e.yaml"
        empty.write_text("")
        with pytest.raises(ConfigError, match="empty"):
            load_config(empty)

    def test_hash_ignores_out_dir(self, book):
        a = config_from_dict(base_doc(book, "/tmp/a"))
        b = config_from_dict(base_doc(book, "/tmp/b"))
        assert config_hash(a) == config_hash(b)
        c = config_from_dict({**base_doc(book, "/tmp/a"), "seed": 4})
        assert config_hash(a) != config_hash(c)


def statuses(manifest):
    return {name: rec["status"] for name, rec in manifest.stages.items()}


def out_digests(manifest):
    return {name: rec.get("outputs") for name, rec in
            manifest.stages.items() if rec.get("outputs")}


class TestRun:
    def test_all_stages_ran(self, full_run):
        cfg, out, manifest = full_run
        assert isinstance(manifest, RunManifest)
        assert set(statuses(manifest).values()) == {"ran"}
        assert manifest.config_hash == config_hash(cfg)
        assert manifest.seed == 3

    def test_exactly_selected_depths_have_files(self, full_run):
        _, out, _ = full_run
        for kind in ("tmobbas", "gmp"):
            d = out / "TEST" / kind
            for depth in (1, 2):
                assert (d / f"index_d{depth}.csv").is_file()
                assert (d / f"hill_curve_{depth}.csv").is_file()
                assert (d / f"fit_d{depth}.json").is_file()
            assert not (d / "index_d3.csv").exists()
            # options priced at the shallowest depth only by default
            assert (d / "surface_d1.csv").is_file()
            assert not (d / "surface_d2.csv").exists()

    def test_all_named_outputs_exist(self, full_run):
        _, out, _ = full_run
        assert (out / "manifest.json").is_file()
        assert (out / "TEST" / "book.csv").is_file()
        for kind in ("tmobbas", "gmp"):
            d = out / "TEST" / kind
            for name in ("gpd_fits.csv", "rank_fit.csv", "kurtosis.csv",
                         "density_d1.csv", "qq_d1.csv", "fitstate_d1.npz",
                         "scenarios.npy", "scenarios_sample.csv",
                         "surface_d1.npz", "rachev.csv", "systemic.csv"):
                assert (d / name).is_file(), name

    def test_scenario_matrix_shape_and_ewp(self, full_run):
        _, out, _ = full_run
        scen = np.load(out / "TEST" / "tmobbas" / "scenarios.npy")
        assert scen.shape == (4000, 3)
        np.testing.assert_allclose(scen[:, -1], scen[:, :2].mean(axis=1),
                                   rtol=1e-12)
        sample = (out / "TEST" / "tmobbas" /
                  "scenarios_sample.csv").read_text().splitlines()
        assert sample[0] == "d1,d2,ewp"
        assert len(sample) == 101

    def test_gpd_table_rows(self, full_run):
        _, out, _ = full_run
        lines = (out / "TEST" / "gmp" / "gpd_fits.csv").read_text()
        rows = [ln.split(",")[0] for ln in lines.splitlines()[1:]]
        assert rows == ["1", "2", "ewp"]

    def test_systemic_rows(self, full_run):
        _, out, _ = full_run
        lines = (out / "TEST" / "gmp" / "systemic.csv").read_text()
        depths = [ln.split(",")[0] for ln in lines.splitlines()[1:]]
        assert depths == ["1", "2"]

    def test_manifest_file_matches_returned(self, full_run):
        _, out, manifest = full_run
        doc = json.loads((out / "manifest.json").read_text())
        assert doc == manifest.to_dict()

    def test_rerun_skips_and_preserves_digests(self, full_run):
        cfg, _, first = full_run
        again = run(cfg)
        assert set(statuses(again).values()) == {"skipped"}
        assert out_digests(again) == out_digests(first)

    def test_removing_intermediate_recomputes_downstream_only(
            self, full_run):
        cfg, out, first = full_run
        os.remove(out / "TEST" / "tmobbas" / "fitstate_d2.npz")
        again = run(cfg)
        assert statuses(again) == {
            "ingest": "skipped", "spreads": "skipped",
            "static-tails": "skipped", "fit-dynamics": "ran",
            "simulate": "ran", "price-options": "skipped",
            "implied-vol": "skipped", "rachev": "skipped",
            "systemic": "ran"}
        # recomputation is deterministic, so digests are restored
        assert out_digests(again) == out_digests(first)

    def test_corrupt_output_triggers_rerun(self, full_run):
        cfg, out, first = full_run
        target = out / "TEST" / "gmp" / "index_d1.csv"
        target.write_text(target.read_text()[: 200])
        again = run(cfg)
        st = statuses(again)
        assert st["ingest"] == "skipped"
        assert st["spreads"] == "ran"
        for name in ("static-tails", "fit-dynamics", "simulate",
                     "price-options", "implied-vol", "rachev", "systemic"):
            assert st[name] == "ran", name
        assert out_digests(again) == out_digests(first)

    def test_force_reruns_everything_identically(self, full_run):
        cfg, _, first = full_run
        again = run(cfg, force=True)
        assert set(statuses(again).values()) == {"ran"}
        assert out_digests(again) == out_digests(first)

    def test_single_stage_runs_unconditionally(self, full_run):
        cfg, _, _ = full_run
        manifest = run(cfg, stages=["rachev"])
        assert manifest.stages["rachev"]["status"] == "ran"
        assert "ingest" in manifest.stages

    def test_unknown_stage_rejected(self, full_run):
        cfg, _, _ = full_run
        with pytest.raises(ConfigError, match="unknown stages"):
            run(cfg, stages=["polish"])

    def test_missing_upstream_aborts_and_persists(self, book, tmp_path):
        cfg = config_from_dict(base_doc(book, tmp_path / "fresh"))
        with pytest.raises(DataError, match="simulate"):
            run(cfg, stages=["systemic"])
        doc = json.loads((tmp_path / "fresh" / "manifest.json").read_text())
        assert doc["stages"]["systemic"]["status"] == "failed"
        assert "scenarios.npy" in doc["stages"]["systemic"]["error"]

    def test_insufficient_book_depth(self, tmp_path):
        shallow = make_book(tmp_path / "shallow.csv", n=300, levels=2)
        cfg = config_from_dict({"tickers": {"T": str(shallow)},
                                "out_dir": str(tmp_path / "o"),
                                "depths": [1, 5]})
        with pytest.raises(DataError, match="depth 5"):
            run(cfg, stages=["ingest"])


def cli_args(book, out, extra=()):
    return ["--book", f"TEST={book}", "--out-dir", str(out),
            "--depths", "1", "--kinds", "tmobbas",
            "--n-scenarios", "2000"] + list(extra)


class TestCli:
    def test_run_all_then_skip(self, book, tmp_path, capsys):
        out = tmp_path / "cli_out"
        assert main(["run-all"] + cli_args(book, out)) == 0
        assert "stage systemic: ran" in capsys.readouterr().out
        assert main(["run-all"] + cli_args(book, out)) == 0
        assert "stage systemic: skipped" in capsys.readouterr().out
        assert (out / "TEST" / "tmobbas" / "surface_d1.csv").is_file()
        assert not (out / "TEST" / "gmp").exists()

    def test_single_subcommand(self, book, tmp_path):
        out = tmp_path / "one"
        assert main(["ingest"] + cli_args(book, out)) == 0
        assert main(["spreads"] + cli_args(book, out)) == 0
        assert (out / "TEST" / "tmobbas" / "index_d1.csv").is_file()

    def test_config_file_with_flag_override(self, book, tmp_path):
        yml = tmp_path / "c.yaml"
        yml.write_text(f"tickers:\n  TEST: {book}\n"
                       f"out_dir: {tmp_path / 'cfg_out'}\n"
                       f"depths: [1]\nkinds: [tmobbas]\n")
        assert main(["ingest", "--config", str(yml),
                     "--seed", "11"]) == 0
        assert (tmp_path / "cfg_out" / "TEST" / "book.csv").is_file()

    def test_config_error_exit_2(self, tmp_path):
        rc = main(["run-all", "--book", "T=/no/such/book.csv",
                   "--out-dir", str(tmp_path / "x")])
        assert rc == 2

    def test_malformed_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("tickers: [unclosed\n  nonsense: {")
        assert main(["run-all", "--config", str(bad)]) == 2

    def test_data_error_exit_3(self, book, tmp_path):
        rc = main(["systemic"] + cli_args(book, tmp_path / "no_upstream"))
        assert rc == 3

    def test_numerical_error_exit_4(self, tmp_path):
        # widening spread book: every spread log return is positive, so
        # the lower-tail average gain/loss denominator degenerates
        n = 400
        mid = 2_000_000
        path = tmp_path / "mono.csv"
        with open(path, "w") as fh:
            for i in range(n):
                fh.write(f"{40000 + i:.9f},{mid + 1 + i},50,{mid - 1},50\n")
        args = ["--book", f"M={path}", "--out-dir", str(tmp_path / "mono"),
                "--depths", "1", "--kinds", "tmobbas"]
        assert main(["ingest"] + args) == 0
        assert main(["spreads"] + args) == 0
        assert main(["rachev"] + args) == 4

    def test_bad_flag_exits_2(self, book, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run-all", "--book", f"TEST={book}",
                  "--depths", "1,x"])
        assert exc.value.code == 2
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["spreads", "--help"])
        assert exc.value.code == 0
        assert "--burn-in-fraction" in capsys.readouterr().out