import json
import logging

import numpy as np
import pytest

from imclab import ConfigurationError, load_suite, run_suite, save_suite
from imclab.cli import main as cli_main
from imclab.streams import derive_stream
from imclab.suite import parse_chain_config

GOLDEN_STREAM_0_0 = [
    0.5849458304897319, 0.5024474599984217, 0.09156485321371732, 0.9952812491864403,
    0.648928877421278, 0.4175639942126519, 0.8226534001681672, 0.1261934821376055,
    0.9904751546333012, 0.13086956223035284, 0.36930495841984734, 0.6939037124445728,
    0.17599314821392875, 0.861336308579802, 0.7771401511159662, 0.4246295822305072,
]

REFERENCE_TARGET = {"weights": [5, 4, 3, 2, 1], "beta": 0.5, "tau": 0.5}


def minimal_suite_doc(**overrides):
    doc = {
        "master_seed": 7,
        "output_dir": "reports",
        "experiments": [
            {
                "name": "smoke_clt",
                "kind": "clt",
                "target": REFERENCE_TARGET,
                "epsilon": 0.3,
                "n_steps": 400,
                "n_replications": 120,
                "f": {"kind": "indicator", "index": 0},
            }
        ],
    }
    doc.update(overrides)
    return doc


class TestDeriveStream:
    def test_same_inputs_identical(self):
        a = derive_stream(123, 4).random(100)
        b = derive_stream(123, 4).random(100)
        np.testing.assert_array_equal(a, b)

    def test_adjacent_indices_differ(self):
        a = derive_stream(0, 0).random(10_000)
        b = derive_stream(0, 1).random(10_000)
        assert not np.any(a == b)

    def test_golden_first_sixteen_variates(self):
        np.testing.assert_array_equal(derive_stream(0, 0).random(16), GOLDEN_STREAM_0_0)

    def test_index_bounds(self):
        with pytest.raises(ValueError):
            derive_stream(0, -1)


class TestLoadSuite:
    def test_minimal_file_with_defaults(self, tmp_path):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        suite = load_suite(path)
        assert suite.master_seed == 7
        assert len(suite.experiments) == 1
        spec = suite.experiments[0]
        assert spec.variance_band == 0.15
        assert spec.auxiliary_mode == "iid"

    def test_bad_epsilon_names_field(self, tmp_path):
        doc = minimal_suite_doc()
        doc["experiments"][0]["epsilon"] = 1.5
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigurationError, match="'epsilon'"):
            load_suite(path)

    def test_missing_seed_defaults_to_zero_with_warning(self, tmp_path, caplog):
        doc = minimal_suite_doc()
        del doc["master_seed"]
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        with caplog.at_level(logging.WARNING, logger="imclab"):
            suite = load_suite(path)
        assert suite.master_seed == 0
        assert any("master_seed" in r.message for r in caplog.records)

    def test_parse_error_reports_location(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  'single': 1\n}")
        with pytest.raises(ConfigurationError, match="line 2"):
            load_suite(path)

    def test_duplicate_names_rejected(self, tmp_path):
        doc = minimal_suite_doc()
        doc["experiments"].append(dict(doc["experiments"][0]))
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ConfigurationError, match="unique"):
            load_suite(path)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        suite = load_suite(path)
        out = tmp_path / "copy.json"
        save_suite(suite, out)
        assert load_suite(out) == suite


class TestRunSuite:
    def test_empty_suite_exits_zero(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc(experiments=[])))
        suite = load_suite(path)
        assert run_suite(suite, output_dir=str(tmp_path / "out")) == 0

    def test_smoke_suite_writes_reports(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        suite = load_suite(path)
        status = run_suite(suite, threads=2, output_dir=str(tmp_path / "out"))
        report = json.loads((tmp_path / "out" / "smoke_clt.report.json").read_text())
        assert report["schema"] == "1"
        assert report["n_replications"] == 120
        csv_lines = (tmp_path / "out" / "smoke_clt.sums.csv").read_text().splitlines()
        assert csv_lines[0] == "replication,sum"
        assert len(csv_lines) == 121
        out = capsys.readouterr().out
        assert "smoke_clt" in out
        assert status in (0, 1)  # statistical outcome; determinism is tested below

    def test_failing_tolerance_exits_one(self, tmp_path, capsys):
        doc = minimal_suite_doc()
        doc["experiments"][0]["variance_band"] = 1e-9
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        suite = load_suite(path)
        assert run_suite(suite, output_dir=str(tmp_path / "out")) == 1
        assert "FAILED: smoke_clt" in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        suite = load_suite(path)
        run_suite(suite, threads=1, output_dir=str(tmp_path / "a"))
        run_suite(suite, threads=2, output_dir=str(tmp_path / "b"))
        for name in ("smoke_clt.sums.csv", "smoke_clt.report.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_shared_seed_offset_gives_additive_split(self, tmp_path, capsys):
        # three experiments on the same batch: the full sums must equal the
        # martingale plus fluctuation sums row by row
        base = {
            "target": REFERENCE_TARGET,
            "epsilon": 0.3,
            "n_steps": 500,
            "n_replications": 100,
            "f": {"kind": "indicator", "index": 0},
            "seed_offset": 0,
        }
        doc = minimal_suite_doc(experiments=[
            {**base, "name": "split_full", "kind": "clt"},
            {**base, "name": "split_mart", "kind": "martingale"},
            {**base, "name": "split_fluct", "kind": "pi_fluctuation"},
        ])
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        run_suite(load_suite(path), output_dir=str(tmp_path / "out"))

        def col(name):
            lines = (tmp_path / "out" / f"{name}.sums.csv").read_text().splitlines()[1:]
            return np.array([float(line.split(",")[1]) for line in lines])

        np.testing.assert_allclose(col("split_full"), col("split_mart") + col("split_fluct"),
                                   atol=1e-12)

    def test_markov_mode_default_auxiliary_kernel(self, tmp_path, capsys):
        doc = minimal_suite_doc()
        doc["experiments"][0]["auxiliary_mode"] = "markov"
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        status = run_suite(load_suite(path), output_dir=str(tmp_path / "out"))
        report = json.loads((tmp_path / "out" / "smoke_clt.report.json").read_text())
        assert report["predicted_variance"] > 0
        assert status in (0, 1)

    def test_series_kinds_write_reports(self, tmp_path, capsys):
        doc = minimal_suite_doc(experiments=[
            {
                "name": "series_lln",
                "kind": "lln",
                "target": REFERENCE_TARGET,
                "epsilon": 0.3,
                "n_grid": [2000, 8000],
                "n_seeds": 3,
                "f": {"kind": "indicator", "index": 0},
            },
            {
                "name": "series_diag",
                "kind": "diagnostics",
                "target": REFERENCE_TARGET,
                "epsilon": 0.3,
                "n_grid": [500, 1000, 2000, 4000],
                "n_seeds": 2,
                "f": {"kind": "values", "values": [1.0, 0.0, 0.0, 0.0, -1.0]},
            },
        ])
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(doc))
        status = run_suite(load_suite(path), output_dir=str(tmp_path / "out"))
        assert status == 0
        lln = json.loads((tmp_path / "out" / "series_lln.report.json").read_text())
        assert lln["passed"] and lln["reference"] > 0
        diag_csv = (tmp_path / "out" / "series_diag.sums.csv").read_text().splitlines()
        assert diag_csv[0] == "n,poisson_regularity,containment,linearization_remainder"
        assert len(diag_csv) == 5

    def test_oracle_out_flag_writes_file(self, tmp_path):
        path = tmp_path / "chain.json"
        path.write_text(json.dumps({
            "target": REFERENCE_TARGET, "epsilon": 0.3, "n_steps": 100, "seed": 1,
            "f": {"kind": "indicator", "index": 0},
        }))
        out = tmp_path / "oracle.json"
        assert cli_main(["oracle", "--config", str(path), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["total"] > 0

    def test_run_seed_override_changes_sums(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        cli_main(["run", "--config", str(path), "--out", str(tmp_path / "a")])
        cli_main(["run", "--config", str(path), "--out", str(tmp_path / "b"), "--seed", "1234"])
        assert ((tmp_path / "a" / "smoke_clt.sums.csv").read_text()
                != (tmp_path / "b" / "smoke_clt.sums.csv").read_text())


class TestCli:
    def chain_doc(self):
        return {
            "target": REFERENCE_TARGET,
            "epsilon": 0.3,
            "n_steps": 300,
            "seed": 3,
            "f": {"kind": "indicator", "index": 0},
        }

    def test_oracle_prints_report(self, tmp_path, capsys):
        path = tmp_path / "chain.json"
        path.write_text(json.dumps(self.chain_doc()))
        assert cli_main(["oracle", "--config", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["total"] == doc["sigma_sq"] + 2 * doc["gamma_tilde_sq"]
        assert all(b["ok"] for b in doc["bounds"])

    def test_simulate_writes_csv(self, tmp_path, capsys):
        path = tmp_path / "chain.json"
        path.write_text(json.dumps(self.chain_doc()))
        out = tmp_path / "traj.csv"
        assert cli_main(["simulate", "--config", str(path), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "step,x_state,y_state"
        assert len(lines) == 301

    def test_simulate_seed_override_changes_output(self, tmp_path):
        path = tmp_path / "chain.json"
        path.write_text(json.dumps(self.chain_doc()))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli_main(["simulate", "--config", str(path), "--out", str(a)])
        cli_main(["simulate", "--config", str(path), "--out", str(b), "--seed", "99"])
        assert a.read_text() != b.read_text()

    def test_run_subcommand(self, tmp_path, capsys):
        path = tmp_path / "suite.json"
        path.write_text(json.dumps(minimal_suite_doc()))
        out_dir = tmp_path / "out"
        status = cli_main(["run", "--config", str(path), "--threads", "2", "--out", str(out_dir)])
        assert status in (0, 1)
        assert (out_dir / "smoke_clt.report.json").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "chain.json"
        doc = self.chain_doc()
        doc["epsilon"] = 2.0
        path.write_text(json.dumps(doc))
        assert cli_main(["oracle", "--config", str(path)]) == 2
        assert "epsilon" in capsys.readouterr().err

    def test_parse_chain_config_round_trip(self):
        cfg, f = parse_chain_config(self.chain_doc())
        assert cfg.n_steps == 300
        assert cfg.seed == 3
        np.testing.assert_array_equal(f, [1, 0, 0, 0, 0])
