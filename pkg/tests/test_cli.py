import csv
import json

import numpy as np
import pytest

from pneusim import sysid
from pneusim.cli import main
from pneusim.control import make_bench_device, track_trajectory


def run(argv):
    return main(argv)


def read_bytes_tree(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


@pytest.fixture
def small_dataset_csv(tmp_path):
    device = make_bench_device(model_kind="linear")
    rng = np.random.default_rng(0)
    ref = sysid.step_reference(rng, 600, 100.0)
    log = track_trajectory(device, ref)
    path = tmp_path / "data.csv"
    log.to_csv(path)
    return path


class TestBusBench:
    def test_three_device_table_is_monotone(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert run(["bus-bench", "--devices", "3", "--iterations", "50",
                    "--out", str(out)]) == 0
        doc = json.loads((out / "loop_rates.json").read_text())
        assert [row["device_count"] for row in doc] == [1, 2, 3]
        rates = [row["mean_hz"] for row in doc]
        assert rates[0] > rates[1] > rates[2]
        table = capsys.readouterr().out
        assert "devices" in table and "mean Hz" in table

    def test_zero_devices_is_usage_error(self, tmp_path):
        assert run(["bus-bench", "--devices", "0", "--out", str(tmp_path)]) == 2

    def test_zero_overhead_hits_protocol_ceiling(self, tmp_path):
        out = tmp_path / "out"
        assert run(["bus-bench", "--devices", "1", "--iterations", "10",
                    "--overhead", "0", "--out", str(out)]) == 0
        doc = json.loads((out / "loop_rates.json").read_text())
        assert doc[0]["mean_hz"] == pytest.approx(5000.0, rel=1e-9)

    def test_config_file_feeds_defaults(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"devices": 2, "iterations": 20}))
        out = tmp_path / "out"
        assert run(["bus-bench", "--config", str(cfg), "--out", str(out)]) == 0
        doc = json.loads((out / "loop_rates.json").read_text())
        assert len(doc) == 2
        echo = json.loads((out / "config_echo.json").read_text())
        assert echo["devices"] == 2 and echo["subcommand"] == "bus-bench"


class TestStep:
    def test_single_trial_band_collapses_to_mean(self, tmp_path):
        out = tmp_path / "out"
        assert run(["step", "--trials", "1", "--noise", "0.5",
                    "--out", str(out), "--seed", "3"]) == 0
        with open(out / "step_response.csv") as fh:
            rows = list(csv.DictReader(fh))
        for row in rows[::100]:
            assert float(row["p0_ci_lo_kpa"]) == float(row["p0_ci_hi_kpa"])

    def test_deterministic_config_zero_width_band(self, tmp_path):
        out = tmp_path / "out"
        assert run(["step", "--trials", "5", "--noise", "0",
                    "--out", str(out)]) == 0
        with open(out / "step_response.csv") as fh:
            rows = list(csv.DictReader(fh))
        widths = [float(r["p2_ci_hi_kpa"]) - float(r["p2_ci_lo_kpa"]) for r in rows]
        assert max(widths) == 0.0
        metrics = json.loads((out / "step_metrics.json").read_text())
        assert len(metrics["per_chamber"]) == 4

    def test_invalid_trials_usage_error(self, tmp_path):
        assert run(["step", "--trials", "0", "--out", str(tmp_path)]) == 2


class TestFit:
    def test_single_restart_deterministic_outputs(self, tmp_path, small_dataset_csv):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run(["fit", "--dataset", str(small_dataset_csv),
                        "--model", "linear", "--restarts", "1", "--seed", "7",
                        "--out", str(out),
                        "--config", str(_cfg(tmp_path, {"train_points": 500}))])
            assert code == 0
            outs.append(read_bytes_tree(out))
        assert outs[0] == outs[1]
        summary = json.loads(outs[0]["fit_summary.json"].decode())
        assert summary["n_restarts"] == 1
        assert "fit_wall_time" not in summary

    def test_malformed_csv_exits_3_naming_row(self, tmp_path, small_dataset_csv,
                                              capsys):
        lines = small_dataset_csv.read_text().splitlines()
        parts = lines[25].split(",")
        parts[2] = "bogus"
        lines[25] = ",".join(parts)
        bad = tmp_path / "bad.csv"
        bad.write_text("\n".join(lines) + "\n")
        code = run(["fit", "--dataset", str(bad), "--model", "linear",
                    "--out", str(tmp_path / "out")])
        assert code == 3
        assert "row 26" in capsys.readouterr().err

    def test_missing_dataset_exits_3(self, tmp_path):
        code = run(["fit", "--dataset", str(tmp_path / "nope.csv"),
                    "--out", str(tmp_path / "out")])
        assert code == 3

    def test_fitted_params_load_back(self, tmp_path, small_dataset_csv):
        from pneusim import dynamics as dyn

        out = tmp_path / "out"
        assert run(["fit", "--dataset", str(small_dataset_csv),
                    "--model", "linear", "--restarts", "2", "--seed", "0",
                    "--out", str(out),
                    "--config", str(_cfg(tmp_path, {"train_points": 500}))]) == 0
        params = dyn.load_params(out / "fitted_params.json")
        assert isinstance(params, dyn.LinearParams)


class TestCompare:
    def test_compare_writes_timing_free_artifacts(self, tmp_path,
                                                  small_dataset_csv, capsys):
        out = tmp_path / "out"
        cfg = _cfg(tmp_path, {"train_points": 500,
                              "model_kinds": ["linear"], "restarts": 2})
        assert run(["compare", "--dataset", str(small_dataset_csv),
                    "--out", str(out), "--config", str(cfg)]) == 0
        doc = json.loads((out / "comparison.json").read_text())
        assert all("eval_time_ms" not in c for c in doc["cells"])
        stdout = capsys.readouterr().out
        assert "eval ms" in stdout  # timing lives on stdout only
        header = (out / "comparison.csv").read_text().splitlines()[0]
        assert "eval" not in header


class TestMakeDataset:
    def test_output_loads_as_dataset(self, tmp_path):
        out = tmp_path / "out"
        cfg = _cfg(tmp_path, {"duration_s": 4.0, "noise_kpa": 0.0})
        assert run(["make-dataset", "--out", str(out), "--seed", "5",
                    "--config", str(cfg)]) == 0
        ds = sysid.load_dataset(out / "dataset.csv")
        assert len(ds) == 400

    def test_deterministic(self, tmp_path):
        cfg = _cfg(tmp_path, {"duration_s": 2.0})
        trees = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["make-dataset", "--out", str(out), "--seed", "11",
                        "--config", str(cfg)]) == 0
            trees.append(read_bytes_tree(out))
        assert trees[0] == trees[1]


def _cfg(tmp_path, doc):
    path = tmp_path / f"cfg_{abs(hash(json.dumps(doc, sort_keys=True)))}.json"
    path.write_text(json.dumps(doc))
    return path
