"""End-to-end checks of the command-line interface.

Commands run in-process through ``main`` so coverage and debuggers see
them; one subprocess test confirms the installed entry point works.
"""

import contextlib
import io
import json
import subprocess

import pytest

from reachmon.cli import main
from reachmon.io import (
    BENCH_COLUMNS,
    RATES_COLUMNS,
    load_certificate,
    load_trace_csv,
    validate_certificate,
)
from reachmon.harness import SENSOR_COLUMNS
from reachmon.io import load_model

STEALTH_GAIN = [[-0.356353, -0.515718, -0.424533],
                [-0.225879, -0.051172, -0.490715]]
SURGE_NORMAL = [0.2985996054218075, 0.4387853676660638, 0.0797301504101922,
                -0.8437705730112103]


def quiet_main(argv):
    """Run the CLI, swallowing its stdout (stderr stays visible)."""
    with contextlib.redirect_stdout(io.StringIO()):
        return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, repo_root):
    """Certificates, a small scenario, and a recorded trace to replay."""
    root = tmp_path_factory.mktemp("cli")
    model = repo_root / "models" / "synth_small.json"
    assert quiet_main(["calibrate", model, "--beta", "0.05",
                       "--delta-h", "0.9", "--out", root / "cert.json"]) == 0
    assert quiet_main(["calibrate", model, "--beta", "0.1",
                       "--delta-h", "0.9", "--out", root / "cert_b10.json"]) == 0
    scenario = {
        "model_ref": str(model),
        "controller": {"type": "static", "gain": STEALTH_GAIN},
        "attack": {"strategy": "residual_steering", "start": 30, "end": 400,
                   "sensors": [0, 1], "scale": 10.0, "alarm_mimic_rate": 0.05},
        "unsafe_set": {"constraints": [
            {"name": "surge_high", "normal": SURGE_NORMAL, "offset": 40.0}]},
        "monitor": {"K": 50, "beta": 0.05, "p": 0.99},
        "run": {"horizon": 400, "seed": 99},
    }
    (root / "tiny.json").write_text(json.dumps(scenario))
    assert quiet_main(["simulate", root / "tiny.json",
                       "--out", root / "trace.csv"]) == 0
    return root


class TestCalibrate:
    def test_writes_a_certificate_that_validates(self, workdir, repo_root):
        model_path = repo_root / "models" / "synth_small.json"
        cert, hashes = load_certificate(workdir / "cert.json")
        validate_certificate(cert, hashes, load_model(model_path), model_path)
        assert cert.beta == 0.05
        assert cert.b_star == pytest.approx(0.9)

    def test_reports_the_solution(self, tmp_path, repo_root, capsys):
        model = repo_root / "models" / "synth_small.json"
        rc = main(["calibrate", str(model), "--beta", "0.05",
                   "--delta-h", "0.9", "--out", str(tmp_path / "c.json")])
        assert rc == 0
        assert "certificate written" in capsys.readouterr().out

    def test_rejects_degenerate_grid(self, tmp_path, repo_root, capsys):
        model = repo_root / "models" / "synth_small.json"
        rc = main(["calibrate", str(model), "--beta", "0.05",
                   "--delta-h", "1.0", "--out", str(tmp_path / "c.json")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestSimulate:
    def test_trace_round_trips(self, workdir):
        data = load_trace_csv(workdir / "trace.csv")
        assert data["u"].shape == (400, 2)
        assert data["ybar"].shape == (400, 3)

    def test_scenario_seed_makes_runs_identical(self, workdir, tmp_path):
        assert quiet_main(["simulate", workdir / "tiny.json",
                           "--out", tmp_path / "again.csv"]) == 0
        assert ((tmp_path / "again.csv").read_bytes()
                == (workdir / "trace.csv").read_bytes())

    def test_summary_line(self, workdir, tmp_path, capsys):
        rc = main(["simulate", str(workdir / "tiny.json"),
                   "--out", str(tmp_path / "t.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "400 steps" in out
        assert "residual_steering [30, 400)" in out


class TestMonitor:
    def test_replay_matches_cosimulation(self, workdir, tmp_path):
        live = tmp_path / "live"
        replay = tmp_path / "replay"
        rc = quiet_main(["monitor", workdir / "tiny.json", workdir / "cert.json",
                         "--out-metrics", f"{live}.csv",
                         "--out-verdicts", f"{live}.jsonl"])
        assert rc == 0
        rc = quiet_main(["monitor", workdir / "tiny.json", workdir / "cert.json",
                         "--trace", workdir / "trace.csv",
                         "--out-metrics", f"{replay}.csv",
                         "--out-verdicts", f"{replay}.jsonl"])
        assert rc == 0
        assert (live.with_suffix(".csv").read_bytes()
                == replay.with_suffix(".csv").read_bytes())
        assert (live.with_suffix(".jsonl").read_bytes()
                == replay.with_suffix(".jsonl").read_bytes())
        lines = live.with_suffix(".jsonl").read_text().splitlines()
        assert len(lines) == 400
        assert json.loads(lines[0])["k"] == 0

    def test_rejects_beta_mismatch(self, workdir, tmp_path, capsys):
        rc = main(["monitor", str(workdir / "tiny.json"),
                   str(workdir / "cert_b10.json"),
                   "--out-metrics", str(tmp_path / "m.csv"),
                   "--out-verdicts", str(tmp_path / "v.jsonl")])
        assert rc == 1
        assert "does not match certificate beta" in capsys.readouterr().err

    def test_rejects_tampered_certificate(self, workdir, tmp_path, capsys):
        blob = (workdir / "cert.json").read_text()
        tau = json.loads(blob)["tau"]
        bad = tmp_path / "tampered.json"
        bad.write_text(blob.replace(str(tau), str(tau * 1.01), 1))
        rc = main(["monitor", str(workdir / "tiny.json"), str(bad),
                   "--out-metrics", str(tmp_path / "m.csv"),
                   "--out-verdicts", str(tmp_path / "v.jsonl")])
        assert rc == 1
        assert "altered" in capsys.readouterr().err


class TestEvaluate:
    def evaluate(self, workdir, dest, extra=()):
        return quiet_main(["evaluate", workdir / "tiny.json",
                           "--k-list", "10,50", "--trials", "4", "--seed", "11",
                           "--cert", workdir / "cert.json",
                           "--out-rates", dest / "rates.csv",
                           "--out-roc", dest / "roc.csv", *extra])

    def test_rate_and_roc_tables(self, workdir, tmp_path):
        assert self.evaluate(workdir, tmp_path) == 0
        header, k10, k50 = (tmp_path / "rates.csv").read_text().splitlines()
        assert header == ",".join(RATES_COLUMNS)
        by_name = dict(zip(RATES_COLUMNS, k10.split(",")))
        assert (by_name["k_horizon"], by_name["tn"]) == ("10", "4")
        by_name = dict(zip(RATES_COLUMNS, k50.split(",")))
        assert (by_name["k_horizon"], by_name["fp"]) == ("50", "4")
        assert (tmp_path / "roc.csv").read_text().splitlines() == [
            "fpr,tpr,k_horizon", "0,0,10", "1,0,50"]

    def test_reruns_are_byte_identical(self, workdir, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        first.mkdir(), second.mkdir()
        assert self.evaluate(workdir, first) == 0
        assert self.evaluate(workdir, second) == 0
        assert ((first / "rates.csv").read_bytes()
                == (second / "rates.csv").read_bytes())

    def test_sensor_sweep_option(self, workdir, tmp_path):
        rc = self.evaluate(workdir, tmp_path,
                           extra=["--sensors-list", "1,2",
                                  "--out-sensors", tmp_path / "sensors.csv"])
        assert rc == 0
        lines = (tmp_path / "sensors.csv").read_text().splitlines()
        assert lines[0] == ",".join(SENSOR_COLUMNS)
        assert [line.split(",")[0] for line in lines[1:]] == ["1", "2"]


class TestBench:
    def test_tables_and_fit(self, workdir, repo_root, tmp_path):
        model = repo_root / "models" / "synth_small.json"
        rc = quiet_main(["bench", model, "--cert", workdir / "cert.json",
                         "--k-list", "5,10", "--constraint-list", "2,4",
                         "--checks", "5", "--fixed-k", "10",
                         "--fixed-constraints", "2", "--seed", "3",
                         "--out", tmp_path / "bench.csv",
                         "--fit-out", tmp_path / "fit.json"])
        assert rc == 0
        lines = (tmp_path / "bench.csv").read_text().splitlines()
        assert lines[0] == ",".join(BENCH_COLUMNS)
        assert len(lines) == 5
        fit = json.loads((tmp_path / "fit.json").read_text())
        for sweep in ("k_sweep", "constraint_sweep"):
            assert {"slope", "intercept", "r_squared"} <= set(fit[sweep])
            # two points per sweep, so the line fits exactly
            assert fit[sweep]["r_squared"] == pytest.approx(1.0)


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [],
        ["calibrate"],
        ["frobnicate"],
        ["evaluate", "x.json", "--k-list", "abc", "--trials", "2"],
        ["evaluate", "x.json", "--k-list", "", "--trials", "2"],
    ])
    def test_bad_invocations_exit_one(self, argv, capsys):
        assert main(argv) == 1
        capsys.readouterr()

    def test_installed_entry_point(self):
        proc = subprocess.run(["reachmon"], capture_output=True, text=True)
        assert proc.returncode == 1
        assert "usage:" in proc.stderr
        helped = subprocess.run(["reachmon", "--help"],
                                capture_output=True, text=True)
        assert helped.returncode == 0
        assert "calibrate" in helped.stdout
