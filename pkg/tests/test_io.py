"""Serialization: canonical JSON, model/certificate files, CSV tables."""

import hashlib
import json
import math

import numpy as np
import pytest

from reachmon.errors import CertificateError, SchemaError
from reachmon.estimation import ResidualDetector, calibrate_kalman, chi_square_threshold
from reachmon.geometry import HalfSpace, UnsafeSet
from reachmon.io import (
    BENCH_COLUMNS,
    RATES_COLUMNS,
    canonical_json,
    estimator_fingerprint,
    format_float,
    load_certificate,
    load_model,
    load_trace_csv,
    load_unsafe_set,
    save_certificate,
    save_model,
    sha256_file,
    validate_certificate,
    write_metrics_csv,
    write_table_csv,
    write_trace_csv,
    write_verdicts_jsonl,
)
from reachmon.monitor import MonitorConfig, monitor_trace, verdicts_from_series
from reachmon.plant import AttackPlan, PlantModel, StaticOutputController, run_closed_loop
from reachmon.reachability import ReachCertificate


class TestCanonicalForms:
    def test_float_round_trip_is_exact(self):
        rng = np.random.default_rng(11)
        values = list(rng.standard_normal(50)) + [
            1e-300, 1e300, -1.0 / 3.0, 0.1 + 0.2, 2.0**-52, -0.0]
        for v in values:
            assert float(format_float(v)) == float(v)

    def test_json_layout(self):
        text = canonical_json({"b": 1, "a": [True, None, "x"], "c": 0.5})
        assert text == '{"b":1,"a":[true,null,"x"],"c":0.5}'

    def test_json_non_finite_becomes_null(self):
        assert canonical_json([math.nan, math.inf, -math.inf]) == "[null,null,null]"

    def test_json_arrays(self):
        assert canonical_json(np.array([[1.5, 2.0]])) == "[[1.5,2]]"

    def test_json_rejects_unknown_types(self):
        with pytest.raises(TypeError):
            canonical_json(object())

    def test_sha256_file(self, tmp_path):
        path = tmp_path / "blob.bin"
        path.write_bytes(b"reach")
        assert sha256_file(path) == hashlib.sha256(b"reach").hexdigest()


class TestModelFiles:
    def test_round_trip(self, synth_model, tmp_path):
        path = tmp_path / "model.json"
        save_model(synth_model, path)
        loaded = load_model(path)
        for name in ("a", "b", "c", "process_cov", "measurement_cov"):
            assert np.array_equal(getattr(loaded, name), getattr(synth_model, name))
        assert loaded.dt == synth_model.dt
        first = path.read_bytes()
        save_model(loaded, path)
        assert path.read_bytes() == first

    def test_missing_key(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text('{"A":[[1]],"B":[[1]],"C":[[1]],"dt":1}')
        with pytest.raises(SchemaError, match="Sigma1"):
            load_model(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("not json {")
        with pytest.raises(SchemaError):
            load_model(path)

    def test_top_level_must_be_object(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("[1,2,3]")
        with pytest.raises(SchemaError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            load_model(tmp_path / "absent.json")

    def test_malformed_matrix(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text(
            '{"A":[[1,"x"]],"B":[[1]],"C":[[1]],"Sigma1":[[1]],'
            '"Sigma2":[[1]],"dt":1}')
        with pytest.raises(SchemaError, match="malformed"):
            load_model(path)


class TestUnsafeSetFiles:
    PAYLOAD = {
        "constraints": [
            {"name": "surge_high", "normal": [1.0, 0.0], "offset": 2.5},
            {"normal": [0.0, -1.0], "offset": 1.0},
        ],
        "units": "ignored extra key",
    }

    def test_from_file(self, tmp_path):
        path = tmp_path / "unsafe.json"
        path.write_text(json.dumps(self.PAYLOAD))
        unsafe = load_unsafe_set(path)
        assert len(unsafe) == 2
        assert unsafe.half_spaces[0].name == "surge_high"
        assert unsafe.half_spaces[1].name == "constraint_1"
        assert unsafe.offsets == pytest.approx([2.5, 1.0])

    def test_from_dict_and_list(self):
        from_dict = load_unsafe_set(self.PAYLOAD)
        from_list = load_unsafe_set(self.PAYLOAD["constraints"])
        assert np.array_equal(from_dict.normals, from_list.normals)

    def test_missing_constraints_key(self):
        with pytest.raises(SchemaError, match="constraints"):
            load_unsafe_set({"walls": []})

    def test_constraints_must_be_a_list(self):
        with pytest.raises(SchemaError, match="list"):
            load_unsafe_set({"constraints": {"normal": [1.0], "offset": 0.0}})

    def test_entry_must_have_normal_and_offset(self):
        with pytest.raises(SchemaError, match=r"\[0\]"):
            load_unsafe_set({"constraints": [{"offset": 1.0}]})


class TestCertificateFiles:
    def test_round_trip_and_validation(self, synth_cert, synth_model, repo_root,
                                       tmp_path):
        model_path = repo_root / "models" / "synth_small.json"
        cert_path = tmp_path / "cert.json"
        save_certificate(synth_cert, cert_path, model_path)
        loaded, hashes = load_certificate(cert_path)
        assert np.array_equal(loaded.pi, synth_cert.pi)
        assert loaded.b_star == synth_cert.b_star
        assert loaded.tau == synth_cert.tau
        assert loaded.w_bar == synth_cert.w_bar
        assert hashes["model_sha256"] == sha256_file(model_path)
        margin = validate_certificate(loaded, hashes, synth_model, model_path)
        assert margin >= -1e-8

    def test_model_file_tamper_is_fatal(self, synth_cert, synth_model, repo_root,
                                        tmp_path):
        model_path = repo_root / "models" / "synth_small.json"
        cert_path = tmp_path / "cert.json"
        save_certificate(synth_cert, cert_path, model_path)
        moved = tmp_path / "model.json"
        moved.write_text(model_path.read_text().replace("0.05", "0.06", 1))
        loaded, hashes = load_certificate(cert_path)
        with pytest.raises(CertificateError, match="does not match"):
            validate_certificate(loaded, hashes, synth_model, moved)

    def test_estimator_field_tamper_is_fatal(self, synth_cert, synth_model,
                                             repo_root, tmp_path):
        model_path = repo_root / "models" / "synth_small.json"
        cert_path = tmp_path / "cert.json"
        save_certificate(synth_cert, cert_path, model_path)
        data = json.loads(cert_path.read_text())
        data["tau"] = data["tau"] * 1.01
        cert_path.write_text(json.dumps(data))
        loaded, hashes = load_certificate(cert_path)
        with pytest.raises(CertificateError, match="altered"):
            validate_certificate(loaded, hashes, synth_model, model_path)

    def test_fingerprint_depends_on_each_field(self, synth_cert):
        import dataclasses
        base = estimator_fingerprint(synth_cert)
        bumped = dataclasses.replace(synth_cert, beta=synth_cert.beta * 2)
        assert estimator_fingerprint(bumped) != base

    def test_std_error_key_is_optional(self, synth_cert, repo_root, tmp_path):
        model_path = repo_root / "models" / "synth_small.json"
        cert_path = tmp_path / "cert.json"
        save_certificate(synth_cert, cert_path, model_path)
        data = json.loads(cert_path.read_text())
        del data["w_bar_std_error"]
        cert_path.write_text(json.dumps(data))
        loaded, _ = load_certificate(cert_path)
        assert loaded.w_bar_std_error == 0.0

    def test_missing_key(self, tmp_path):
        path = tmp_path / "cert.json"
        path.write_text('{"Pi": [[1.0]]}')
        with pytest.raises(SchemaError, match="missing keys"):
            load_certificate(path)


@pytest.fixture()
def noisy_trace(synth_model, synth_calibration):
    det = ResidualDetector(synth_calibration.innovation_cov,
                           chi_square_threshold(3, 0.05))
    ctrl = StaticOutputController(gain=np.zeros((2, 3)))
    plan = AttackPlan(strategy="growing_bias", start=4, end=12, sensors=(0,),
                      rate=0.5)
    return run_closed_loop(synth_model, ctrl, synth_calibration, det, 12,
                           attack=plan, seed=5)


class TestTraceCsv:
    def test_round_trip(self, noisy_trace, tmp_path):
        path = tmp_path / "trace.csv"
        write_trace_csv(noisy_trace, path)
        data = load_trace_csv(path)
        assert np.array_equal(data["k"], np.arange(12))
        assert np.array_equal(data["x"], noisy_trace.x[:-1])
        assert np.array_equal(data["u"], noisy_trace.u)
        assert np.array_equal(data["y"], noisy_trace.y)
        assert np.array_equal(data["ybar"], noisy_trace.ybar)
        assert np.array_equal(data["delta"], noisy_trace.delta)
        assert data["delta"].any()

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaError, match="not found"):
            load_trace_csv(tmp_path / "absent.csv")

    def test_missing_column_group(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("k,x_0\n0,1.0\n")
        with pytest.raises(SchemaError, match="u_"):
            load_trace_csv(path)

    def test_empty_body(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("k,x_0,u_0,y_0,ybar_0,delta_0\n")
        with pytest.raises(SchemaError, match="empty"):
            load_trace_csv(path)


def tiny_monitor_series():
    model = PlantModel(a=[[2.0]], b=[[0.0]], c=[[1.0]], process_cov=[[0.0]],
                       measurement_cov=[[0.0]], dt=0.1)
    cert = ReachCertificate(pi=[[0.01]], b_star=0.5, p=0.95, w_bar=1.0,
                            objective=0.0, beta=0.05, tau=3.84, gain=[[0.1]],
                            innovation_cov=[[1.0]])
    cfg = MonitorConfig(model=model, cert=cert,
                        controller=StaticOutputController(gain=[[0.0]]),
                        unsafe=UnsafeSet([HalfSpace([1.0], 1.0)]), k_horizon=12)
    xhat = np.array([[1e-4], [0.01], [0.95]])
    return cfg, monitor_trace(cfg, xhat, keep_profiles=True)


class TestMetricsCsv:
    def test_layout(self, tmp_path):
        _, series = tiny_monitor_series()
        path = tmp_path / "metrics.csv"
        write_metrics_csv(series, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,safe,k_f,tc_seconds,impact,d_u,t_u,min_distance"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[1] == "1"
        assert first[2] == "-1"
        assert first[3] == "nan"
        last = lines[3].split(",")
        assert last[1] == "0"
        assert int(last[2]) == series.k_f[2] >= 0
        assert float(last[3]) == pytest.approx(series.tc_seconds[2], abs=1e-15)


class TestVerdictsJsonl:
    KEYS = ["k", "safe", "k_f", "violated_constraint", "center_unsafe",
            "tc_seconds", "impact", "min_distance", "baseline_du",
            "baseline_tu", "per_step_min_distance"]

    def test_layout_and_invariants(self, tmp_path):
        cfg, series = tiny_monitor_series()
        path = tmp_path / "verdicts.jsonl"
        write_verdicts_jsonl(verdicts_from_series(cfg, series), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        for line in lines:
            record = json.loads(line)
            assert list(record) == self.KEYS
            assert record["safe"] == (record["k_f"] is None)
            assert record["safe"] == (record["tc_seconds"] is None)
            if not record["safe"]:
                assert record["min_distance"] == min(
                    record["per_step_min_distance"])
                assert record["impact"] > 0.0


class TestTableCsv:
    def test_types_and_layout(self, tmp_path):
        path = tmp_path / "table.csv"
        write_table_csv(path, ("k_horizon", "tpr"), [
            {"k_horizon": 50, "tpr": 0.25},
            {"k_horizon": 100, "tpr": 1.0 / 3.0},
        ])
        lines = path.read_text().splitlines()
        assert lines[0] == "k_horizon,tpr"
        assert lines[1] == "50,0.25"
        assert lines[2].startswith("100,0.33333333333333331")

    def test_missing_column_is_schema_error(self, tmp_path):
        with pytest.raises(SchemaError, match="tpr"):
            write_table_csv(tmp_path / "t.csv", ("k_horizon", "tpr"),
                            [{"k_horizon": 50}])

    def test_declared_schemas(self):
        assert RATES_COLUMNS[:7] == ("k_horizon", "trials", "tp", "fp", "tn",
                                     "fn", "other")
        assert BENCH_COLUMNS[0] == "k_horizon"
