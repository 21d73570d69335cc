import csv
import json

import numpy as np
import pytest

from steerqrng import pipeline
from steerqrng.bits import BitStream
from steerqrng.config import PipelineConfig, config_from_dict
from steerqrng.errors import SecurityGateError, ValidationError
from steerqrng.gaussian import MEASURED_CM_VALUES

MEASURED_G = {0.002: 0.0993, 0.5: 0.0829, 1.0: 0.0777, 2.0: 0.0532}


def replay_config(**extra):
    data = {
        "source": {"mode": "fixtures"},
        "channel": {"lengths_km": [0.002, 2.0]},
        "binning": {"o_b": 4, "t_grid": [6.0]},
        "solver": {"d_f": 10},
        "acquisition": {"seed": 42},
        "extraction": {"output_bits": 20_480, "max_raw_bits": 10_000_000},
        "tests": {"seq_len": 1000, "max_lag": 20, "autocorrelation_bits": 20_000},
    }
    for section, values in extra.items():
        data.setdefault(section, {}).update(values)
    return config_from_dict(data)


def unsteerable_config():
    return config_from_dict({
        "source": {"sq1_db": 0.0, "asq1_db": 0.0, "sq2_db": 0.0, "asq2_db": 0.0},
        "binning": {"t_grid": [6.0]},
        "solver": {"d_f": 8},
        "acquisition": {"n_samples": 100_000},
        "extraction": {"output_bits": 2048},
    })


@pytest.fixture(scope="module")
def replay(tmp_path_factory):
    out = tmp_path_factory.mktemp("replay")
    return pipeline.run_pipeline(replay_config(), out), out


def strip_timing(d):
    if isinstance(d, dict):
        return {k: strip_timing(v) for k, v in d.items() if k != "seconds"}
    if isinstance(d, list):
        return [strip_timing(v) for v in d]
    return d


def test_fixture_replay_steering():
    cfg = replay_config()
    for length, g in MEASURED_G.items():
        out = pipeline.step_steering(cfg, pipeline.source_cm(cfg, length), seed=0)
        assert out["G"] == pytest.approx(g, abs=1e-3)
        assert out["reconstruction"] is None


def test_model_steering_is_significant():
    cfg = PipelineConfig()
    for length in cfg.channel.lengths_km:
        out = pipeline.step_steering(cfg, pipeline.source_cm(cfg, length), seed=3)
        assert out["steering_significant"]
        assert out["G"] == pytest.approx(out["G_model"], abs=5 * out["G_stderr"])


def test_replay_report(replay):
    report, out = replay
    assert report.exit_code == 0
    short, far = report.lengths
    assert [e["length_km"] for e in report.lengths] == [0.002, 2.0]
    assert short["certification"]["result"]["certified"]
    assert short["certification"]["result"]["h_min"] == pytest.approx(0.01976, abs=2e-4)
    assert far["certification"]["result"]["h_min"] == pytest.approx(5.28e-4, abs=2e-5)
    ext = short["extraction"]
    assert ext["plan"]["n"] == 103_700 and ext["extracted_bits"] == 20_480
    assert ext["digitization"]["bits_per_sample"] == 2
    assert ext["digitization"]["max_abs_z"] < 5
    assert ext["tests"]["battery"]["n_sequences"] == 20
    assert ext["seed_provenance"].startswith("pseudo-random")
    # the far branch hits the raw-bit budget after two blocks
    dig = far["extraction"]["digitization"]
    assert dig["truncated_by_budget"] and dig["blocks"] == 10_000_000 // far["extraction"]["plan"]["n"]


def test_replay_outputs_on_disk(replay):
    report, out = replay
    d = json.loads((out / "report.json").read_text())
    assert len(d["lengths"]) == 2
    rows = list(csv.DictReader(open(out / "curves.csv")))
    assert [r["length_km"] for r in rows] == ["0.002", "2.0"]
    assert float(rows[0]["h_min"]) > float(rows[1]["h_min"]) > 0
    bits = BitStream.load(out / "extracted_0.002km.bin")
    assert bits.length == 20_480 and bits.origin == "extracted"
    assert (out / "battery_0.002km.json").exists() and (out / "autocorrelation_0.002km.csv").exists()


def test_replay_is_deterministic(replay, tmp_path):
    report, _ = replay
    again = pipeline.run_pipeline(replay_config(), tmp_path)
    assert json.dumps(strip_timing(again.to_dict()), sort_keys=True) == \
        json.dumps(strip_timing(report.to_dict()), sort_keys=True)


def test_parallel_matches_serial(replay, tmp_path):
    report, _ = replay
    par = pipeline.run_pipeline(replay_config(parallel={"workers": 2}), tmp_path)
    a, b = strip_timing(par.to_dict()), strip_timing(report.to_dict())
    assert a["lengths"] == b["lengths"]


def test_unsteerable_source_is_gated(tmp_path):
    report = pipeline.run_pipeline(unsteerable_config(), tmp_path)
    for entry in report.lengths:
        assert entry["steering"]["G"] == 0.0
        assert entry["certification"] is None and "certification_skipped" in entry
        assert entry["extraction"]["status"] == "refused"
        assert "no certified entropy" in entry["extraction"]["reason"]
        assert entry["status"] == "gated"
    assert report.exit_code == 4
    assert not list(tmp_path.glob("extracted_*"))


def test_step_extract_gate():
    cfg = replay_config()
    cm = pipeline.source_cm(cfg, 0.002)
    with pytest.raises(SecurityGateError):
        pipeline.step_extract(cfg, cm, None, 0.0, pipeline._seeds(cfg, 0), None, "x")
    with pytest.raises(SecurityGateError):
        pipeline.step_extract(cfg, cm, None, pipeline.H_MIN_FLOOR / 2, pipeline._seeds(cfg, 0), None, "x")


def test_budget_below_one_block():
    cfg = replay_config(extraction={"max_raw_bits": 1000})
    report = pipeline.run_pipeline(cfg.override("channel", lengths_km=(0.002,)), None)
    (entry,) = report.lengths
    assert entry["status"] == "error" and entry["error"]["stage"] == "extraction"
    assert entry["error"]["kind"] == "validation"
    assert report.exit_code == 2


def test_stage_errors_do_not_stop_other_lengths(monkeypatch):
    real = pipeline.step_certify

    def flaky(cfg, cm):
        if cm.entries[0, 0] == MEASURED_CM_VALUES[2.0][0]:
            raise np.linalg.LinAlgError("forced")
        return real(cfg, cm)

    monkeypatch.setattr(pipeline, "step_certify", flaky)
    report = pipeline.run_pipeline(replay_config(tests={"run": False}), None)
    short, far = report.lengths
    assert short["status"] == "ok" and short["extraction"]["tests"] == {"status": "skipped"}
    assert far["status"] == "error" and far["error"]["kind"] == "numerical"
    assert far["error"]["stage"] == "certification"
    assert report.exit_code == 3


def test_seed_file_is_used(tmp_path):
    nbits = 103_700 + 1023
    BitStream.from_bits(np.random.default_rng(1).integers(0, 2, nbits), "seed").save(tmp_path / "s.bin")
    cfg = replay_config(channel={"lengths_km": [0.002]}, tests={"run": False},
                        extraction={"seed_file": str(tmp_path / "s.bin")})
    (entry,) = pipeline.run_pipeline(cfg, None).lengths
    assert entry["extraction"]["seed_provenance"] == "file"
    short = replay_config(channel={"lengths_km": [0.002]}, tests={"run": False},
                          extraction={"seed_file": str(tmp_path / "s.bin"), "n": 200_000})
    (bad,) = pipeline.run_pipeline(short, None).lengths
    assert bad["status"] == "error" and "seed file" in bad["error"]["message"]


def test_exit_code_priority():
    rep = pipeline.PipelineReport({})
    rep.lengths = [{"status": "gated"}, {"status": "ok"}]
    assert rep.exit_code == 4
    rep.lengths.append({"status": "error", "error": {"kind": "validation"}})
    assert rep.exit_code == 2
    rep.lengths.append({"status": "error", "error": {"kind": "numerical"}})
    assert rep.exit_code == 3


def test_certification_rejects_unphysical_cm():
    from steerqrng.gaussian import CovMat
    bad = CovMat.standard_form(1.0, 1.0, 1.0, 1.0, 0.5, -0.5)
    with pytest.raises(ValidationError, match="unphysical"):
        pipeline.step_certify(replay_config(), bad)
