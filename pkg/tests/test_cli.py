import json
import subprocess
import sys

import numpy as np
import pytest

from steerqrng import cli, extract
from steerqrng.bits import BitStream
from steerqrng.errors import NumericalError
from steerqrng.gaussian import measured_cm


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr().out


def test_fixtures(tmp_path, capsys):
    code, out = run(capsys, "fixtures", "--out-dir", tmp_path)
    assert code == 0
    listing = json.loads(out)
    assert listing["2"]["G"] == pytest.approx(0.0532, abs=1e-3)
    assert sorted(p.name for p in tmp_path.glob("*.csv")) == [
        "cm_0.002km.csv", "cm_0.5km.csv", "cm_1km.csv", "cm_2km.csv"]


def test_steer_fixture_and_files(tmp_path, capsys):
    code, out = run(capsys, "steer", "--fixture", "--length-km", "0.5")
    assert code == 0 and json.loads(out)["G"] == pytest.approx(0.0829, abs=1e-3)
    cm_json = tmp_path / "cm.json"
    cm_json.write_text(json.dumps({"cm": measured_cm(1.0).entries.ravel().tolist()}))
    code, out = run(capsys, "steer", "--cm", cm_json)
    assert json.loads(out)["G"] == pytest.approx(0.0777, abs=1e-3)
    np.savetxt(tmp_path / "cm.csv", measured_cm(2.0).entries, delimiter=",")
    code, out = run(capsys, "steer", "--cm", tmp_path / "cm.csv")
    assert json.loads(out)["physical"] is True


def test_steer_model_default(capsys):
    code, out = run(capsys, "steer", "--length-km", "2")
    assert code == 0 and json.loads(out)["G"] > 0


def test_simulate_then_reconstruct(tmp_path, capsys):
    code, out = run(capsys, "simulate", "--fixture", "--length-km", "2", "--samples", 200_000,
                    "--seed", 5, "--out-dir", tmp_path)
    assert code == 0
    files = json.loads(out)["sessions"]
    code, out = run(capsys, "reconstruct", *files, "--out", tmp_path / "rec.json")
    rec = json.loads(out)
    cm = np.array(rec["cm"]).reshape(4, 4)
    se = np.array(rec["stderr"]).reshape(4, 4)
    assert abs(cm[0, 2] - 0.69) <= 4 * se[0, 2]
    assert json.loads((tmp_path / "rec.json").read_text())["n_samples"] == 400_000


def test_certify_single_period(tmp_path, capsys):
    code, out = run(capsys, "certify", "--fixture", "--length-km", "0.002", "--ob", 4, "--df", 10,
                    "--period", 6, "--out-dir", tmp_path)
    assert code == 0
    res = json.loads(out)["result"]
    assert res["certified"] and res["h_min"] == pytest.approx(0.01976, abs=2e-4)
    assert (tmp_path / "certification.json").exists()


def test_certify_scan(tmp_path, capsys):
    code, out = run(capsys, "certify", "--fixture", "--length-km", "2", "--ob", 2, "--df", 8,
                    "--out-dir", tmp_path)
    d = json.loads(out)
    assert code == 0 and len(d["scan"]) == 15
    assert d["T_best"] == max(d["scan"], key=lambda r: r["h_min"])["T"]


def test_extract_and_test(tmp_path, capsys):
    rng = np.random.default_rng(0)
    raw = BitStream.from_bits(rng.integers(0, 2, 5 * 72_600 * 40))
    raw.save(tmp_path / "raw.bin")
    BitStream.from_bits(rng.integers(0, 2, 72_600 + 1023), "seed").save(tmp_path / "seed.bin")
    code, out = run(capsys, "extract", "--raw", tmp_path / "raw.bin", "--hmin", 0.07057,
                    "--seed-file", tmp_path / "seed.bin", "--out-dir", tmp_path)
    d = json.loads(out)
    assert code == 0 and d["plan"]["n"] == 72_600 and d["extracted_bits"] == 200 * 1024
    code, out = run(capsys, "test", "--bits", tmp_path / "extracted.bin", "--seq-len", 20_480,
                    "--max-lag", 10, "--out-dir", tmp_path)
    d = json.loads(out)
    assert code == 0 and d["n_sequences"] == 10 and d["tests"]["rank"] == "not-implemented"
    assert (tmp_path / "battery.csv").exists() and (tmp_path / "autocorrelation.csv").exists()


def test_extract_from_session(tmp_path, capsys):
    run(capsys, "simulate", "--fixture", "--length-km", "0.002", "--samples", 60_000,
        "--out-dir", tmp_path)
    BitStream.from_bits(np.ones(103_700 + 1023, np.uint8), "seed").save(tmp_path / "seed.bin")
    code, out = run(capsys, "extract", "--samples", tmp_path / "session_qq.f8", "--ob", 4,
                    "--period", 6, "--hmin", 0.01976, "--seed-file", tmp_path / "seed.bin",
                    "--out-dir", tmp_path)
    d = json.loads(out)
    assert code == 0 and d["raw_bits"] == 120_000 and d["extracted_bits"] == 1024


def test_exit_code_validation(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[solver]\nbogus = 1\n")
    assert run(capsys, "run", "--config", bad, "--out-dir", tmp_path)[0] == 2
    assert run(capsys, "steer", "--cm", tmp_path / "missing.csv")[0] == 2
    assert run(capsys, "extract", "--raw", tmp_path / "missing.bin", "--hmin", 1,
               "--seed-file", tmp_path / "s.bin", "--out-dir", tmp_path)[0] == 2


def test_exit_code_gate(tmp_path, capsys):
    BitStream.from_bits(np.ones(64, np.uint8)).save(tmp_path / "raw.bin")
    code, _ = run(capsys, "extract", "--raw", tmp_path / "raw.bin", "--hmin", 0,
                  "--seed-file", tmp_path / "raw.bin", "--out-dir", tmp_path)
    assert code == 4


def test_exit_code_numerical(monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalError("forced")
    monkeypatch.setattr(cli, "certify_cm", boom)
    code, _ = run(capsys, "certify", "--fixture", "--length-km", "2", "--period", 6)
    assert code == 3


def test_run_unsteerable_exits_four(tmp_path):
    cfg = tmp_path / "u.toml"
    cfg.write_text("[source]\nsq1_db = 0.0\nasq1_db = 0.0\nsq2_db = 0.0\nasq2_db = 0.0\n"
                   "[acquisition]\nn_samples = 100000\n[binning]\nt_grid = [6.0]\n")
    res = subprocess.run([sys.executable, "-m", "steerqrng.cli", "run", "--config", str(cfg),
                          "--out-dir", str(tmp_path / "out"), "--length-km", "0", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 4
    rows = json.loads(res.stdout)
    assert [r["G"] for r in rows] == [0.0, 0.0]
    assert all(r["status"] == "gated" for r in rows)
    assert (tmp_path / "out" / "report.json").exists() and (tmp_path / "out" / "config.toml").exists()


def test_run_fixture_flags(tmp_path, capsys):
    code, out = run(capsys, "run", "--fixture", "--length-km", "0.002", "--ob", 4, "--df", 10,
                    "--variant", "full-assemblage", "--out-dir", tmp_path, "--workers", 1,
                    "--config", _small_config(tmp_path))
    rows = json.loads(out)
    assert code == 0 and rows[0]["certified"] is True and rows[0]["extracted_bits"] == 2048
    assert (tmp_path / "curves.csv").exists()


def _small_config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text("[binning]\nt_grid = [6.0]\n[extraction]\noutput_bits = 2048\n"
                 "[tests]\nrun = false\n")
    return p


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "steerqrng.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for sub in ("simulate", "reconstruct", "steer", "certify", "extract", "test", "run", "fixtures"):
        assert sub in res.stdout


def test_backend_reported(capsys, tmp_path):
    BitStream.from_bits(np.zeros(2000, np.uint8)).save(tmp_path / "raw.bin")
    BitStream.from_bits(np.zeros(1100 + 1023, np.uint8)).save(tmp_path / "seed.bin")
    code, out = run(capsys, "extract", "--raw", tmp_path / "raw.bin", "--hmin", 5,
                    "--seed-file", tmp_path / "seed.bin", "--out-dir", tmp_path)
    assert json.loads(out)["backend"] == extract.BACKEND
