import json
import subprocess
import sys

import pytest

from quadenergy.cli import main
from quadenergy.harness import CSV_HEADER


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_classify(capsys):
    code, out, _ = run(capsys, "classify", "--poly", "x+yz")
    data = json.loads(out)
    assert code == 0 and data["classification"] == "NonDegenerate"
    assert set(data["jacobians"]) == {"jx", "jy", "jz"}
    code, out, _ = run(capsys, "classify", "--poly", "sum-of-squares")
    assert json.loads(out)["classification"] == "Degenerate"


def test_classify_json_coefficients(capsys):
    code, out, _ = run(capsys, "classify", "--poly", '{"d": 1, "c": -2, "e": 1, "g": 1}')
    data = json.loads(out)
    assert data["critical_set"] == "Line"


def test_missing_option_is_an_error(capsys):
    code, _, err = run(capsys, "classify")
    assert code == 2 and err.startswith("error:")


def test_measure_build_and_check(capsys, tmp_path):
    path = tmp_path / "mu.csv"
    code, _, _ = run(capsys, "measure", "build", "--alpha", "0.5", "--depth", "5", "--out", str(path))
    assert code == 0 and path.exists()
    code, out, _ = run(capsys, "measure", "check", "--in", str(path))
    data = json.loads(out)
    assert data["alpha"] == 0.5 and data["atoms"] == 32
    assert data["frostman_constant"] > 0


def test_energy_scan_with_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"poly": "x+yz", "measure": "cantor:0.5", "delta-max": "2^-4",
                               "delta_min": 0.015625, "refine": 8}))
    out_path = tmp_path / "scan.csv"
    code, _, err = run(capsys, "energy", "scan", "--config", str(cfg), "--out", str(out_path),
                       "--refine", "4")
    lines = out_path.read_text().splitlines()
    assert code == 0 and lines[0] == CSV_HEADER and len(lines) == 4
    assert err.startswith("verdict ")
    # the flag overrides the file
    code, stdout, _ = run(capsys, "energy", "scan", "--poly", "x+yz", "--measure", "cantor:0.5",
                          "--delta-max", "2^-4", "--delta-min", "2^-6", "--refine", "4")
    assert stdout == out_path.read_text()


def test_energy_scan_refuses_degenerate(capsys):
    code, _, err = run(capsys, "energy", "scan", "--poly", "sum-of-squares", "--measure", "cantor:0.5",
                       "--delta-max", "2^-4", "--delta-min", "2^-6")
    assert code == 2 and "Degenerate" in err


def test_incidence_count_and_bench(capsys, tmp_path):
    pts = tmp_path / "p.csv"
    pts.write_text("x,y\n0,0\n0.25,0\n0.5,0\n0,0.25\n0.25,0.25,2\n")
    lines = tmp_path / "l.csv"
    lines.write_text("m,k\n0,0\n1,0\n")  # X = 0 and X = Y
    code, out, _ = run(capsys, "incidence", "count", "--points", str(pts), "--lines", str(lines),
                       "--delta", "1e-6")
    # X = 0: (0,0), (0,0.25); X = Y: (0,0), (0.25,0.25) x2
    assert code == 0 and out.strip() == "5"
    code, out, _ = run(capsys, "incidence", "bench", "--points", str(pts), "--lines", str(lines),
                       "--delta", "1e-6", "--repeat", "1")
    rows = out.strip().splitlines()
    assert rows[0] == "method,points,lines,delta,count,seconds"
    assert [r.split(",")[4] for r in rows[1:]] == ["5", "5"]


def test_construct_and_fit(capsys, tmp_path):
    path = tmp_path / "c.csv"
    code, _, _ = run(capsys, "construct", "--kind", "UnboundedSupport", "--delta", "2^-6",
                     "--out", str(path))
    assert code == 0 and path.read_text().startswith("#")
    scan = tmp_path / "scan.csv"
    scan.write_text(CSV_HEADER + "\n" + "\n".join(
        f"{2.0**-k!r},{2.0**(k / 2)!r},0,0,0,0,0,0,0,0," for k in range(4, 9)) + "\n")
    code, out, _ = run(capsys, "fit", "--in", str(scan))
    assert json.loads(out)["slope"] == pytest.approx(-0.5)


def test_verify_small_ladder(capsys, tmp_path):
    code, out, err = run(capsys, "verify", "--kind", "DivergentEnergy", "--ladder", "2^-4..2^-6",
                         "--refine", "4", "--summary", str(tmp_path / "s.json"))
    assert code == 0 and len(out.splitlines()) == 4
    assert json.loads((tmp_path / "s.json").read_text())["mode"] == "lower"


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "quadenergy.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "classify" in res.stdout
