import csv
import io
import json
import math
import subprocess
import sys

import pytest

from warpdn.cli import main, parse_config, UsageError
from warpdn.cloak import LEFT, RIGHT
from warpdn.geometry import WarpedMetric
from warpdn.profiles import constant_profile, expr_profile, polynomial_profile


def _dump(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture()
def files(tmp_path):
    one, zero = constant_profile(1.0).to_json(), constant_profile(0.0).to_json()
    sq = polynomial_profile([1.0, 2.0, 1.0])
    gauge = WarpedMetric(1, 1, sq, sq, constant_profile(1.0), fiber1="circle", fiber2="circle")
    unit = WarpedMetric(1, 1, constant_profile(1.0), constant_profile(1.0), fiber1="circle", fiber2="circle")
    crit = WarpedMetric(1, 1, polynomial_profile([1.0, 1.0]), polynomial_profile([1.0, 1.0]),
                        regularity="criticalL1", fiber1="circle", fiber2="circle")
    return {
        "unit": _dump(tmp_path / "unit.json", {"p": one, "q": zero, "r": one, "name": "unit"}),
        "shifted": _dump(tmp_path / "shifted.json", {"p": one, "q": one, "r": one}),
        "noq": _dump(tmp_path / "noq.json", {"p": one, "r": one}),
        "gauge": _dump(tmp_path / "gauge.json", gauge.to_json()),
        "unit_metric": _dump(tmp_path / "unit_metric.json", unit.to_json()),
        "crit": _dump(tmp_path / "crit.json", crit.to_json()),
        "f1": _dump(tmp_path / "f1.json", constant_profile(1.0, (LEFT, RIGHT)).to_json()),
        "f2": _dump(tmp_path / "f2.json", expr_profile("2 + sin(2*pi*x)", (LEFT, RIGHT)).to_json()),
        "bad_json": str((tmp_path / "bad.json").write_text("{") and tmp_path / "bad.json"),
        "dir": tmp_path,
    }


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---- exit codes ------------------------------------------------------------------

def test_spectrum_unit(files):
    out = str(files["dir"] / "spec.csv")
    assert main(["spectrum", "--problem", files["unit"], "--kmax", "3", "--out", out]) == 0
    rows = _rows(out)
    assert [int(r["k"]) for r in rows] == [1, 2, 3]
    assert float(rows[0]["eigenvalue"]) == pytest.approx(math.pi ** 2, rel=1e-9)
    assert all(float(r["tol"]) == 1e-10 for r in rows)


@pytest.mark.parametrize("argv", [
    ["spectrum"],
    ["spectrum", "--problem", "missing.json"],
    ["spectrum", "--problem", "{unit}", "--kmax", "0"],
    ["spectrum", "--problem", "{unit}", "--kind", "NN"],
    ["spectrum", "--problem", "{noq}"],
    ["spectrum", "--problem", "{bad_json}"],
    ["spectrum", "--problem", "{unit}", "--tol", "-1"],
    ["wtfunc", "--problem", "{unit}", "--z", "abc"],
    ["bessel", "--nu", "-1", "--x", "1"],
    ["bessel", "--nu", "1", "--x", "0"],
    ["dnmap", "--metric", "{crit}", "--lambda", "1"],
    ["cloak-verify", "--f1", "{f1}", "--f2", "{f2}", "--r", "0.5"],
    ["fit", "--family", "{unit}", "--data", "{unit}"],
    ["nonsense"],
])
def test_usage_errors_exit_2(files, argv, capsys):
    argv = [a.format(**files) for a in argv]
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_parse_config_raises_usage_error(files):
    with pytest.raises(UsageError):
        parse_config(["spectrum", "--problem", files["unit"], "--metric", files["gauge"]])


def test_verification_failure_exits_1(files, capsys):
    # round-off discrepancy is nonzero, so a tolerance of 1e-30 must fail
    assert main(["gauge-verify", "--metric", files["gauge"], "--count", "4", "--tol", "1e-30"]) == 1
    assert "false" in capsys.readouterr().out


def test_gauge_verify_passes(files):
    out = str(files["dir"] / "g.csv")
    assert main(["gauge-verify", "--metric", files["gauge"], "--count", "10", "--out", out]) == 0
    row = _rows(out)[0]
    assert row["pass"] == "true"
    assert float(row["discrepancy"]) <= 1e-6


def test_cloak_verify_passes(files):
    out = str(files["dir"] / "c.csv")
    assert main(["cloak-verify", "--f1", files["f1"], "--f2", files["f2"], "--out", out]) == 0
    rows = _rows(out)
    assert len(rows) == 20
    assert float(rows[0]["R1"]) == pytest.approx(32.0, abs=1e-8)
    assert max(float(r["discrepancy"]) for r in rows) <= 1e-10


# ---- output ------------------------------------------------------------------

def test_output_is_deterministic(files):
    a, b = files["dir"] / "a.csv", files["dir"] / "b.csv"
    for path in (a, b):
        assert main(["dnmap", "--metric", files["gauge"], "--count", "6", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert list(rows[0]) == ["m", "n", "mu", "nu", "L", "T", "R", "tol"]
    assert len(rows) == 6


def test_unit_dnmap_values(files, capsys):
    assert main(["dnmap", "--metric", files["unit_metric"], "--count", "3", "--format", "json"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["subcommand"] == "dnmap" and obj["tol"] == 1e-10
    blk = next(r for r in obj["rows"] if r["mu"] + r["nu"] == 1.0)
    assert blk["R"] == pytest.approx(1.0 / math.tanh(1.0), abs=1e-9)
    assert blk["T"] == pytest.approx(-1.0 / math.sinh(1.0), abs=1e-9)


def test_wtfunc_and_indicator(files, capsys):
    assert main(["wtfunc", "--problem", files["unit"], "--z", "-4", "-1+2j"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert float(rows[0]["M_re"]) == pytest.approx(-2.0 / math.tanh(2.0), rel=1e-8)
    assert main(["indicator", "--problem", files["unit"], "--radii", "10", "20"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [float(r["radius"]) for r in rows] == [10.0, 20.0]


def test_cam_and_conformal(files, capsys):
    assert main(["cam", "--problem-a", files["unit"], "--problem-b", files["shifted"], "--format", "json"]) == 0
    obj = json.loads(capsys.readouterr().out)
    assert obj["rows"][0]["equivalent"] is False
    assert main(["conformal-ode", "--metric", files["unit_metric"], "--cells", "32"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert max(abs(float(r["kappa"]) - 1.0) for r in rows) <= 1e-8


def test_bessel_rows(capsys):
    assert main(["bessel", "--nu", "0.5", "1", "--x", "2"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert len(rows) == 2
    assert float(rows[0]["I"]) == pytest.approx(math.sqrt(2 / (2 * math.pi)) * math.sinh(2.0), rel=1e-12)


def test_fit_round_trip(files):
    data = str(files["dir"] / "data.csv")
    fam = _dump(files["dir"] / "fam.json", {"family": "affine_h1", "bounds": [[0.5, 2.0], [0.5, 3.0]]})
    metric = WarpedMetric(1, 1, polynomial_profile([1.0, 2.0]), polynomial_profile([1.0, 2.0]),
                          fiber1="circle", fiber2="circle")
    mfile = _dump(files["dir"] / "m.json", metric.to_json())
    assert main(["dnmap", "--metric", mfile, "--count", "5", "--out", data]) == 0
    out = str(files["dir"] / "fit.json")
    assert main(["fit", "--family", fam, "--data", data, "--starts", "1", "--maxiter", "150", "--out", out]) == 0
    obj = json.loads(open(out).read())
    assert obj["theta"] == pytest.approx([1.0, 2.0], abs=1e-4)
    assert obj["converged"] is True
    assert len(obj["residuals"]) == 5


def test_atomic_write_leaves_no_temporaries(files):
    out = files["dir"] / "s.csv"
    main(["spectrum", "--problem", files["unit"], "--kmax", "2", "--out", str(out)])
    assert not list(files["dir"].glob(".warpdn-*"))


def test_console_entry_point(files):
    proc = subprocess.run([sys.executable, "-m", "warpdn.cli", "bessel", "--nu", "0", "--x", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("nu,x,I,K,tol")
