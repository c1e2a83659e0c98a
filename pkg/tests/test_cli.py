import json
import math
import subprocess
import sys

import pytest

from loewner_lab.cli import COMMANDS, EXIT_ACCURACY, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, build_parser, main


def _run(tmp_path, command, params, *flags, name="run.json"):
    cfg = tmp_path / name
    cfg.write_text(json.dumps(params))
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), "--quiet", *flags])
    summary = json.loads((out / f"{command}.json").read_text())
    return code, summary, out


def _csv(out, command):
    lines = (out / f"{command}.csv").read_text().splitlines()
    return lines[0], [line.split(",") for line in lines[1:]]


def test_energy_zero(tmp_path):
    code, s, out = _run(tmp_path, "energy", {"driving": {"times": [0, 1], "values": [0, 0]}})
    assert code == EXIT_OK
    assert s["schema_version"] == 1
    assert s["results"]["energy"] == 0.0
    header, rows = _csv(out, "energy")
    assert header == "t0,t1,energy"
    meta = json.loads((out / "energy.meta.json").read_text())
    assert "wall_seconds" in meta and "wall_seconds" not in s


def test_energy_slopes(tmp_path):
    code, s, _ = _run(tmp_path, "energy", {"driving": {"slopes": [1.0, -2.0], "durations": [1.0, 0.5]}})
    assert code == EXIT_OK
    assert s["results"]["energy"] == pytest.approx(0.5 + 1.0)


def test_energy_from_file(tmp_path):
    (tmp_path / "lam.csv").write_text("t,lambda\n0,0\n1,1\n")
    code, s, _ = _run(tmp_path, "energy", {"driving": {"file": "lam.csv"}})
    assert code == EXIT_OK
    assert s["results"]["energy"] == pytest.approx(0.5)


def test_reverse_check_linear(tmp_path):
    params = {"driving": {"times": [0, 1], "values": [0, 1]}, "levels": [[3e-2, 1.0], [1e-2, 10.0]]}
    code, s, out = _run(tmp_path, "reverse-check", params)
    assert code == EXIT_OK
    r = s["results"]
    assert r["energy_fwd"] == pytest.approx(0.5)
    assert len(r["table"]) == 2
    header, rows = _csv(out, "reverse-check")
    assert header == "resolution,tail_capacity,energy_fwd,energy_rev,rel_err"
    assert len(rows) == 2


def test_ld_rate_quadrature(tmp_path):
    code, s, out = _run(tmp_path, "ld-rate", {"kappas": [1.0, 0.5, 0.25], "theta": math.pi / 4})
    assert code == EXIT_OK
    assert s["results"]["rows"][-1]["reference"] == pytest.approx(4 * math.log(2))
    header, rows = _csv(out, "ld-rate")
    assert header == COMMANDS["ld-rate"][1]
    assert len(rows) == 3


def test_minimizer_and_trace(tmp_path):
    code, s, out = _run(tmp_path, "minimizer", {"theta": math.pi / 3})
    assert code == EXIT_OK
    assert s["results"]["energy"] == pytest.approx(s["results"]["reference"], abs=1e-3)
    code, s, out = _run(tmp_path, "trace", {"driving": {"minimizer": math.pi / 3}}, "--resolution", "1e-2")
    assert code == EXIT_OK
    x, y = s["results"]["tip"]
    assert abs(complex(x, y) - complex(0.5, math.sqrt(3) / 2)) < 1e-2


def test_invert(tmp_path):
    code, s, out = _run(tmp_path, "invert", {"curve": [[0, 0.5], [0, 1.0], [0, 2.0]]})
    assert code == EXIT_OK
    assert s["results"]["energy"] == pytest.approx(0.0, abs=1e-12)
    # hcap of i(0, 2] is 2, reached at capacity time 1
    assert s["results"]["horizon"] == pytest.approx(1.0)


def test_welding(tmp_path):
    code, s, out = _run(tmp_path, "welding", {"driving": {"times": [0, 1], "values": [0, 0]}, "n": 5})
    assert code == EXIT_OK
    header, rows = _csv(out, "welding")
    assert len(rows) == 5
    for r in rows:
        assert float(r[0]) == pytest.approx(-float(r[1]))


def test_sle_passage_reproducible(tmp_path):
    params = {"points": [[0.5, 0.866, -1]], "kappa": 2.0, "samples": 2000}
    code, _, out = _run(tmp_path, "sle-passage", params, "--seed", "17")
    assert code == EXIT_OK
    first = (out / "sle-passage.json").read_bytes()
    csv1 = (out / "sle-passage.csv").read_bytes()
    code, _, out = _run(tmp_path, "sle-passage", params, "--seed", "17")
    assert (out / "sle-passage.json").read_bytes() == first
    assert (out / "sle-passage.csv").read_bytes() == csv1


def test_seed_from_run_file(tmp_path):
    params = {"points": [[0.0, 1.0, 1]], "kappa": 2.0, "samples": 500, "seed": 3}
    code, s, _ = _run(tmp_path, "sle-passage", params)
    assert code == EXIT_OK
    assert s["config"]["seed"] == 3


def test_missing_seed_is_usage_error(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"points": [[0.0, 1.0, 1]], "kappa": 2.0}))
    assert main(["sle-passage", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_restriction_and_commute(tmp_path):
    params = {"hull": {"kind": "vertical-slit", "x0": 5.0, "height": 1.0}, "zipper_check": False}
    code, s, out = _run(tmp_path, "restriction", params)
    assert code == EXIT_OK
    rep = s["results"]["reports"][0]
    assert rep["driving_form"] == pytest.approx(rep["schwarzian_form"], rel=0.01)
    params = {
        "W": {"times": [0, 0.1], "values": [0, 0.05]},
        "U": {"times": [0, 0.1], "values": [0, -0.05]},
        "resolutions": [4e-3],
    }
    code, s, out = _run(tmp_path, "commute", params)
    assert code == EXIT_OK
    assert s["results"]["within_tolerance"]
    header, _ = _csv(out, "commute")
    assert header == "t,lhs,rhs,residual,resolution"


def test_exit_codes(tmp_path):
    assert main([]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["energy", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["energy", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["energy", "--config", str(tmp_path / "bad.json")]) == EXIT_USAGE
    code, s, _ = _run(tmp_path, "energy", {"driving": {"times": [0, 1], "values": [0]}})
    assert code == EXIT_USAGE
    assert s["status"] == EXIT_USAGE and "error" in s
    code, _, _ = _run(tmp_path, "minimizer", {"theta": 4.0})
    assert code == EXIT_DOMAIN
    code, _, _ = _run(tmp_path, "energy", {"driving": {"times": [0, 1], "values": [0, 0]}}, "--resolution", "-1")
    assert code == EXIT_USAGE


def test_geometry_error_exit(tmp_path):
    params = {
        "hull": {"kind": "vertical-slit", "x0": 1.5, "height": 3.0},
        "driving": {"times": [0, 1], "values": [0, 4]},
        "zipper_check": False,
    }
    code, s, _ = _run(tmp_path, "restriction", params)
    assert code == EXIT_DOMAIN
    assert s["error"]["type"] == "GeometryError"
    assert EXIT_ACCURACY == 2


def test_help_lists_commands(capsys):
    parser = build_parser()
    text = parser.format_help()
    for name in COMMANDS:
        assert name in text
    assert "capacity time" in text


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"driving": {"times": [0, 1], "values": [0, 0]}}))
    proc = subprocess.run(
        [sys.executable, "-m", "loewner_lab", "energy", "--config", str(cfg), "--out", str(tmp_path), "--quiet"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads((tmp_path / "energy.json").read_text())["results"]["energy"] == 0.0
