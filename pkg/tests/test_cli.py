import csv
import json
import subprocess
import sys

import pytest

from normcurve.cli import main, resolve_config


def _cfg(**over):
    cfg = {
        "schema_version": 1,
        "potential": {"t0": 0.04, "t": [[0, 0], [0.1, 0]]},
        "domain": {"center": [0, 0], "radius": 0.6},
        "energy": {"grid": 20},
        "sampler": {"N": 16, "sweeps": 400, "burn_in": 100, "thinning": 10, "chains": 2, "seed": 3},
        "analysis": {"bins": 10, "min_expected": 5},
    }
    cfg.update(over)
    return cfg


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_solve_curve(tmp_path):
    out = tmp_path / "o"
    assert main(["solve-curve", "--config", _write(tmp_path, _cfg()), "--out", str(out)]) == 0
    curve = json.loads((out / "curve.json").read_text())
    assert curve["r"] > 0
    assert (out / "config.resolved.json").exists()
    assert (out / "solve_report.json").exists()


def test_energy_map_grid_rows(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(energy={"grid": 10})
    assert main(["energy-map", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "field.csv")))
    assert rows[0] == ["x", "y", "E", "class"]
    assert len(rows) == 101
    assert json.loads((out / "verify.json").read_text())["passed"] is True


def test_sample_single_particle(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(sampler={"N": 1, "sweeps": 50, "burn_in": 10, "thinning": 10})
    assert main(["sample", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    lines = (out / "samples.csv").read_text().splitlines()
    assert len(lines) == 1 + 4
    assert (out / "timing.txt").exists()


def test_sample_without_section(tmp_path):
    cfg = _cfg()
    del cfg["sampler"]
    assert main(["sample", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1


def test_sample_repeat_byte_identical(tmp_path):
    path = _write(tmp_path, _cfg())
    assert main(["sample", "--config", path, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["sample", "--config", path, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    for f in ("samples.csv", "samples.json", "config.resolved.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert main(["sample", "--config", path, "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert (tmp_path / "a" / "samples.csv").read_bytes() != (tmp_path / "c" / "samples.csv").read_bytes()


def test_analyze(tmp_path):
    path = _write(tmp_path, _cfg())
    out = tmp_path / "o"
    assert main(["sample", "--config", path, "--out", str(out)]) == 0
    assert main(["analyze", "--config", path, "--samples", str(out / "samples.csv"),
                 "--out", str(out)]) == 0
    for f in ("density.csv", "moments.json", "weak_convergence.json", "analysis.json"):
        assert (out / f).exists()
    mom = json.loads((out / "moments.json").read_text())
    assert mom["moments"][0]["mean"] == [0.04, 0.0]
    assert main(["analyze", "--config", path, "--samples", str(tmp_path / "missing.csv"),
                 "--out", str(out)]) == 1


def test_config_roundtrip(tmp_path):
    out = tmp_path / "o"
    assert main(["solve-curve", "--config", _write(tmp_path, _cfg()), "--out", str(out)]) == 0
    resolved = json.loads((out / "config.resolved.json").read_text())
    again = resolve_config(resolved, out=str(out))
    assert {k: v for k, v in again.items() if k != "output_dir"} == resolved


@pytest.mark.parametrize("bad", [
    {"schema_version": 2},
    {"potential": {"t0": 0.04, "t": [[0, 0], [0.6, 0]]}},
    {"potential": {"t0": -1.0, "t": []}},
    {"solver": {"newton_tol": 1e-12, "warp": 9}},
    {"sampler": {"N": 0, "sweeps": 10}},
    {"extra": 1},
])
def test_bad_config_exit_1_no_output(tmp_path, bad):
    out = tmp_path / "o"
    assert main(["solve-curve", "--config", _write(tmp_path, _cfg(**bad)), "--out", str(out)]) == 1
    assert not out.exists()


def test_unreadable_config(tmp_path):
    assert main(["solve-curve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    p = tmp_path / "broken.json"
    p.write_text("{")
    assert main(["solve-curve", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_past_cusp_stops_after_solve(tmp_path):
    out = tmp_path / "o"
    cfg = _cfg(potential={"t0": 1.5, "t": [[0, 0], [0, 0], [0.1, 0]]}, domain={"center": [0, 0], "radius": 4.0})
    assert main(["pipeline", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] is False and "error" in summary
    assert not (out / "field.csv").exists()
    assert not (out / "samples.csv").exists()


def test_pipeline_deterministic_across_threads(tmp_path):
    path = _write(tmp_path, _cfg())
    assert main(["pipeline", "--config", path, "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
    assert main(["pipeline", "--config", path, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        if n != "timing.txt":
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "normcurve.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "pipeline" in res.stdout
