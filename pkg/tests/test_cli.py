import json
import subprocess
import sys
from pathlib import Path

import pytest

from vcps_sim.cli import SWEEP_HEADER, main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def tiny(tmp_path):
    d = json.loads((CONFIGS / "desk.json").read_text())
    d["time_slots"] = 10
    d["agent"].update(actor_hidden=[16, 16], critic_hidden=[16, 16], batch_size=8)
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(d))
    return p


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


@pytest.mark.parametrize("name", ["desk.json", "full_scale.json", "view_sweep.json"])
def test_shipped_configs_validate(name, capsys):
    assert main(["validate", "--config", str(CONFIGS / name)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["valid"]
    assert len(report["power_floor_by_distance_decile_w"]["0"]) == 10


def test_full_scale_config_values():
    d = json.loads((CONFIGS / "full_scale.json").read_text())
    assert d["fleet"]["max_power"] == 0.1
    assert len(d["rsus"]) == 9 and all(r["bandwidth"] == 2e7 for r in d["rsus"])
    assert d["weights"] == {"w1": 0.6, "w2": 0.4, "w3": 0.2, "w4": 0.4, "w5": 0.4}


def test_weight_violation_exits_nonzero(tmp_path, capsys):
    d = json.loads((CONFIGS / "desk.json").read_text())
    d["weights"]["w1"] = 0.5
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["validate", "--config", str(p)]) != 0
    err = error_line(capsys)
    assert err["error"] == "config"
    assert any(x.startswith("weights.w1+w2") for x in err["problems"])


def test_missing_trajectory_exits_nonzero(tmp_path, capsys):
    d = json.loads((CONFIGS / "desk.json").read_text())
    d["fleet"]["trajectory_csv"] = "nowhere.csv"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["validate", "--config", str(p)]) != 0
    assert "fleet.trajectory_csv" in error_line(capsys)["message"]


def test_missing_config_file(capsys):
    assert main(["validate", "--config", "/no/such/file.json"]) != 0
    assert error_line(capsys)["error"] == "config"


def test_train_layout_and_ra_determinism(tiny, tmp_path, capsys):
    args = ["train", "--config", str(tiny), "--agent", "ra", "--episodes", "2", "--eval-every", "1", "--eval-episodes", "1"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    run_a = tmp_path / "a" / "tiny-ra-s0"
    run_b = tmp_path / "b" / "tiny-ra-s0"
    for name in ("manifest.json", "config.json", "curves.csv", "scores.csv"):
        assert (run_a / name).is_file()
    assert (run_a / "checkpoints").is_dir()
    for name in ("curves.csv", "scores.csv", "config.json"):
        assert (run_a / name).read_bytes() == (run_b / name).read_bytes()
    manifest = json.loads((run_a / "manifest.json").read_text())
    assert {"command", "seed", "config", "output", "build", "wall_clock"} <= set(manifest)


def test_resume_reproduces_curve(tiny, tmp_path, capsys):
    base = ["train", "--config", str(tiny), "--episodes", "4", "--eval-every", "2", "--eval-episodes", "1", "--out", str(tmp_path)]
    assert main(base + ["--run-id", "full"]) == 0
    assert main(base + ["--run-id", "part", "--stop-after", "2"]) == 0
    assert main(base + ["--run-id", "part", "--resume"]) == 0
    assert (tmp_path / "full" / "curves.csv").read_bytes() == (tmp_path / "part" / "curves.csv").read_bytes()
    ck = sorted(p.name for p in (tmp_path / "full" / "checkpoints").iterdir())
    assert ck == ["ep0000.ckpt", "ep0004.ckpt"]


def test_sweep_single_row(tiny, tmp_path, capsys):
    argv = ["sweep", "--config", str(tiny), "--axis", "bandwidth", "--values", "2", "--agent", "ra", "--out", str(tmp_path)]
    assert main(argv + ["--eval-episodes", "1"]) == 0
    lines = (tmp_path / "tiny-sweep-bandwidth" / "sweep.csv").read_text().splitlines()
    assert lines[0] == ",".join(SWEEP_HEADER)
    assert len(lines) == 2 and lines[1].startswith("2.0,ra,0,")


def test_sweep_rerun_identical(tiny, tmp_path, capsys):
    argv = ["sweep", "--config", str(tiny), "--axis", "view_size", "--values", "1,2", "--agent", "ra", "--seeds", "2"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "tiny-sweep-view_size" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "tiny-sweep-view_size" / "sweep.csv").read_bytes()
    assert len(a.decode().splitlines()) == 5


def test_sweep_empty_values(tiny, capsys):
    assert main(["sweep", "--config", str(tiny), "--axis", "bandwidth", "--values", ","]) != 0
    assert error_line(capsys)["error"] == "empty_values"


def test_sweep_invalid_axis_value(tiny, tmp_path, capsys):
    # desk has 3 information types, so 5 required types is out of range
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(tiny), "--axis", "view_size", "--values", "5", "--agent", "ra", "--out", str(out)]) != 0
    assert "views.mean_required" in error_line(capsys)["message"]
    assert not out.exists()


def test_calibrate_prints_bounds(tiny, capsys):
    assert main(["calibrate", "--config", str(tiny), "--episodes", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out["normalization"]["bounds"]) == {"theta", "psi", "xi", "phi", "omega"}


def test_console_entry_point(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "vcps_sim.cli", "validate", "--config", str(tmp_path / "missing.json")],
        capture_output=True,
        text=True,
    )
    assert res.returncode != 0
    assert json.loads(res.stderr.strip())["error"] == "config"
