"""Command line interface, exercised through main(argv)."""

import csv
import json

import pytest

from laneform.cli import main


def _write_cfg(tmp_path, **overrides):
    data = {
        "volume_per_lane": 500.0,
        "duration_s": 90.0,
        "warmup_s": 20.0,
        "rng_seed": 7,
    }
    data.update(overrides)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def _last_json_line(out: str) -> dict:
    lines = [ln for ln in out.strip().splitlines() if ln.startswith("{")]
    assert lines, f"no JSON line in output:\n{out}"
    return json.loads(lines[-1])


def test_case_command(tmp_path, capsys):
    out_dir = tmp_path / "art"
    assert main(["--case", "1", "--out", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "case 1: 3 vehicles, 3 lanes, 2 cycles, 0 exchanges" in out
    assert "V1: (0,0) (0,0) (0,0)" in out
    assert (out_dir / "case_1_map.txt").exists()
    traj = out_dir / "case_1_trajectories.csv"
    with open(traj) as fh:
        header = next(csv.reader(fh))
    assert header == ["vehicle_id", "t", "x", "y", "heading"]


def test_case_unknown_id_exits_2(tmp_path, capsys):
    assert main(["--case", "zzz", "--out", str(tmp_path)]) == 2
    err = _last_json_line(capsys.readouterr().out)
    assert err["error"]["type"] == "ConfigError"
    assert "unknown case" in err["error"]["message"]


def test_bad_flag_value_exits_2(capsys):
    assert main(["--volume", "-5"]) == 2
    assert _last_json_line(capsys.readouterr().out)["error"]["type"] == "ConfigError"


def test_unknown_flag_exits_2(capsys):
    assert main(["--frobnicate"]) == 2
    capsys.readouterr()


def test_config_file_unknown_key_exits_2(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"volumes": 100}))
    assert main(["--config", str(path)]) == 2
    err = _last_json_line(capsys.readouterr().out)
    assert "unknown config field" in err["error"]["message"]


def test_run_writes_artifacts(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out_dir = tmp_path / "out"
    assert main(["--config", cfg, "--mode", "fc", "--out", str(out_dir)]) == 0
    out = capsys.readouterr().out
    assert "fc volume=500" in out
    assert "violations=0" in out

    metrics = json.loads((out_dir / "metrics.json").read_text())
    assert metrics["config"]["mode"] == "fc"
    assert metrics["violations"]["total"] == 0

    with open(out_dir / "heatmap.csv") as fh:
        head_header = next(csv.reader(fh))
    assert head_header == ["t_bin", "x_bin", "mean_speed"]

    with open(out_dir / "run_log.csv") as fh:
        reader = csv.reader(fh)
        log_header = next(reader)
        first = next(reader)
    assert log_header == ["t", "vehicle_id", "lane", "x", "y", "v", "a", "fuel_rate"]
    assert len(first) == 8


def test_flag_overrides_config_file(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, mode="fc")
    out_dir = tmp_path / "out"
    assert main(
        ["--config", cfg, "--mode", "baseline", "--seed", "3", "--out", str(out_dir)]
    ) == 0
    capsys.readouterr()
    metrics = json.loads((out_dir / "metrics.json").read_text())
    assert metrics["config"]["mode"] == "baseline"
    assert metrics["config"]["rng_seed"] == 3


def test_run_metrics_byte_identical_across_runs(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["--config", cfg, "--out", str(a)]) == 0
    assert main(["--config", cfg, "--out", str(b)]) == 0
    capsys.readouterr()
    assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()


def test_sweep_single_mode(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out_dir = tmp_path / "sweep"
    assert main(
        ["--config", cfg, "--sweep", "400,800", "--mode", "fc", "--out", str(out_dir)]
    ) == 0
    out = capsys.readouterr().out
    assert "sweep fc volume=400: ok" in out
    assert "sweep fc volume=800: ok" in out

    with open(out_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["volume_per_lane"] for r in rows] == ["400", "800"]
    assert all(r["mode"] == "fc" for r in rows)
    assert all(r["status"] == "ok" for r in rows)
    assert all(float(r["mean_travel_time_s"]) > 0 for r in rows)
    assert (out_dir / "metrics_fc_v400_s7.json").exists()
    assert (out_dir / "metrics_fc_v800_s7.json").exists()


def test_sweep_both_modes_by_default(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    out_dir = tmp_path / "sweep"
    assert main(["--config", cfg, "--sweep", "500", "--out", str(out_dir)]) == 0
    capsys.readouterr()
    with open(out_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["fc", "baseline"]


def test_sweep_bad_spec_exits_2(capsys):
    assert main(["--sweep", "abc"]) == 2
    assert main(["--sweep", ""]) == 2
    capsys.readouterr()


def test_sweep_records_failed_run_and_exits_3(tmp_path, capsys):
    # 70 s run with 60 s warmup: nothing can finish inside the measured
    # window, so the run itself fails and the sweep reports it
    cfg = _write_cfg(tmp_path, duration_s=70.0, warmup_s=60.0)
    out_dir = tmp_path / "sweep"
    assert main(
        ["--config", cfg, "--sweep", "500", "--mode", "fc", "--out", str(out_dir)]
    ) == 3
    out = capsys.readouterr().out
    assert _last_json_line(out)["error"]["type"] == "SweepFailure"
    with open(out_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["status"].startswith("error:")
