import csv
import json

import numpy as np
import pytest

from mecmobility.cli import main
from mecmobility.harness import (SweepSpec, epsilon_min, feasible_at, frame_rows, sweep,
                                 write_csv, write_json)
from mecmobility.scenario import ScenarioConfig, dump_config
from mecmobility.simulate import run_single_user, simulate

from .conftest import short


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("V", ())
    with pytest.raises(ValueError):
        SweepSpec("V", (1.0,), replications=0)
    with pytest.raises(ValueError):
        SweepSpec("warp", (1.0,))
    with pytest.raises(ValueError):
        SweepSpec.from_dict({"parameter": "V", "values": [1], "extra": 1})


def test_single_value_sweep_is_a_run():
    base = short(frames=30, seed=4)
    res = sweep(SweepSpec("V", (5000.0,), base=base))
    direct = run_single_user(base)
    assert len(res.rows) == 1
    assert res.rows[0]["E_av"] == direct.E_av and res.rows[0]["X_av"] == direct.X_av


def test_sweep_rows_and_flags():
    base = short(frames=10)
    res = sweep(SweepSpec("eps", (1e-3, 2.0), replications=2, base=base,
                          schemes=("proposed", "rss")))
    assert len(res.rows) == 8
    flagged = [r for r in res.rows if r["error"]]
    assert len(flagged) == 4 and all(r["value"] == 2.0 for r in flagged)
    agg = res.aggregate()
    assert [a["runs"] for a in agg] == [2, 0, 2, 0]
    assert np.isnan(agg[1]["E_av"])
    assert {r["seed"] for r in res.rows if not r["error"]} == {0, 1}


def test_feasibility_vote():
    cfg = short(frames=20)
    ok, xs = feasible_at(cfg, "rss", 0.5, replications=3)
    assert ok and len(xs) == 3
    ok, _ = feasible_at(cfg, "proposed", 1e-5, replications=1)
    assert not ok  # frame 0 drops everything


def test_eps_min_bracket_errors():
    with pytest.raises(ValueError):
        epsilon_min(short(frames=5), bracket=(0.1, 0.01))
    with pytest.raises(ValueError):
        epsilon_min(short(frames=5), iterations=0)


def test_eps_min_unsupported():
    # no compute can meet the deadline, so every arrival fails
    res = epsilon_min(short(frames=5, compute_rate_range=(1e9, 1e9)), replications=1)
    assert not res.supported and res.eps_min is None


def test_eps_min_equals_deep_fade_rate():
    """With V = 0 the power cap is always the peak power and no queue effect remains:
    the only failures are deep fades, so eps_min is their median rate over 1.2."""
    cfg = short(frames=100, num_bs=1, control_V=0.0, **{"schedule.migration_delay": 0})
    fade = sorted(simulate(cfg.replace(seed=cfg.seed + r, reliability_eps=1e-5)).final_window_X_av
                  for r in range(3))
    assert fade[1] > 0
    res = epsilon_min(cfg, "proposed", replications=3)
    step = (1e-1 / 1e-5) ** (1 / 2 ** 12)
    assert fade[1] / 1.2 <= res.eps_min <= fade[1] / 1.2 * step * (1 + 1e-12)


def test_file_writers(tmp_path):
    rows = [{"a": 1, "b": np.float64(0.5)}, {"a": 2, "c": np.int64(3)}]
    write_csv(tmp_path / "x.csv", rows)
    with open(tmp_path / "x.csv", encoding="utf-8") as fh:
        got = list(csv.DictReader(fh))
    assert got[0] == {"a": "1", "b": "0.5", "c": ""}
    write_json(tmp_path / "x.json", {"v": np.arange(3), "t": (1, 2)})
    assert json.loads((tmp_path / "x.json").read_text()) == {"v": [0, 1, 2], "t": [1, 2]}
    r = run_single_user(short(frames=3))
    fr = frame_rows(r)
    assert len(fr) == 3 and fr[0]["frame"] == 0 and "z_runner_up" in fr[0]


def _cfg_file(tmp_path, frames=5):
    path = tmp_path / "cfg.yaml"
    dump_config(short(frames=frames), path)
    return str(path)


def test_cli_run_and_bench(tmp_path):
    cfg = _cfg_file(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "3",
                 "--replications", "2"]) == 0
    summary = json.loads((out / "run_summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [3, 4]
    assert (out / "run_frames_rep1.csv").exists()
    assert main(["bench", "--config", cfg, "--out", str(out), "--scheme", "rss-hyst"]) == 0
    assert (out / "bench_summary.csv").read_text().startswith("replication,scheme")
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 2


def test_cli_sweep_epsmin_multiuser(tmp_path, capsys):
    cfg = _cfg_file(tmp_path, frames=3)
    spec = tmp_path / "sweep.yaml"
    spec.write_text("parameter: V\nvalues: [1000, 5000]\nschemes: [proposed, rss]\n")
    out = tmp_path / "o"
    assert main(["sweep", str(spec), "--config", cfg, "--out", str(out)]) == 0
    assert len((out / "sweep_runs.csv").read_text().splitlines()) == 5
    assert main(["epsmin", "--config", cfg, "--out", str(out), "--replications", "1",
                 "--scheme", "rss"]) == 0
    assert "eps_min(rss)" in capsys.readouterr().out
    assert main(["multiuser", "--config", cfg, "--out", str(out), "--users", "6"]) == 0
    data = json.loads((out / "multiuser_summary.json").read_text())
    assert data["metrics"]["num_users"] == 6


def test_cli_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("num_bs: 0\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", "--replications", "0", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--scheme", "nope"])
