import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import small_case
from covert_isac import experiments as ex
from covert_isac.baselines import run_scheme
from covert_isac.cli import main
from covert_isac.scenario import AlgorithmConfig, ScenarioError, db2lin, dump_config, dump_scenario

MRC = ["dual_uav_fhf", "single_uav_fhf"]


@pytest.fixture()
def scen_file(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text(dump_scenario(small_case(0)))
    return path


@pytest.fixture()
def quick_cfg(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(dump_config(AlgorithmConfig(max_outer=1)))
    return path


def rows_of(text):
    return list(csv.reader(io.StringIO(text)))


# -- sweep specification ----------------------------------------------------------

def test_sweep_spec_validation():
    with pytest.raises(ValueError, match="empty"):
        ex.SweepSpec("gamma", [])
    with pytest.raises(ValueError, match="strictly increasing"):
        ex.SweepSpec("gamma", [-40, -50])
    with pytest.raises(ValueError, match="strictly increasing"):
        ex.SweepSpec("epsilon", [0.1, 0.1])
    with pytest.raises(ValueError, match="unknown sweep axis"):
        ex.SweepSpec("bandwidth", [1])
    with pytest.raises(ValueError):
        ex.SweepSpec("gamma", [1], ["three_uav"])
    assert ex.SweepSpec("Γ", [1]).axis == "gamma"
    assert ex.SweepSpec("T", [40]).axis == "duration"


def test_apply_axis(case1):
    s = ex.apply_axis(case1, "gamma", -40)
    assert s.sensing_threshold == pytest.approx(1e-4)
    s = ex.apply_axis(case1, "residual", -10)
    assert s.residual_rb == s.residual_jb == s.residual_rw == pytest.approx(0.1)
    s = ex.apply_axis(case1, "duration", 40)
    assert s.num_slots == 80 and s.duration == 40
    assert ex.apply_axis(case1, "antennas", 8).antennas == 8
    assert ex.apply_axis(case1, "epsilon", 0.05).covertness_level == 0.05
    with pytest.raises(ScenarioError):
        ex.apply_axis(case1, "duration", 40.25)
    with pytest.raises(ScenarioError):
        ex.apply_axis(case1, "antennas", 4.5)
    assert db2lin(-40) == pytest.approx(1e-4)


def test_is_monotone():
    assert ex.is_monotone([1, 1, 2], True)
    assert not ex.is_monotone([1, 0.5], True)
    assert ex.is_monotone([3, 2, 2], False)


# -- sweeps -------------------------------------------------------------------------

@pytest.fixture(scope="module")
def mrc_sweep():
    s = small_case(0)
    spec = ex.SweepSpec("epsilon", [0.01, 0.1, 0.3], MRC)
    return s, spec, ex.run_sweep(s, AlgorithmConfig(), spec)


def test_sweep_rows_and_trend(mrc_sweep):
    s, spec, rows = mrc_sweep
    assert [(r.value, r.scheme) for r in rows] == [(v, sc) for v in spec.grid for sc in MRC]
    assert all(r.ok for r in rows)
    for sc in MRC:
        assert ex.is_monotone([r.acr_total for r in rows if r.scheme == sc], True)
    again = run_scheme("dual_uav_fhf", s.with_updates(covertness_level=0.1))
    assert rows[2].acr_total == again.acr_total


def test_sweep_deterministic_and_parallel_equal(mrc_sweep):
    s, spec, rows = mrc_sweep
    text = ex.summary_csv(rows)
    assert ex.summary_csv(ex.run_sweep(s, AlgorithmConfig(), spec)) == text
    assert ex.summary_csv(ex.run_sweep(s, AlgorithmConfig(), spec, jobs=2)) == text
    back = ex.read_summary(text)
    assert ex.summary_csv(back) == text


def test_sweep_progress_callback(mrc_sweep):
    s, spec, rows = mrc_sweep
    seen = []
    ex.run_sweep(s, AlgorithmConfig(), spec, on_progress=lambda r: seen.append(len(r)))
    assert seen == list(range(1, len(rows) + 1))


def test_failed_point_is_recorded():
    s = small_case(0)
    spec = ex.SweepSpec("duration", [8.0, 8.25], MRC)
    rows = ex.run_sweep(s, AlgorithmConfig(), spec)
    assert [r.ok for r in rows] == [True, True, False, False]
    assert "whole number" in rows[-1].error
    cells = rows_of(ex.summary_csv(rows))
    assert cells[-1][3] == "failed" and cells[-1][6] == "nan"


def test_figure_csv(mrc_sweep):
    _, spec, rows = mrc_sweep
    text = ex.figure_csv(rows, "fig6", MRC)
    table = rows_of(text)
    assert table[0] == ["epsilon", "scheme", "acr_total"]
    assert len(table) == 1 + len(spec.grid) * len(MRC)
    with pytest.raises(ValueError, match="proposed"):
        ex.figure_csv(rows, "fig6", ["proposed"] + MRC)
    with pytest.raises(ValueError, match="no gamma results"):
        ex.figure_csv(rows, "fig5", MRC)


def test_trajectory_figure_rows():
    s = small_case(0)
    reps = {sc: run_scheme(sc, s) for sc in MRC}
    table = rows_of(ex.trajectory_figure_csv(reps))
    assert table[0] == ["slot", "uav", "x", "y", "scheme"]
    assert len(table) - 1 == (s.num_slots + 1) * 2 * len(MRC)


def test_manifest_round_trip(tmp_path, mrc_sweep):
    s, spec, _ = mrc_sweep
    cfg = AlgorithmConfig(max_outer=3)
    path = tmp_path / "manifest.json"
    ex.write_manifest(ex.manifest(s, cfg, spec, seed=7), path)
    m = json.loads(path.read_text())
    assert set(m["versions"]) == {"python", "artifact", "numpy", "scipy", "clarabel"}
    s2, cfg2, spec2 = ex.load_manifest(path)
    assert s2 == s and cfg2 == cfg and spec2 == spec


# -- CLI ----------------------------------------------------------------------------

def test_cli_sweep_and_replay(tmp_path, scen_file, capsys):
    out = tmp_path / "a"
    rc = main(["sweep", "--scenario", str(scen_file), "--axis", "epsilon", "--grid", "0.05,0.2",
               "--scheme", ",".join(MRC), "--out", str(out)])
    assert rc == 0
    assert {p.name for p in out.iterdir()} == {"summary.csv", "manifest.json", "fig6.csv"}
    rc = main(["sweep", "--manifest", str(out / "manifest.json"), "--out", str(tmp_path / "b")])
    assert rc == 0
    assert (tmp_path / "b" / "summary.csv").read_bytes() == (out / "summary.csv").read_bytes()
    assert (tmp_path / "b" / "fig6.csv").read_bytes() == (out / "fig6.csv").read_bytes()
    assert "dual_uav_fhf" in capsys.readouterr().out


def test_cli_sweep_failure_exit_code(tmp_path, scen_file, capsys):
    rc = main(["sweep", "--scenario", str(scen_file), "--axis", "duration", "--grid", "8.25",
               "--scheme", "single_uav_fhf", "--out", str(tmp_path / "f")])
    assert rc == 1
    assert "whole number" in capsys.readouterr().err
    assert "failed" in (tmp_path / "f" / "summary.csv").read_text()


@pytest.mark.parametrize("argv", [
    ["sweep", "--axis", "bandwidth", "--grid", "1"],
    ["sweep", "--axis", "gamma", "--grid", "-40,-50"],
    ["sweep", "--axis", "gamma", "--grid", "a,b"],
    ["sweep", "--axis", "gamma", "--grid"],
    ["frobnicate"],
    ["sweep"],
    ["solve", "--scenario", "/nonexistent/file.txt"],
    ["solve", "--scheme", "three_uav"],
])
def test_cli_usage_errors(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2
    assert "error: " in capsys.readouterr().err


def test_cli_solve(tmp_path, scen_file, quick_cfg):
    out = tmp_path / "s"
    rc = main(["solve", "--scenario", str(scen_file), "--config", str(quick_cfg), "--scheme",
               "fhf_beamforming,single_uav_fhf", "--out", str(out)])
    assert rc == 0
    summ = rows_of((out / "summary.csv").read_text())
    assert summ[0] == ["scheme", "status", "acr_cco", "acr_ccs", "acr_total", "sum_rate", "audit_ok", "error"]
    assert [r[0] for r in summ[1:]] == ["fhf_beamforming", "single_uav_fhf"]
    assert all(r[1] == "ok" and r[6] == "1" for r in summ[1:])
    for sc in ("fhf_beamforming", "single_uav_fhf"):
        assert (out / sc / "slots.csv").exists() and (out / sc / "summary.json").exists()
    assert json.loads((out / "manifest.json").read_text())["command"] == "solve"


def test_cli_trajectory_dump(tmp_path, scen_file):
    out = tmp_path / "t"
    s = small_case(0)
    assert main(["trajectory-dump", "--scenario", str(scen_file), "--scheme", ",".join(MRC),
                 "--out", str(out)]) == 0
    fig2 = rows_of((out / "fig2.csv").read_text())
    assert len(fig2) - 1 == (s.num_slots + 1) * 2 * len(MRC)
    slots = rows_of((out / "ccs_slots.csv").read_text())
    assert slots[0] == ["scheme", "target", "slot", "weighted_distance"]
    assert len(slots) - 1 == s.ccs_slots * len(MRC)


def test_negative_grid_without_equals(tmp_path, scen_file):
    rc = main(["sweep", "--scenario", str(scen_file), "--axis", "gamma", "--grid", "-45,-40",
               "--scheme", "single_uav_fhf", "--out", str(tmp_path / "g")])
    assert rc == 0
    assert len(rows_of((tmp_path / "g" / "fig5.csv").read_text())) == 3


def test_cli_validate(capsys):
    assert main(["validate", "--seed", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10 and all(line.startswith("PASS ") for line in lines)


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "covert_isac.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "trajectory-dump" in res.stdout
