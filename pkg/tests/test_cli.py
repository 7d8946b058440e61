import csv
import dataclasses

import numpy as np
import pytest

from clfcbf import scenario as scn
from clfcbf.cli import main
from clfcbf.models import builtin_system
from clfcbf.output import read_trajectory_csv, trajectory_csv
from clfcbf.simulate import SimConfig, simulate_nominal, simulate_shaped


@pytest.fixture
def short_scenario(tmp_path):
    sc = dataclasses.replace(scn.DEFAULT, sim=SimConfig(dt=1e-2, t_final=2.0), ring_count=3)
    path = tmp_path / "short.ini"
    scn.save(sc, str(path))
    return str(path)


def test_simulate_writes_csv_and_summary(tmp_path, short_scenario, capsys):
    out = tmp_path / "run" / "a.csv"
    assert main(["simulate", "--scenario", short_scenario, "--ic", "4,4", "--out", str(out)]) == 0
    summary = (tmp_path / "run" / "a.csv.summary.txt").read_text()
    assert "terminal = " in summary and "runtime_s" in summary
    assert "min_h=" in capsys.readouterr().out


def test_csv_round_trip_is_exact(tmp_path, V, h, integrator, gains, sgains):
    cfg = SimConfig(dt=1e-2, t_final=0.5)
    for rec in (simulate_nominal(integrator, V, h, gains, (4.0, 4.0), cfg),
                simulate_shaped(integrator, V, h, sgains, (0.5, 6.0), cfg)):
        path = tmp_path / "r.csv"
        path.write_text(trajectory_csv(rec))
        back = read_trajectory_csv(str(path))
        for name in ("t", "x", "u", "w", "h", "V"):
            np.testing.assert_array_equal(getattr(back, name), getattr(rec, name))
        assert back.case == rec.case
        if rec.shaped:
            np.testing.assert_array_equal(back.Q, rec.Q)
            np.testing.assert_array_equal(back.h_D, rec.h_D)


def test_simulate_is_deterministic(tmp_path, short_scenario):
    for name in ("a.csv", "b.csv"):
        assert main(["simulate", "--scenario", short_scenario, "--controller", "shaped",
                     "--ic", "0.5,6", "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["simulate", "--scenario", "missing.ini", "--ic", "4,4", "--out", "x.csv"],
    ["simulate", "--scenario", "builtin:nope", "--ic", "4,4", "--out", "x.csv"],
    ["simulate", "--scenario", "builtin:default", "--ic", "4", "--out", "x.csv"],
    ["simulate", "--scenario", "builtin:default", "--ic", "0,3", "--out", "x.csv"],
    ["gradcheck", "--scenario", "builtin:default", "--samples", "-1"],
])
def test_config_errors_exit_2(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_scenario_file_exit_2(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(scn.dumps(scn.DEFAULT).replace("radius = 1.5", "radius = 1.5\nbogus = 1"))
    assert main(["equilibria", "--scenario", str(path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_equilibria_csv(tmp_path, caplog):
    out = tmp_path / "eq.csv"
    assert main(["equilibria", "--scenario", "builtin:default", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3
    top = next(r for r in rows if abs(float(r["x2"]) - 4.5) < 1e-9)
    assert float(top["c"]) == pytest.approx(3.0, abs=1e-9)
    assert top["verdict"] == "asymptotically_stable"
    assert "disagree" in caplog.text


def test_sweep(tmp_path, short_scenario):
    assert main(["sweep", "--scenario", short_scenario, "--outdir", str(tmp_path / "sw")]) == 0
    files = sorted(p.name for p in (tmp_path / "sw").iterdir())
    assert files == ["summary.txt", "sweep_nominal_ic00.csv", "sweep_nominal_ic01.csv", "sweep_nominal_ic02.csv"]


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--scenario", "builtin:default", "--samples", "20"]) == 0
    out = capsys.readouterr().out
    assert "synthetic" in out and "FAILED" not in out
    assert main(["gradcheck", "--scenario", "builtin:default", "--samples", "20", "--corrupt-gradient"]) == 1
    assert "worst sample" in capsys.readouterr().out
    assert main(["gradcheck", "--scenario", "builtin:default", "--samples", "0"]) == 0
    assert "warning" in capsys.readouterr().err


def test_scenario_command_output_loads(tmp_path):
    out = tmp_path / "fig4.ini"
    assert main(["scenario", "--builtin", "fig4", "--out", str(out)]) == 0
    assert scn.load(str(out)) == scn.BUILTIN["fig4"]
