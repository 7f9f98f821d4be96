import json
import subprocess
import sys

import numpy as np
import pytest

from oracles import reference_endpoint
from viralcomp.cli import main
from viralcomp.model import Phenotype
from viralcomp.scenario import load_scenario, read_trajectory_csv

ONE_SEED = "initial.states=[[1.0, 1.0]]"


def files(path):
    return sorted(p.name for p in path.iterdir())


def test_simulate_fig1(tmp_path):
    assert main(["simulate", "fig1", "--out", str(tmp_path)]) == 0
    sc = load_scenario("fig1")
    csvs = [f for f in files(tmp_path) if f.endswith(".csv")]
    assert len(csvs) == len(sc.initial_conditions)
    doc = json.loads((tmp_path / "fig1_simulate.json").read_text())
    for run in doc["runs"]:
        ref = reference_endpoint(sc.phenotype, None, 0.0, tuple(run["initial"]), sc.grid.tf)
        np.testing.assert_allclose(run["final"], ref, atol=1e-8)
        table = read_trajectory_csv((tmp_path / run["file"]).read_text())
        assert len(table.t) == sc.grid.n_intervals + 1
        assert table.v_a[-1] == run["final"][0]


def test_simulate_all_methods(tmp_path):
    argv = ["simulate", "fig1", "--out", str(tmp_path), "--method", "all", "--dt", "0.05",
            "--set", ONE_SEED]
    assert main(argv) == 0
    assert files(tmp_path) == ["fig1_ic0_explicit-euler.csv", "fig1_ic0_implicit-euler.csv",
                               "fig1_ic0_rk4.csv", "fig1_ic0_trapezoidal.csv",
                               "fig1_simulate.json"]
    doc = json.loads((tmp_path / "fig1_simulate.json").read_text())
    assert doc["grid"]["dt"] == 0.05


def test_equilibria_fig3(tmp_path, capsys):
    assert main(["equilibria", "fig3", "--out", str(tmp_path)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == json.loads((tmp_path / "fig3_equilibria.json").read_text())
    a_only = next(r for r in doc["equilibria"] if r["label"] == "a-only")
    np.testing.assert_allclose(a_only["point"], [7.800709, 0.0], atol=1e-6)
    assert a_only["verdict"] == "stable"
    assert doc["degenerate_control"] == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_optimize_fig4(tmp_path):
    assert main(["optimize", "fig4", "--out", str(tmp_path), "--set", ONE_SEED]) == 0
    doc = json.loads((tmp_path / "fig4_ic0_report.json").read_text())
    assert doc["status"] == "converged"
    assert doc["min_va_minus_vb"] >= 0.0
    table = read_trajectory_csv((tmp_path / "fig4_ic0_trajectory.csv").read_text())
    assert np.all((table.u[1:] >= 0.0) & (table.u[1:] <= 1.0))


def test_outputs_are_byte_identical_across_runs(tmp_path):
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["optimize", "fig4", "--out", str(out), "--set", ONE_SEED,
                     "--set", "grid.dt=1.0"]) == 0
        assert main(["portrait", "fig2", "--out", str(out), "--set", "portrait.seeds=2"]) == 0
    names = files(tmp_path / "a")
    assert names == files(tmp_path / "b")
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_portrait_writes_csv_and_svg(tmp_path):
    assert main(["portrait", "fig2", "--out", str(tmp_path), "--set", "portrait.seeds=2"]) == 0
    assert files(tmp_path) == ["fig2_portrait.csv", "fig2_portrait.svg"]


def test_invalid_override_exits_1(tmp_path, capsys):
    assert main(["simulate", "fig1", "--out", str(tmp_path), "--set", "phenotype.k_a=13"]) == 1
    assert "k_a must be < k_b" in capsys.readouterr().err


def test_optimize_on_free_scenario_exits_1(tmp_path):
    assert main(["optimize", "fig1", "--out", str(tmp_path)]) == 1


def test_missing_scenario_exits_1(tmp_path):
    assert main(["simulate", str(tmp_path / "absent.scenario"), "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--out", str(tmp_path)]) == 1


def test_solver_failure_exits_2(tmp_path, capsys):
    argv = ["simulate", "fig1", "--out", str(tmp_path), "--method", "euler", "--dt", "2"]
    assert main(argv) == 2
    assert "solver failure" in capsys.readouterr().err


def test_verify_single_criterion(capsys):
    assert main(["verify", "--criterion", "1"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 1 and out[0].startswith("[PASS] 1.")


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "viralcomp.cli", "equilibria", "fig1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["equilibria"][2]["verdict"] == "stable"


def test_fixture_phenotype_matches_cli_output(tmp_path, capsys):
    main(["equilibria", "fig1", "--out", str(tmp_path)])
    doc = json.loads(capsys.readouterr().out)
    p = Phenotype(3.0, 1.0, 10.0, 12.0)
    assert [r["point"] for r in doc["equilibria"]] == [[0.0, 0.0], [p.k_a, 0.0], [0.0, p.k_b]]
