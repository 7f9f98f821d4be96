import math

import numpy as np
import pytest

from viralcomp.errors import ParseError, ValidationError
from viralcomp.integrators import StepMethod, TimeGrid, integrate
from viralcomp.model import CostWeights, Efficacy, Phenotype
from viralcomp.ocp import ControlSchedule
from viralcomp.scenario import (
    CSV_HEADER,
    PortraitSpec,
    fixture_names,
    load_scenario,
    parse_scenario,
    read_trajectory_csv,
    write_trajectory_csv,
)

BASE = """
schema = 1
mode = "free"

[phenotype]
r_a = 3.0
r_b = 1.0
k_a = 10.0
k_b = 12.0

[grid]
tf = 20.0
dt = 0.01

[initial]
states = [[1.0, 1.0]]
"""


def test_fixtures_ship():
    assert fixture_names() == ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"]


def test_fig1_fixture():
    sc = load_scenario("fig1")
    assert sc.mode == "free"
    assert (sc.phenotype.r_a, sc.phenotype.r_b) == (3.0, 1.0)
    assert (sc.phenotype.k_a, sc.phenotype.k_b) == (10.0, 12.0)
    assert sc.efficacy is None
    assert sc.control == 0.0


def test_fig3_fixture():
    sc = load_scenario("fig3.scenario")
    assert sc.mode == "constant-u"
    assert sc.constant_u == 0.733097
    assert sc.efficacy == Efficacy(0.9, 0.5)


def test_fig6_fixture_is_feasible():
    sc = load_scenario("fig6")
    assert sc.xi == 0.5
    assert all(s[1] <= sc.xi for s in sc.initial_conditions)
    assert sc.solver.method is StepMethod.TRAPEZOIDAL


def test_load_from_path(tmp_path):
    path = tmp_path / "mine.scenario"
    path.write_text(BASE)
    sc = load_scenario(path)
    assert sc.name == "mine"
    assert sc.grid == TimeGrid(0.0, 20.0, 0.01)
    assert sc.cost.target_a == 10.0


def test_unknown_reference():
    with pytest.raises(ParseError, match="fixtures"):
        load_scenario("no-such-thing")


def test_ordering_violation():
    text = BASE.replace("k_a = 10.0", "k_a = 12.0").replace("k_b = 12.0", "k_b = 10.0")
    with pytest.raises(ValidationError, match="k_a must be < k_b"):
        parse_scenario(text)


def test_syntax_error_reports_line():
    with pytest.raises(ParseError, match="line"):
        parse_scenario(BASE + "\nbroken = = 1\n")


@pytest.mark.parametrize("extra,match", [
    ("\n[phenotype2]\nx = 1\n", "unknown top-level key"),
    ("\nspeed = 1\n", "unknown top-level key"),
])
def test_unknown_keys(extra, match):
    with pytest.raises(ParseError, match=match):
        parse_scenario(extra + BASE)


def test_unknown_key_in_section():
    with pytest.raises(ParseError, match=r"\[grid\]"):
        parse_scenario(BASE, ["grid.step=0.1"])


def test_missing_key():
    with pytest.raises(ParseError, match="phenotype.k_b"):
        parse_scenario(BASE.replace("k_b = 12.0", ""))


def test_wrong_type():
    with pytest.raises(ParseError, match="grid.dt"):
        parse_scenario(BASE, ["grid.dt=\"fast\""])


def test_schema_version_required():
    with pytest.raises(ParseError, match="schema"):
        parse_scenario(BASE.replace("schema = 1", "schema = 2"))


def test_bad_initial_states():
    with pytest.raises(ParseError):
        parse_scenario(BASE, ["initial.states=[[1.0]]"])
    with pytest.raises(ValidationError):
        parse_scenario(BASE, ["initial.states=[[1.0, -1.0]]"])


def test_constant_u_exactly_for_constant_mode():
    with pytest.raises(ValidationError, match="constant_u"):
        parse_scenario(BASE, ["constant_u=0.5"])
    with pytest.raises(ValidationError):
        parse_scenario(BASE, ["mode=\"constant-u\"", "efficacy.c_a=0.9", "efficacy.c_b=0.5"])
    sc = parse_scenario(BASE, ["mode=\"constant-u\"", "constant_u=0.5",
                               "efficacy.c_a=0.9", "efficacy.c_b=0.5"])
    assert sc.control == 0.5


def test_xi_exactly_for_constrained_mode():
    eff = ["efficacy.c_a=0.9", "efficacy.c_b=0.5"]
    with pytest.raises(ValidationError, match="xi"):
        parse_scenario(BASE, eff + ["mode=\"ocp\"", "cost.xi=0.5"])
    with pytest.raises(ValidationError, match="xi"):
        parse_scenario(BASE, eff + ["mode=\"ocp-wsc\""])
    with pytest.raises(ValidationError, match="above xi"):
        parse_scenario(BASE, eff + ["mode=\"ocp-wsc\"", "cost.xi=0.5"])
    sc = parse_scenario(BASE, eff + ["mode=\"ocp-wsc\"", "cost.xi=2.0"])
    assert sc.xi == 2.0


def test_efficacy_required_when_treating():
    with pytest.raises(ValidationError, match="efficacy"):
        parse_scenario(BASE, ["mode=\"ocp\""])


def test_overrides_applied_before_validation():
    sc = parse_scenario(BASE, ["phenotype.k_a=11", "solver.method=rk4", "solver.max_iter=7"])
    assert sc.phenotype.k_a == 11.0
    assert sc.solver.method is StepMethod.RK4
    assert sc.solver.max_iter == 7
    with pytest.raises(ValidationError):
        parse_scenario(BASE, ["phenotype.k_a=13"])
    with pytest.raises(ParseError):
        parse_scenario(BASE, ["no-equals-sign"])
    with pytest.raises(ParseError):
        parse_scenario(BASE, ["solver.max_iter=1.5"])


def test_u_max_bounds_constant_dose():
    eff = ["efficacy.c_a=0.9", "efficacy.c_b=0.5", "mode=\"constant-u\""]
    with pytest.raises(ValidationError):
        parse_scenario(BASE, eff + ["constant_u=0.8", "solver.u_max=0.5"])
    with pytest.raises(ValidationError):
        parse_scenario(BASE, eff + ["constant_u=0.3", "solver.u_max=1.5"])


def test_portrait_spec_validation():
    with pytest.raises(ValidationError):
        PortraitSpec(v_a_max=-1.0)
    with pytest.raises(ValidationError):
        PortraitSpec(arrows=1)
    with pytest.raises(ValidationError):
        PortraitSpec(horizon=1.0, dt=0.3)
    seeds = PortraitSpec(v_a_max=10.0, v_b_max=10.0, seeds=5).seed_points()
    assert len(seeds) == 25
    assert min(min(s) for s in seeds) == pytest.approx(1.0)


def _trajectory(n=2):
    grid = TimeGrid.from_intervals(0.0, 1.0, n)
    p, e = Phenotype(3.0, 1.0, 10.0, 12.0), Efficacy(0.9, 0.5)
    u = np.linspace(0.1, 0.3, n)
    return integrate("rk4", p, e, u, grid, (1.0, 1.0), CostWeights(10.0)), ControlSchedule(grid, u)


def test_csv_shape_and_first_row():
    traj, sched = _trajectory(2)
    text = write_trajectory_csv(traj, sched)
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0] == ",".join(CSV_HEADER)
    row0 = lines[1].split(",")
    assert row0[3] == ""
    assert float(row0[5]) == 0.0


def test_csv_round_trip_is_bit_exact():
    traj, sched = _trajectory(50)
    table = read_trajectory_csv(write_trajectory_csv(traj, sched))
    np.testing.assert_array_equal(table.t, traj.times)
    np.testing.assert_array_equal(table.v_a, traj.v_a)
    np.testing.assert_array_equal(table.v_b, traj.v_b)
    np.testing.assert_array_equal(table.v_c, traj.v_c)
    np.testing.assert_array_equal(table.u[1:], sched.values)
    assert math.isnan(table.u[0])
    assert np.all(np.diff(table.t) > 0)


def test_csv_cost_rate_column():
    traj, sched = _trajectory(4)
    table = read_trajectory_csv(write_trajectory_csv(traj))
    expected = (traj.v_a - 10.0) ** 2 + traj.v_b ** 2
    np.testing.assert_allclose(table.cost_rate, expected, rtol=1e-15)


def test_csv_rejects_wrong_schedule_length():
    traj, _ = _trajectory(4)
    with pytest.raises(ValidationError):
        write_trajectory_csv(traj, np.zeros(3))


def test_csv_reader_rejects_bad_input():
    with pytest.raises(ParseError):
        read_trajectory_csv("a,b\n1,2\n")
    with pytest.raises(ParseError):
        read_trajectory_csv(",".join(CSV_HEADER) + "\n0,1,2,,x,0\n")
