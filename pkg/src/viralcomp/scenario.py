"""Scenario documents and trajectory CSV files.

A scenario is a small TOML document (``schema = 1``)::

    schema = 1
    name = "fig3"
    mode = "constant-u"          # free | constant-u | ocp | ocp-wsc
    constant_u = 0.733097        # only for mode = "constant-u"

    [phenotype]
    r_a = 3.0
    r_b = 1.0
    k_a = 10.0
    k_b = 12.0

    [efficacy]                   # optional for mode = "free"
    c_a = 0.9
    c_b = 0.5

    [grid]
    t0 = 0.0
    tf = 80.0
    dt = 0.01

    [initial]
    states = [[1.0, 1.0], [2.0, 6.0]]

    [cost]
    target_a = 10.0              # defaults to k_a
    xi = 0.5                     # only for mode = "ocp-wsc"

    [solver]                     # every key optional
    method = "rk4"
    u_max = 1.0
    omega = 0.5
    max_iter = 500
    tol = 1e-4
    rounds = 5

    [portrait]                   # every key optional
    v_a_max = 12.0
    v_b_max = 14.0
    arrows = 15
    seeds = 5
    horizon = 60.0
    dt = 0.05

Overrides are dotted ``key=value`` strings (``grid.dt=0.05``). The value is
read as a TOML value, falling back to a bare string. They are applied to the
raw document before any validation.
"""

from __future__ import annotations

import copy
import csv
import io
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError
from .integrators import StepMethod, TimeGrid, Trajectory
from .model import CostWeights, Efficacy, Phenotype, check_control, state_cost
from .ocp import ControlSchedule, SolverOptions

SCHEMA_VERSION = 1
MODES = ("free", "constant-u", "ocp", "ocp-wsc")
CSV_HEADER = ("t", "v_a", "v_b", "u", "cost_rate", "v_c")
SUFFIX = ".scenario"

_TOP_KEYS = {"schema", "name", "mode", "constant_u", "description"}
_SECTIONS = {
    "phenotype": {"r_a", "r_b", "k_a", "k_b"},
    "efficacy": {"c_a", "c_b"},
    "grid": {"t0", "tf", "dt"},
    "initial": {"states"},
    "cost": {"target_a", "xi"},
    "solver": {f.name for f in fields(SolverOptions)} | {"u_max"},
    "portrait": {"v_a_max", "v_b_max", "arrows", "seeds", "horizon", "dt"},
}


@dataclass(frozen=True)
class PortraitSpec:
    """Window and horizon of a phase portrait, plus its arrow and seed lattices.

    Seeds sit at the centres of a ``seeds x seeds`` partition of the window,
    so none lies on an axis.
    """

    v_a_max: float = 12.0
    v_b_max: float = 14.0
    arrows: int = 15
    seeds: int = 5
    horizon: float = 60.0
    dt: float = 0.05

    def __post_init__(self):
        if not (self.v_a_max > 0 and self.v_b_max > 0):
            raise ValidationError("portrait window must lie in the non-negative quadrant "
                                  "with positive extent")
        if self.arrows < 2 or self.seeds < 1:
            raise ValidationError("portrait needs arrows >= 2 and seeds >= 1")
        TimeGrid(0.0, self.horizon, self.dt)

    def seed_points(self):
        fa = (np.arange(self.seeds) + 0.5) / self.seeds
        return [(float(a * self.v_a_max), float(b * self.v_b_max)) for b in fa for a in fa]


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    phenotype: Phenotype
    efficacy: Efficacy | None
    grid: TimeGrid
    initial_conditions: tuple
    cost: CostWeights
    solver: SolverOptions = field(default_factory=SolverOptions)
    u_max: float = 1.0
    constant_u: float | None = None
    xi: float | None = None
    portrait: PortraitSpec = field(default_factory=PortraitSpec)

    @property
    def control(self) -> float:
        """Constant dose applied in simulation (zero unless mode is constant-u)."""
        return self.constant_u if self.mode == "constant-u" else 0.0


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ParseError(f"override {item!r} is not of the form key=value")
        parts = key.split(".")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ParseError(f"override {key!r}: {part!r} is not a section")
        node[parts[-1]] = _parse_value(raw.strip())
    return doc


def _number(doc, section, key, default=None, kind=float):
    where = f"{section}.{key}" if section else key
    table = doc.get(section, {}) if section else doc
    if key not in table:
        if default is None:
            raise ParseError(f"missing required key {where!r}")
        return default
    value = table[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"key {where!r} must be an integer, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ParseError(f"key {where!r} must be true or false, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"key {where!r} must be a number, got {value!r}")
    return float(value)


def _check_keys(doc):
    for key, value in doc.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ParseError(f"{key!r} must be a table")
            unknown = set(value) - _SECTIONS[key]
            if unknown:
                raise ParseError(f"unknown key(s) in [{key}]: {', '.join(sorted(unknown))}")
        elif key not in _TOP_KEYS:
            raise ParseError(f"unknown top-level key {key!r}")


def _initial_states(doc):
    states = doc.get("initial", {}).get("states")
    if states is None:
        raise ParseError("missing required key 'initial.states'")
    if not isinstance(states, list) or not states:
        raise ParseError("'initial.states' must be a non-empty list of [v_a, v_b] pairs")
    out = []
    for i, s in enumerate(states):
        if (not isinstance(s, list) or len(s) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in s)):
            raise ParseError(f"initial.states[{i}] must be a pair of numbers, got {s!r}")
        a, b = float(s[0]), float(s[1])
        if not (a >= 0 and b >= 0 and math.isfinite(a) and math.isfinite(b)):
            raise ValidationError(f"initial.states[{i}] must be non-negative, got {s!r}")
        out.append((a, b))
    return tuple(out)


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    _check_keys(doc)
    schema = doc.get("schema")
    if schema != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema {schema!r}; expected schema = {SCHEMA_VERSION}")
    mode = doc.get("mode")
    if mode not in MODES:
        raise ParseError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")

    p = Phenotype(*(_number(doc, "phenotype", k) for k in ("r_a", "r_b", "k_a", "k_b")))
    if "efficacy" in doc:
        e = Efficacy(_number(doc, "efficacy", "c_a"), _number(doc, "efficacy", "c_b"))
    elif mode == "free":
        e = None
    else:
        raise ValidationError(f"mode {mode!r} requires an [efficacy] section")

    grid = TimeGrid(_number(doc, "grid", "t0", 0.0), _number(doc, "grid", "tf"),
                    _number(doc, "grid", "dt"))
    states = _initial_states(doc)

    has_u = "constant_u" in doc
    if has_u != (mode == "constant-u"):
        raise ValidationError("constant_u must be given exactly when mode = 'constant-u'")
    constant_u = _number(doc, None, "constant_u") if has_u else None

    has_xi = "xi" in doc.get("cost", {})
    if has_xi != (mode == "ocp-wsc"):
        raise ValidationError("cost.xi must be given exactly when mode = 'ocp-wsc'")
    xi = _number(doc, "cost", "xi") if has_xi else None
    cost = CostWeights(_number(doc, "cost", "target_a", p.k_a))

    solver_doc = dict(doc.get("solver", {}))
    u_max = _number(doc, "solver", "u_max", 1.0)
    if not 0.0 < u_max <= 1.0:
        raise ValidationError(f"solver.u_max must lie in (0, 1], got {u_max!r}")
    kwargs = {}
    for f in fields(SolverOptions):
        if f.name not in solver_doc:
            continue
        if f.name == "method":
            kwargs["method"] = StepMethod.parse(solver_doc["method"])
        else:
            kind = int if f.type in ("int", int) else bool if f.type in ("bool", bool) else float
            kwargs[f.name] = _number(doc, "solver", f.name, kind=kind)
    solver = SolverOptions(**kwargs)

    if constant_u is not None:
        check_control(constant_u, u_max)
    if xi is not None:
        if not xi > 0:
            raise ValidationError(f"cost.xi must be > 0, got {xi!r}")
        for i, s in enumerate(states):
            if s[1] > xi:
                raise ValidationError(f"initial.states[{i}] has v_b = {s[1]!r} above xi = {xi!r}")

    defaults = PortraitSpec()
    portrait = PortraitSpec(
        v_a_max=_number(doc, "portrait", "v_a_max", defaults.v_a_max),
        v_b_max=_number(doc, "portrait", "v_b_max", defaults.v_b_max),
        arrows=_number(doc, "portrait", "arrows", defaults.arrows, int),
        seeds=_number(doc, "portrait", "seeds", defaults.seeds, int),
        horizon=_number(doc, "portrait", "horizon", defaults.horizon),
        dt=_number(doc, "portrait", "dt", defaults.dt),
    )

    return Scenario(
        name=str(doc.get("name", name)),
        mode=mode,
        phenotype=p,
        efficacy=e,
        grid=grid,
        initial_conditions=states,
        cost=cost,
        solver=solver,
        u_max=u_max,
        constant_u=constant_u,
        xi=xi,
        portrait=portrait,
    )


def parse_scenario(text: str, overrides=(), name: str = "scenario") -> Scenario:
    """Parse and validate a scenario document.

    Raises :class:`ParseError` when the text or its keys are malformed,
    and :class:`ValidationError` when a model invariant fails.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{name}: {exc}") from None
    return scenario_from_dict(apply_overrides(doc, overrides), name)


def fixture_names():
    root = resources.files("viralcomp") / "scenarios"
    return sorted(p.name[: -len(SUFFIX)] for p in root.iterdir() if p.name.endswith(SUFFIX))


def read_scenario_text(ref) -> tuple[str, str]:
    """Return ``(text, name)`` for a file path or a shipped fixture name."""
    path = Path(ref)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.stem
    stem = path.name[: -len(SUFFIX)] if path.name.endswith(SUFFIX) else path.name
    resource = resources.files("viralcomp") / "scenarios" / (stem + SUFFIX)
    if resource.is_file():
        return resource.read_text(encoding="utf-8"), stem
    raise ParseError(f"no scenario file or fixture named {str(ref)!r} "
                     f"(fixtures: {', '.join(fixture_names())})")


def load_scenario(ref, overrides=()) -> Scenario:
    text, name = read_scenario_text(ref)
    return parse_scenario(text, overrides, name)


def write_trajectory_csv(traj: Trajectory, schedule=None) -> str:
    """Serialize a trajectory with full round-trip precision.

    ``u`` on row ``i`` is the control of the interval ending at node ``i``
    and is empty on row 0. ``cost_rate`` is the state part of the running
    cost at the node.
    """
    controls = traj.controls if schedule is None else np.asarray(
        schedule.values if isinstance(schedule, ControlSchedule) else schedule, dtype=float)
    if controls.shape != (traj.grid.n_intervals,):
        raise ValidationError("schedule length does not match the trajectory grid")
    weights = traj.weights or CostWeights(0.0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for i, (t, row) in enumerate(zip(traj.times, traj.states)):
        u = "" if i == 0 else repr(float(controls[i - 1]))
        rate = state_cost(row[:2], weights)
        writer.writerow([repr(float(t)), repr(float(row[0])), repr(float(row[1])), u,
                         repr(float(rate)), repr(float(row[2]))])
    return buf.getvalue()


@dataclass
class TrajectoryTable:
    """Columns read back from a trajectory CSV."""

    t: np.ndarray
    v_a: np.ndarray
    v_b: np.ndarray
    u: np.ndarray
    cost_rate: np.ndarray
    v_c: np.ndarray


def read_trajectory_csv(text: str) -> TrajectoryTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ParseError(f"unexpected trajectory header {header!r}")
    cols = [[] for _ in CSV_HEADER]
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                cols[j].append(float(cell) if cell != "" else math.nan)
            except ValueError:
                raise ParseError(f"line {lineno}: bad number {cell!r}") from None
    arrays = [np.array(c) for c in cols]
    return TrajectoryTable(*arrays)
