"""Command-line entry point.

Usage::

    viralcomp <verb> <scenario> [--out DIR] [--set key=value ...]
              [--method euler|implicit-euler|trapezoid|rk4|all] [--dt X]

``<scenario>`` is a file path or the name of a shipped fixture
(``fig1`` ... ``fig6``). Exit status is 0 on success, 1 for invalid input
or a failed verification, and 2 when a numerical solver fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .equilibria import degenerate_control, equilibria_constant_control, equilibria_free, reports_to_json
from .errors import NoDegenerateControl, ParseError, SolverError, ValidationError
from .integrators import StepMethod, integrate
from .ocp import solve_fbsm, solve_penalty
from .portrait import phase_portrait
from .scenario import load_scenario, write_trajectory_csv

log = logging.getLogger("viralcomp")

VERBS = ("simulate", "equilibria", "optimize", "portrait", "verify")
METHOD_CHOICES = ("euler", "explicit-euler", "implicit-euler", "trapezoid", "trapezoidal", "rk4", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viralcomp",
        description="Simulate two competing viral strains and compute optimal dosing.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("scenario", nargs="?",
                        help="scenario file or fixture name (not used by verify)")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a scenario key, e.g. grid.dt=0.05")
    parser.add_argument("--method", choices=METHOD_CHOICES,
                        help="integration method; 'all' runs every method (simulate only)")
    parser.add_argument("--dt", type=float, help="override the grid step")
    parser.add_argument("--criterion", type=int, action="append",
                        help="verify only this criterion number (repeatable)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


def _load(args):
    if not args.scenario:
        raise ParseError(f"verb {args.verb!r} needs a scenario file or fixture name")
    overrides = list(args.overrides)
    if args.method and args.method != "all":
        overrides.append(f"solver.method={json.dumps(args.method)}")
    if args.dt is not None:
        overrides.append(f"grid.dt={args.dt!r}")
    return load_scenario(args.scenario, overrides)


def cmd_simulate(args, out: Path) -> int:
    sc = _load(args)
    if args.method == "all":
        methods = list(StepMethod)
    else:
        methods = [sc.solver.method]
    summary = []
    for k, init in enumerate(sc.initial_conditions):
        for m in methods:
            traj = integrate(m, sc.phenotype, sc.efficacy, sc.control, sc.grid, init, sc.cost, sc.u_max)
            fname = f"{sc.name}_ic{k}_{m.value}.csv"
            _write(out, fname, write_trajectory_csv(traj))
            summary.append({
                "initial": list(init),
                "method": m.value,
                "final": [float(x) for x in traj.final],
                "v_c": float(traj.v_c[-1]),
                "clamped": traj.clamped,
                "file": fname,
            })
            print(f"ic{k} {m.value:15s} final=({traj.final[0]:.6g}, {traj.final[1]:.6g})",
                  file=sys.stderr)
    doc = {"scenario": sc.name, "mode": sc.mode, "control": sc.control,
           "grid": {"t0": sc.grid.t0, "tf": sc.grid.tf, "dt": sc.grid.dt}, "runs": summary}
    _write(out, f"{sc.name}_simulate.json", _dump_json(doc))
    return 0


def cmd_equilibria(args, out: Path) -> int:
    sc = _load(args)
    extra = {"scenario": sc.name, "control": sc.control}
    if sc.efficacy is None:
        reports = equilibria_free(sc.phenotype)
    else:
        reports = equilibria_constant_control(sc.phenotype, sc.efficacy, sc.control)
        try:
            extra["degenerate_control"] = degenerate_control(sc.phenotype, sc.efficacy)
        except NoDegenerateControl as exc:
            extra["degenerate_control"] = None
            log.info("%s", exc)
    text = _dump_json(reports_to_json(reports, **extra))
    _write(out, f"{sc.name}_equilibria.json", text)
    sys.stdout.write(text)
    for rep in reports:
        print(f"{rep.label:8s} ({rep.point[0]:.6g}, {rep.point[1]:.6g}) "
              f"eig=({rep.eigenvalues[0]:.6g}, {rep.eigenvalues[1]:.6g}) {rep.verdict.value}",
              file=sys.stderr)
    return 0


def cmd_optimize(args, out: Path) -> int:
    sc = _load(args)
    if sc.mode not in ("ocp", "ocp-wsc"):
        raise ValidationError(f"optimize needs mode 'ocp' or 'ocp-wsc', scenario has {sc.mode!r}")
    for k, init in enumerate(sc.initial_conditions):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if sc.mode == "ocp":
                rep = solve_fbsm(sc.phenotype, sc.efficacy, sc.cost, sc.grid, init, sc.u_max, sc.solver)
            else:
                rep = solve_penalty(sc.phenotype, sc.efficacy, sc.cost, sc.grid, init,
                                    sc.u_max, sc.xi, sc.solver)
        for w in caught:
            print(f"warning: ic{k}: {w.message}", file=sys.stderr)
        doc = rep.to_dict()
        doc.update({"scenario": sc.name, "initial": list(init)})
        _write(out, f"{sc.name}_ic{k}_report.json", _dump_json(doc))
        _write(out, f"{sc.name}_ic{k}_trajectory.csv", write_trajectory_csv(rep.trajectory, rep.schedule))
        print(f"ic{k} status={rep.status} J={rep.objective:.10g} iterations={rep.iterations} "
              f"violation={rep.constraint_violation:.3g}", file=sys.stderr)
    return 0


def cmd_portrait(args, out: Path) -> int:
    sc = _load(args)
    method = StepMethod.RK4 if args.method == "all" else sc.solver.method
    portrait = phase_portrait(sc.phenotype, sc.efficacy, sc.control, sc.portrait, method)
    _write(out, f"{sc.name}_portrait.csv", portrait.to_csv())
    _write(out, f"{sc.name}_portrait.svg", portrait.to_svg())
    failed = [p for p in portrait.paths if not p.ok]
    for p in failed:
        print(f"warning: seed {p.seed} failed: {p.error}", file=sys.stderr)
    return 0


def cmd_verify(args, out: Path) -> int:
    from .acceptance import run_all

    results = run_all(args.criterion)
    for res in results:
        print(res.line(), flush=True)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed", file=sys.stderr)
    return 0 if passed == len(results) else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "equilibria": cmd_equilibria,
    "optimize": cmd_optimize,
    "portrait": cmd_portrait,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.verb](args, out)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except (ParseError, ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
