"""Phase-portrait data: a direction field plus a trajectory bundle with its equilibria.

The dataset renders to CSV sections and to a self-contained SVG 1.1
document, so no plotting library is needed and output is diffable.
"""

from __future__ import annotations

import csv
import io
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

import numpy as np

from .equilibria import Verdict, equilibria_constant_control, equilibria_free
from .errors import SolverError
from .integrators import StepMethod, TimeGrid, integrate
from .model import Efficacy, Phenotype, _NO_TREATMENT, check_control, rhs_controlled
from .scenario import PortraitSpec

MAX_PATH_POINTS = 500
VERDICT_COLORS = {
    Verdict.STABLE: "#1a9850",
    Verdict.UNSTABLE: "#d73027",
    Verdict.MARGINAL: "#fdae61",
    Verdict.LINE_DEGENERATE: "#7b3294",
}


@dataclass
class SeedPath:
    seed: tuple
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def endpoint(self):
        return None if self.states is None else self.states[-1]


@dataclass
class Portrait:
    spec: PortraitSpec
    control: float
    arrows: np.ndarray
    paths: list = field(default_factory=list)
    equilibria: list = field(default_factory=list)

    def to_csv(self) -> str:
        return portrait_csv(self)

    def to_svg(self) -> str:
        return portrait_svg(self)


def _thin(n_nodes):
    stride = max(1, math.ceil((n_nodes - 1) / (MAX_PATH_POINTS - 1)))
    idx = np.arange(0, n_nodes, stride)
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    return idx


def arrow_field(p: Phenotype, e: Efficacy | None, u: float, spec: PortraitSpec) -> np.ndarray:
    """Rows ``(v_a, v_b, dir_a, dir_b, magnitude)`` on an ``arrows x arrows`` lattice.

    The lattice includes the window edges, so the origin is always sampled.
    Directions are unit vectors, or zero where the field vanishes.
    """
    va = np.linspace(0.0, spec.v_a_max, spec.arrows)
    vb = np.linspace(0.0, spec.v_b_max, spec.arrows)
    A, B = np.meshgrid(va, vb)
    d = rhs_controlled(p, e or _NO_TREATMENT, np.stack([A, B]), u)
    mag = np.hypot(d[0], d[1])
    safe = np.where(mag > 0, mag, 1.0)
    return np.column_stack([A.ravel(), B.ravel(), (d[0] / safe).ravel(),
                            (d[1] / safe).ravel(), mag.ravel()])


def phase_portrait(p: Phenotype, e: Efficacy | None, u: float, spec: PortraitSpec,
                   method=StepMethod.RK4) -> Portrait:
    """Direction field plus one path per seed under dose ``u``, with its equilibria.

    A seed whose integration raises a solver error is kept with its
    message in ``SeedPath.error``; the other seeds are unaffected.
    """
    check_control(u)
    if u > 0 and e is None:
        raise ValueError("a nonzero dose requires treatment efficacies")
    grid = TimeGrid(0.0, spec.horizon, spec.dt)
    idx = _thin(grid.n_intervals + 1)
    paths = []
    for seed in spec.seed_points():
        try:
            traj = integrate(method, p, e, u, grid, seed)
        except SolverError as exc:
            paths.append(SeedPath(seed, error=str(exc)))
            continue
        paths.append(SeedPath(seed, traj.times[idx], traj.states[idx, :2]))
    if e is None:
        eq = equilibria_free(p)
    else:
        eq = equilibria_constant_control(p, e, u)
    return Portrait(spec, u, arrow_field(p, e, u, spec), paths, eq)


def portrait_csv(portrait: Portrait) -> str:
    """Three CSV blocks, each introduced by a ``# section`` line."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write("# arrows\n")
    w.writerow(["v_a", "v_b", "dir_a", "dir_b", "magnitude"])
    for row in portrait.arrows:
        w.writerow([repr(float(x)) for x in row])
    buf.write("# trajectories\n")
    w.writerow(["seed", "t", "v_a", "v_b", "status"])
    for k, path in enumerate(portrait.paths):
        if not path.ok:
            w.writerow([k, "", repr(path.seed[0]), repr(path.seed[1]), "failed: " + path.error])
            continue
        for t, (a, b) in zip(path.times, path.states):
            w.writerow([k, repr(float(t)), repr(float(a)), repr(float(b)), "ok"])
    buf.write("# equilibria\n")
    w.writerow(["label", "v_a", "v_b", "eig_1", "eig_2", "verdict", "in_domain"])
    for rep in portrait.equilibria:
        w.writerow([rep.label, repr(rep.point[0]), repr(rep.point[1]),
                    repr(rep.eigenvalues[0]), repr(rep.eigenvalues[1]),
                    rep.verdict.value, str(rep.in_domain).lower()])
    return buf.getvalue()


def portrait_svg(portrait: Portrait, size: int = 600, margin: int = 40) -> str:
    """Render the portrait as an SVG 1.1 document.

    One ``polyline`` per seed (failed seeds get a single-point polyline
    tagged ``class="failed"``) and one ``circle`` per equilibrium, filled by
    verdict. Arrows are short line segments scaled by the lattice spacing.
    """
    spec = portrait.spec
    scale_a = size / spec.v_a_max
    scale_b = size / spec.v_b_max

    def xy(a, b):
        return f"{margin + a * scale_a:.3f}", f"{margin + size - b * scale_b:.3f}"

    total = size + 2 * margin
    svg = ET.Element("svg", {
        "xmlns": "http://www.w3.org/2000/svg",
        "version": "1.1",
        "width": str(total),
        "height": str(total),
        "viewBox": f"0 0 {total} {total}",
    })
    ET.SubElement(svg, "title").text = f"phase portrait, u = {portrait.control!r}"
    x0, y0 = xy(0.0, 0.0)
    x1, y1 = xy(spec.v_a_max, spec.v_b_max)
    ET.SubElement(svg, "rect", {"x": x0, "y": y1, "width": f"{size}", "height": f"{size}",
                                "fill": "none", "stroke": "#000000"})
    axes = ET.SubElement(svg, "g", {"font-size": "12", "font-family": "sans-serif"})
    ET.SubElement(axes, "text", {"x": f"{margin + size / 2}", "y": f"{total - 10}"}).text = "V_A"
    ET.SubElement(axes, "text", {"x": "5", "y": f"{margin + size / 2}"}).text = "V_B"

    arrows = ET.SubElement(svg, "g", {"class": "arrows", "stroke": "#888888", "stroke-width": "1"})
    length = 0.4 * min(spec.v_a_max, spec.v_b_max) / (spec.arrows - 1)
    for a, b, da, db, mag in portrait.arrows:
        if mag == 0.0:
            continue
        ax, ay = xy(a, b)
        bx, by = xy(a + length * da, b + length * db)
        ET.SubElement(arrows, "line", {"x1": ax, "y1": ay, "x2": bx, "y2": by})

    bundle = ET.SubElement(svg, "g", {"class": "trajectories", "fill": "none",
                                      "stroke": "#2166ac", "stroke-width": "1.5"})
    for k, path in enumerate(portrait.paths):
        pts = [path.seed] if not path.ok else path.states
        attrs = {"points": " ".join(",".join(xy(a, b)) for a, b in pts), "data-seed": str(k)}
        if not path.ok:
            attrs["class"] = "failed"
        ET.SubElement(bundle, "polyline", attrs)

    markers = ET.SubElement(svg, "g", {"class": "equilibria", "stroke": "#000000"})
    for rep in portrait.equilibria:
        if rep.line is not None:
            lx0, ly0 = xy(rep.line[0], 0.0)
            lx1, ly1 = xy(0.0, rep.line[1])
            ET.SubElement(markers, "line", {"x1": lx0, "y1": ly0, "x2": lx1, "y2": ly1,
                                            "stroke": VERDICT_COLORS[rep.verdict],
                                            "stroke-width": "2"})
        cx, cy = xy(*rep.point)
        ET.SubElement(markers, "circle", {
            "cx": cx, "cy": cy, "r": "5",
            "fill": VERDICT_COLORS[rep.verdict],
            "data-label": rep.label,
            "data-verdict": rep.verdict.value,
        })
    ET.indent(svg)
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            + ET.tostring(svg, encoding="unicode") + "\n")
