"""Closed-form equilibria of the free and constant-control systems.

Under a constant dose ``u`` the per-capita growth factors are
``g_i(S) = r_i (1 - S/k_i) - c_i u`` with ``S = V_A + V_B``. Fixed points are
the origin, one point on each axis where ``g_i`` vanishes, and, when both
factors vanish at the same ``S``, a whole line ``V_A + V_B = S``.

Eigenvalues always come from the analytic Jacobian via
:func:`classify_stability`. Closed-form eigenvalue expressions are kept
alongside (``formula_eigenvalues``) so they can be checked against it.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ComplexEigenvalues, NoDegenerateControl
from .model import Efficacy, Phenotype, _NO_TREATMENT, check_control, jacobian, rhs_controlled

EIG_TOL = 1e-9


class Verdict(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"
    LINE_DEGENERATE = "line-degenerate"


@dataclass(frozen=True)
class Condition:
    """One inequality ``lhs < rhs`` evaluated at concrete parameters."""

    expr: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs < self.rhs

    def to_dict(self):
        return {"expr": self.expr, "lhs": _num(self.lhs), "rhs": _num(self.rhs), "holds": self.holds}


@dataclass
class EquilibriumReport:
    label: str
    point: tuple
    eigenvalues: tuple
    verdict: Verdict
    conditions: list = field(default_factory=list)
    formula_eigenvalues: tuple | None = None
    in_domain: bool = True
    line: tuple | None = None
    note: str = ""

    def to_dict(self):
        out = {
            "label": self.label,
            "point": [_num(v) for v in self.point],
            "eigenvalues": [_num(v) for v in self.eigenvalues],
            "verdict": self.verdict.value,
            "conditions": [c.to_dict() for c in self.conditions],
            "in_domain": self.in_domain,
        }
        if self.formula_eigenvalues is not None:
            out["formula_eigenvalues"] = [_num(v) for v in self.formula_eigenvalues]
        if self.line is not None:
            out["line_intercepts"] = [_num(v) for v in self.line]
        if self.note:
            out["note"] = self.note
        return out


def _num(x):
    # JSON has no infinity; encode it as a string.
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else "-inf"


def verdict_for(eigenvalues, tol=EIG_TOL) -> Verdict:
    if all(lam < -tol for lam in eigenvalues):
        return Verdict.STABLE
    if any(lam > tol for lam in eigenvalues):
        return Verdict.UNSTABLE
    return Verdict.MARGINAL


def classify_stability(J):
    """Eigenvalues of a 2x2 Jacobian and the resulting stability verdict.

    Triangular matrices return their diagonal unchanged. A complex pair
    triggers a :class:`ComplexEigenvalues` warning and both entries carry
    the common real part.
    """
    (a, b), (c, d) = np.asarray(J, dtype=float)
    if not all(math.isfinite(v) for v in (a, b, c, d)):
        raise ValueError("Jacobian entries must be finite")
    if b == 0.0 or c == 0.0:
        eigs = (float(a), float(d))
    else:
        half_tr = 0.5 * (a + d)
        disc = 0.25 * (a - d) ** 2 + b * c
        if disc < 0:
            warnings.warn(
                f"complex eigenvalues {half_tr:.6g} +/- {math.sqrt(-disc):.6g}i",
                ComplexEigenvalues,
                stacklevel=2,
            )
            eigs = (half_tr, half_tr)
        else:
            root = math.sqrt(disc)
            eigs = (half_tr + root, half_tr - root)
    eigs = (float(eigs[0]), float(eigs[1]))
    return eigs, verdict_for(eigs)


def _report(label, p, e, u, point, formula, conditions, in_domain=True, note=""):
    eigs, verdict = classify_stability(jacobian(p, e, point, u))
    if formula is not None:
        # list eigenvalues in the same order as the closed-form pair
        straight = abs(eigs[0] - formula[0]) + abs(eigs[1] - formula[1])
        swapped = abs(eigs[1] - formula[0]) + abs(eigs[0] - formula[1])
        if swapped < straight:
            eigs = (eigs[1], eigs[0])
    return EquilibriumReport(
        label=label,
        point=(float(point[0]), float(point[1])),
        eigenvalues=eigs,
        verdict=verdict,
        conditions=conditions,
        formula_eigenvalues=formula,
        in_domain=in_domain,
        note=note,
    )


def equilibria_free(p: Phenotype):
    """The three fixed points of the untreated system."""
    r_a, r_b, k_a, k_b = p.r_a, p.r_b, p.k_a, p.k_b
    e = _NO_TREATMENT
    origin = (r_a, r_b)
    a_only = (-r_a, r_b * (-k_a + k_b) / k_b)
    b_only = (-r_b, r_a * (k_a - k_b) / k_a)
    return [
        _report("origin", p, e, 0.0, (0.0, 0.0), origin,
                [Condition("r_a < 0", r_a, 0.0), Condition("r_b < 0", r_b, 0.0)]),
        _report("a-only", p, e, 0.0, (k_a, 0.0), a_only,
                [Condition("r_b (k_b - k_a) / k_b < 0", a_only[1], 0.0)]),
        _report("b-only", p, e, 0.0, (0.0, k_b), b_only,
                [Condition("r_a (k_a - k_b) / k_a < 0", b_only[1], 0.0)]),
    ]


def _ratio(r, c):
    return r / c if c > 0 else math.inf


def degenerate_control(p: Phenotype, e: Efficacy) -> float:
    """Dose at which both controlled nullclines coincide.

    Solves ``k_a (1 - c_a u / r_a) = k_b (1 - c_b u / r_b)``; raises
    :class:`NoDegenerateControl` unless the root lies in ``(0, 1]``.
    """
    denom = p.k_b * e.c_b / p.r_b - p.k_a * e.c_a / p.r_a
    if denom == 0.0:
        raise NoDegenerateControl("nullclines are parallel for every dose")
    u = (p.k_b - p.k_a) / denom
    if not 0.0 < u <= 1.0:
        raise NoDegenerateControl(f"coincidence dose {u!r} lies outside (0, 1]")
    return u


def _line_report(p, e, u):
    total = p.k_a * (1.0 - e.c_a * u / p.r_a)
    mid = (0.5 * total, 0.5 * total)
    eigs, _ = classify_stability(jacobian(p, e, mid, u))
    closed_form = (0.0, p.r_a / p.k_a * mid[0] + p.r_b / p.k_b * mid[1])
    return EquilibriumReport(
        label="line",
        point=mid,
        eigenvalues=eigs,
        verdict=Verdict.LINE_DEGENERATE,
        conditions=[Condition("0 < V_A* + V_B*", 0.0, total)],
        formula_eigenvalues=closed_form,
        in_domain=total > 0,
        line=(total, total),
        note=(
            "point is the midpoint of the line V_A + V_B = S*; the Jacobian there has "
            "eigenvalues 0 and -(r_a V_A/k_a + r_b V_B/k_b) < 0, so the line attracts "
            "transversally, while formula_eigenvalues lists the positive closed-form value"
        ),
    )


def equilibria_constant_control(p: Phenotype, e: Efficacy, u: float, degenerate_tol=1e-12):
    """Fixed points under a constant dose ``u``, with their closed-form stability conditions.

    Axis points with a non-positive coordinate are kept and flagged
    ``in_domain=False``. The line of equilibria is appended when ``u`` is
    within ``degenerate_tol`` of :func:`degenerate_control`.
    """
    check_control(u)
    r_a, r_b, k_a, k_b, c_a, c_b = p.r_a, p.r_b, p.k_a, p.k_b, e.c_a, e.c_b

    origin = _report(
        "origin", p, e, u, (0.0, 0.0), (r_a - c_a * u, r_b - c_b * u),
        [Condition("max(r_a/c_a, r_b/c_b) < u", max(_ratio(r_a, c_a), _ratio(r_b, c_b)), u)],
    )

    v_a = -k_a * (c_a * u - r_a) / r_a
    a_formula = (c_a * u - r_a, r_b * (1.0 + k_a / (r_a * k_b) * (c_a * u - r_a)) - c_b * u)
    a_only = _report(
        "a-only", p, e, u, (v_a, 0.0), a_formula,
        [
            Condition("r_b (1 - k_a/k_b) < (c_b - r_b k_a c_a / (r_a k_b)) u",
                      r_b * (1.0 - k_a / k_b), (c_b - r_b * k_a * c_a / (r_a * k_b)) * u),
            Condition("u < r_a/c_a", u, _ratio(r_a, c_a)),
        ],
        in_domain=v_a > 0,
    )

    v_b = -k_b * (c_b * u - r_b) / r_b
    b_formula = (r_a * (1.0 + k_b / (r_b * k_a) * (c_b * u - r_b)) - c_a * u, c_b * u - r_b)
    b_only = _report(
        "b-only", p, e, u, (0.0, v_b), b_formula,
        [
            Condition("r_a (1 - k_b/k_a) < (c_a - r_a k_b c_b / (r_b k_a)) u",
                      r_a * (1.0 - k_b / k_a), (c_a - r_a * k_b * c_b / (r_b * k_a)) * u),
            Condition("u < r_b/c_b", u, _ratio(r_b, c_b)),
        ],
        in_domain=v_b > 0,
    )

    reports = [origin, a_only, b_only]
    for rep in reports[1:]:
        if not rep.in_domain:
            rep.note = "outside biological domain"
    try:
        u_line = degenerate_control(p, e)
    except NoDegenerateControl:
        u_line = None
    if u_line is not None and math.isclose(u, u_line, rel_tol=degenerate_tol, abs_tol=degenerate_tol):
        reports.append(_line_report(p, e, u))
    return reports


def residual(p: Phenotype, e: Efficacy | None, point, u: float = 0.0) -> float:
    """Max-norm of the vector field at ``point``."""
    return float(np.max(np.abs(rhs_controlled(p, e or _NO_TREATMENT, point, u))))


def reports_to_json(reports, **extra):
    doc = dict(extra)
    doc["equilibria"] = [r.to_dict() for r in reports]
    return doc
