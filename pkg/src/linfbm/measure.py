"""Diffuse drift measures on (0, 1], the factor M(t) and solution classification."""

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, MeasureOverflowError, UsageError
from .fbm import hurst

__all__ = [
    "DriftMeasure",
    "power_law",
    "zero_measure",
    "table_measure",
    "measure_from_spec",
    "parse_measure",
    "tail_mass",
    "big_m",
    "cell_masses",
    "integrability_l_exponent",
    "m_limit_at_zero",
    "SolutionClass",
    "classify_solutions",
]

_EXP_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True, eq=False)
class DriftMeasure:
    """Measure mu(du) = density(u) du on (0, 1].

    ``tv_density`` is the density of |mu|; it defaults to ``abs(density)``
    only for families where that is known to be right.
    """

    density: Callable[[float], float]
    tv_density: Callable[[float], float]
    tail_mass_closed_form: Optional[Callable[[float], float]] = None
    family: str = "custom"
    params: dict = field(default_factory=dict)
    domain_min: float = 0.0

    @property
    def lam(self):
        return self.params.get("lambda")

    def to_dict(self):
        return {"family": self.family, **self.params}

    def closed_form_agreement(self, probes=None):
        """Max relative gap between closed-form and quadrature tail mass."""
        if self.tail_mass_closed_form is None:
            return None
        if probes is None:
            probes = np.geomspace(max(self.domain_min, 1e-6), 0.95, 20)
        worst = 0.0
        for t in probes:
            exact = self.tail_mass_closed_form(t)
            num = _numeric_tail_mass(self, t)
            worst = max(worst, abs(num - exact) / max(abs(exact), 1e-300))
        return worst


def power_law(lam):
    """mu(du) = lam / u du, so mu((t, 1]) = -lam ln t and M(t) = t^(-lam)."""
    lam = float(lam)
    return DriftMeasure(
        density=lambda u: lam / u,
        tv_density=lambda u: abs(lam) / u,
        tail_mass_closed_form=lambda t: -lam * math.log(t),
        family="power_law",
        params={"lambda": lam},
    )


def zero_measure():
    return power_law(0.0)


def table_measure(table, tv_table=None):
    """Density from ``[[u, d(u)], ...]``, linear in ln u between nodes.

    Queries outside ``[min u, max u]`` raise :class:`DomainError`; the
    table must reach u = 1.
    """
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise UsageError("density_table needs at least two [u, d(u)] rows")
    arr = arr[np.argsort(arr[:, 0])]
    u, d = arr[:, 0], arr[:, 1]
    if u[0] <= 0 or abs(u[-1] - 1.0) > 1e-12 or np.any(np.diff(u) <= 0):
        raise UsageError("density_table abscissae must be distinct, > 0 and end at u = 1")
    logu = np.log(u)
    tv = np.abs(d) if tv_table is None else np.asarray(tv_table, dtype=float)[:, 1]
    if np.any(d < 0) and tv_table is None and np.any(np.diff(np.sign(d)) != 0):
        # a sign change between nodes makes |interp| != interp(|d|)
        raise UsageError("signed density table needs an explicit total-variation table")

    def _interp(values):
        def f(x):
            if x < u[0] * (1 - 1e-14) or x > 1.0 + 1e-14:
                raise DomainError(f"u={x!r} lies outside the density table [{u[0]}, 1]")
            return float(np.interp(math.log(x), logu, values))
        return f

    return DriftMeasure(
        density=_interp(d),
        tv_density=_interp(tv),
        family="custom",
        params={"density_table": arr.tolist(), "interpolation": "linear"},
        domain_min=float(u[0]),
    )


def measure_from_spec(spec):
    """Build a measure from its JSON description."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    fam = spec.get("family")
    if fam == "power_law":
        return power_law(spec["lambda"])
    if fam == "custom":
        if spec.get("interpolation", "linear") != "linear":
            raise UsageError("only 'linear' interpolation (in ln u) is supported")
        return table_measure(spec["density_table"], spec.get("tv_table"))
    raise UsageError(f"unknown measure family {fam!r}")


def parse_measure(text):
    """``power_law:<lambda>``, ``zero`` or a path to a JSON measure file."""
    if text == "zero":
        return zero_measure()
    if text.startswith("power_law:"):
        try:
            lam = float(text.split(":", 1)[1])
        except ValueError:
            raise UsageError(f"power_law needs a numeric exponent, got {text!r}")
        return power_law(lam)
    try:
        with open(text) as fh:
            spec = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"measure {text!r} is neither 'zero', 'power_law:<lambda>' nor a "
                         f"readable JSON file ({exc})")
    if not isinstance(spec, dict):
        raise UsageError("a measure file must hold a JSON object")
    return measure_from_spec(spec)


def _numeric_tail_mass(m, t):
    # u = exp(-s) turns c/u singularities into smooth integrands; unit-length
    # pieces keep quad well inside double precision for oscillating densities
    if t == 1.0:
        return 0.0
    upper = -math.log(t)
    edges = np.append(np.arange(0.0, upper, 1.0), upper)
    parts = [integrate.quad(lambda s: m.density(math.exp(-s)) * math.exp(-s), a, b,
                            epsabs=1e-14, epsrel=1e-12, limit=200)[0]
             for a, b in zip(edges[:-1], edges[1:])]
    return math.fsum(parts)


def tail_mass(m, t):
    """mu((t, 1])."""
    t = float(t)
    if not (0.0 < t <= 1.0):
        raise DomainError(f"tail mass needs 0 < t <= 1, got {t!r}")
    if t == 1.0:
        return 0.0
    if m.tail_mass_closed_form is not None:
        return float(m.tail_mass_closed_form(t))
    if t < m.domain_min * (1 - 1e-14):
        raise DomainError(f"t={t!r} lies below the measure's table range")
    return _numeric_tail_mass(m, t)


def big_m(m, t):
    """M(t) = exp(mu((t, 1]))."""
    tm = tail_mass(m, t)
    if tm > _EXP_MAX:
        raise MeasureOverflowError(f"M({t!r}) overflows: tail mass {tm!r}", tail_mass=tm, time=t)
    return math.exp(tm)


def tail_masses(m, points):
    return np.array([tail_mass(m, t) for t in points])


def big_m_on(m, points):
    tm = tail_masses(m, points)
    bad = np.nonzero(tm > _EXP_MAX)[0]
    if bad.size:
        i = int(bad[0])
        raise MeasureOverflowError(f"M overflows at grid point t={float(points[i])!r} "
                                   f"(tail mass {float(tm[i])!r})",
                                   tail_mass=float(tm[i]), time=float(points[i]))
    return np.exp(tm)


def cell_masses(m, points):
    """mu((t_j, t_{j+1}]) from differences of the tail mass."""
    if m.family == "power_law":
        # exact: -lam ln(t_j / t_{j+1}), free of cancellation
        p = np.asarray(points, dtype=float)
        return m.lam * np.log(p[1:] / p[:-1])
    tm = tail_masses(m, points)
    return tm[:-1] - tm[1:]


# -- classification ---------------------------------------------------------------

PROBE_K = 40


def _probe_points():
    return [2.0**-k for k in range(1, PROBE_K + 1)]


def integrability_l_exponent(m, h):
    """Is M in L^{2/(1+H)}(]0,1])?

    Returns a dict with ``exponent``, ``in_space`` (True/False/None for
    indeterminate), ``integral_value`` (float or ``"divergent"``) and
    ``method``.
    """
    h = hurst(h)
    q = 2.0 / (1.0 + h)
    if m.family == "power_law":
        lam = m.lam
        a = lam * q
        # lambda*q == 1 is the divergent log case; keep rounding off it
        if a < 1.0 - 1e-12:
            return {"exponent": q, "in_space": True, "integral_value": 1.0 / (1.0 - a),
                    "method": "closed_form", "rule": "lambda*q < 1", "lambda_q": a}
        return {"exponent": q, "in_space": False, "integral_value": "divergent",
                "method": "closed_form", "rule": "lambda*q < 1", "lambda_q": a}

    # numeric: I_k = int_{2^-k}^1 M^q, built piecewise over dyadic shells
    values = []
    total = 0.0
    hi = 1.0
    try:
        for lo in _probe_points():
            piece, _ = integrate.quad(
                lambda s: math.exp(q * tail_mass(m, math.exp(-s)) - s),
                -math.log(hi), -math.log(lo), epsabs=0.0, epsrel=1e-10, limit=200)
            total += piece
            values.append(total)
            hi = lo
    except (DomainError, OverflowError, MeasureOverflowError) as exc:
        return {"exponent": q, "in_space": None, "integral_value": None, "method": "numeric_probe",
                "partial": values, "reason": f"probe stopped: {exc}"}
    inc = np.diff([0.0] + values)
    rel_last = inc[-5:] / max(values[-1], 1e-300)
    if np.all(rel_last < 1e-6):
        return {"exponent": q, "in_space": True, "integral_value": values[-1],
                "method": "numeric_probe", "partial": values}
    if np.all(inc[-10:] >= inc[-11:-1] * (1.0 - 1e-9)):
        return {"exponent": q, "in_space": False, "integral_value": "divergent",
                "method": "numeric_probe", "partial": values}
    return {"exponent": q, "in_space": None, "integral_value": None, "method": "numeric_probe",
            "partial": values, "reason": "increments shrink but not Cauchy within 2^-40"}


def m_limit_at_zero(m):
    """``"finite"``, ``"infinite"``, ``"oscillating-bounded"`` or ``"indeterminate"``."""
    if m.family == "power_law":
        return ("infinite" if m.lam > 0 else "finite"), {"method": "closed_form", "M(t)": "t^-lambda"}
    try:
        tm = np.array([tail_mass(m, t) for t in _probe_points()])
    except DomainError as exc:
        return "indeterminate", {"method": "numeric_probe", "reason": str(exc)}
    ev = {"method": "numeric_probe", "log_M": tm.tolist()}
    big = math.log(1e12)
    if np.all(np.diff(tm) >= 0) and tm[-1] > big:
        return "infinite", ev
    tail = np.exp(np.clip(tm[-5:], None, _EXP_MAX))
    # Cauchy within 1e-6 relative, measured against max(|M|, M(1) = 1) so that M -> 0 counts
    if np.all(np.abs(np.diff(tail)) <= 1e-6 * max(abs(tail[-1]), 1.0)):
        return "finite", ev
    if np.max(tm) < big:
        return "oscillating-bounded", ev
    return "indeterminate", ev


@dataclass
class SolutionClass:
    m_limit_at_zero: str
    uniqueness: Optional[str]
    x0_exists: Optional[bool]
    x1_limit_ok: Optional[bool]
    adapted_family_exists: Optional[bool]
    integrability_exponent_check: dict
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "m_limit_at_zero": self.m_limit_at_zero,
            "uniqueness": self.uniqueness,
            "x0_exists": self.x0_exists,
            "x1_limit_ok": self.x1_limit_ok,
            "adapted_family_exists": self.adapted_family_exists,
            "integrability_exponent_check": self.integrability_exponent_check,
            "evidence": self.evidence,
        }


def _variance_decay_verdict(values, probes):
    """Var -> 0 evidence: strictly decreasing at the end and positive log-log slope."""
    v = np.asarray(values, dtype=float)
    p = np.asarray(probes, dtype=float)
    order = np.argsort(p)[::-1]
    v, p = v[order], p[order]
    tail = slice(max(0, len(v) - 5), len(v))
    slope = float(np.polyfit(np.log(p[tail]), np.log(v[tail]), 1)[0])
    decreasing = bool(np.all(np.diff(v[tail]) < 0))
    ok = decreasing and slope >= 0.05
    return ok, {"probes": p.tolist(), "variance": v.tolist(), "loglog_slope": slope,
                "decreasing": decreasing}


def classify_solutions(m, h, numeric_variance=False, probes=None):
    """Existence / uniqueness / adaptedness verdict for X = B^H + int X dmu.

    Uniqueness holds iff M does not blow up at 0. When it does, X^(1)'s
    existence is judged from the decay of Var[X^(1)_t] (closed-form
    exponent for the power family unless ``numeric_variance``); adapted
    solutions exist iff M is in L^{2/(1+H)}.
    """
    h = hurst(h)
    limit, lim_ev = m_limit_at_zero(m)
    integ = integrability_l_exponent(m, h)
    in_space = integ["in_space"]
    evidence = {"m_limit": lim_ev}

    if limit == "infinite":
        uniqueness = "one_parameter_family"
    elif limit in ("finite", "oscillating-bounded"):
        uniqueness = "unique"
    else:
        uniqueness = None

    x0_exists = in_space
    evidence["x0"] = "M in L^{2/(1+H)}" if in_space else (
        "M not in L^{2/(1+H)}" if in_space is False else "integrability indeterminate")

    if limit == "infinite":
        if m.family == "power_law" and not numeric_variance:
            rate = 2.0 * min(m.lam, h)
            x1_ok = rate > 0
            evidence["x1"] = {"method": "closed_form_scaling",
                              "Var[X1_t] ~ t^rate": rate}
        else:
            from .solver import variance_at_zero  # deferred: solver imports this module
            if probes is None:
                probes = [2.0**-k for k in range(1, 11)]
            try:
                vals = variance_at_zero(m, h, probes, kind="x1")
                x1_ok, ev = _variance_decay_verdict(vals, probes)
                if not x1_ok:
                    x1_ok = None  # no decay seen on the probes is not a disproof
                evidence["x1"] = {"method": "quadrature", **ev}
            except Exception as exc:  # quadrature or domain failure: indeterminate
                x1_ok = None
                evidence["x1"] = {"method": "quadrature", "error": str(exc)}
        adapted = in_space
    elif limit in ("finite", "oscillating-bounded"):
        x1_ok = False
        evidence["x1"] = "unique solution; X^(1) exists only if it vanishes at t = 1"
        adapted = in_space
    else:
        x1_ok = None
        adapted = None
    return SolutionClass(limit, uniqueness, x0_exists, x1_ok, adapted, integ, evidence)
