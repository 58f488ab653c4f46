"""Time inversion t -> t^2H X_{1/t} and the singular equations it linearizes.

Conventions: dB-integrals are left-point sums (trapezoid for the smooth
integrand of beta), du-integrals use the trapezoid rule. Infinite horizons are truncated at the last driver grid
point T_max; Var[int_T^inf u^-2H dB^H] = T^-2H is reported as the
truncation standard deviation.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AccuracyError, DomainError, UsageError
from .fbm import hurst
from .grid import SamplePath, TimeGrid
from .young import integrate_values

__all__ = [
    "InvertedPath",
    "ReflectedPair",
    "reciprocal_grid",
    "invert_path",
    "build_beta",
    "beta_values",
    "check_inversion_identity",
    "inversion_drift_values",
    "fbm_inversion_drift_check",
    "solve_bessel_implicit",
    "bessel_values",
    "skorokhod_reflect",
    "complementarity_defect",
    "solve_Ek_via_inversion",
    "ek_residual",
    "solve_El_via_inversion",
    "el_residual",
    "estimate_limit_Y",
    "transformed_drift",
]


def reciprocal_grid(grid):
    if grid.start <= 0:
        raise DomainError("time inversion needs a grid in (0, inf)")
    kind = "geometric" if grid.kind == "geometric" else "custom"
    return TimeGrid((1.0 / grid.points)[::-1], kind)


@dataclass(frozen=True, eq=False)
class InvertedPath:
    hat_path: SamplePath
    source: SamplePath
    h: float

    @property
    def source_grid(self):
        return self.source.grid


@dataclass(frozen=True, eq=False)
class ReflectedPair:
    z: SamplePath
    lam: SamplePath

    @property
    def complementarity(self):
        return complementarity_defect(self.z.values, self.lam.values)


def invert_path(x, h):
    """hat(t) = t^2H x(1/t) on the reciprocal grid.

    Inverting an :class:`InvertedPath` hands back its source, so the map is
    an exact involution on matched grids.
    """
    h = hurst(h)
    if isinstance(x, InvertedPath):
        return InvertedPath(x.source, x.hat_path, h)
    if x.grid.start <= 0:
        raise DomainError("time inversion needs delta > 0")
    g = reciprocal_grid(x.grid)
    vals = g.points ** (2.0 * h) * x.values[::-1]
    hat = SamplePath(g, vals, x.seed, f"hat {x.label}".strip(), {"h": h})
    return InvertedPath(hat, x, h)


def _lookup(points, targets, what):
    idx = np.searchsorted(points, targets)
    idx = np.clip(idx, 0, len(points) - 1)
    lo = np.clip(idx - 1, 0, len(points) - 1)
    pick = np.where(np.abs(points[lo] - targets) < np.abs(points[idx] - targets), lo, idx)
    if np.any(np.abs(points[pick] - targets) > 1e-10 * np.abs(targets)):
        raise UsageError(f"{what} are not on the driver grid")
    return pick


def beta_values(u_points, b, h, t_points):
    """beta(t) = -int_{1/t}^{T_max} u^-2H dB_u for an ensemble ``b`` (N, n).

    The integrand is smooth, so trapezoid sums are used: on a geometric grid
    their variance bias is O(1/K^2) in the points per octave K, against O(1/K)
    for left-point sums.
    """
    h = hurst(h)
    run = integrate_values(u_points ** (-2.0 * h), b, method="trapezoid")
    idx = _lookup(u_points, 1.0 / np.asarray(t_points, dtype=float), "reciprocal times")
    return -(run[:, -1:] - run[:, idx])


def build_beta(driver, h, t_grid, max_tail_stderr=None):
    """The inverted-time fBm beta on ``t_grid`` from a driver on (0, T_max].

    Returns ``{"beta": SamplePath, "tail_stderr": float}``.
    """
    h = hurst(h)
    t_max = driver.grid.stop
    stderr = t_max**-h
    if max_tail_stderr is not None and stderr > max_tail_stderr:
        raise AccuracyError(f"T_max={t_max!r} leaves tail stderr {stderr:.3g} > {max_tail_stderr:.3g}",
                            required=max_tail_stderr ** (-1.0 / h))
    if 1.0 / t_grid.stop < driver.grid.start * (1 - 1e-12):
        raise UsageError("1/t falls below the driver grid for the largest t")
    vals = beta_values(driver.grid.points, driver.values[None, :], h, t_grid.points)[0]
    return {"beta": SamplePath(t_grid, vals, driver.seed, "beta", {"h": h}), "tail_stderr": stderr}


def check_inversion_identity(x, h, s, t, driver=None, drift=None):
    """Absolute defect of

        x_t/t^2H = x_s/s^2H - 2H int_s^t x_u/u^(2H+1) du + int_s^t b(u, x_u)/u^2H du + int_s^t dB/u^2H.

    ``driver`` defaults to B = 0 and ``drift`` (callable b(u, x), vectorized)
    to b = 0.
    """
    h = hurst(h)
    g = x.grid
    i, k = g.index_of(s), g.index_of(t)
    if not i < k:
        raise UsageError("need s < t")
    u = g.points[i:k + 1]
    xv = x.values[i:k + 1]
    two_h = 2.0 * h
    rhs = xv[0] / u[0] ** two_h - two_h * np.trapezoid(xv / u ** (two_h + 1.0), u)
    if drift is not None:
        rhs += np.trapezoid(np.asarray(drift(u, xv), dtype=float) / u**two_h, u)
    if driver is not None:
        if not driver.grid.same_as(g):
            raise UsageError("driver and path must share the grid")
        rhs += float(np.sum(u[:-1] ** -two_h * np.diff(driver.values[i:k + 1])))
    return abs(xv[-1] / u[-1] ** two_h - rhs)


def inversion_drift_values(v_points, hat, h):
    """D = hat - 2H int_{v_0}^v hat(w)/w dw for an ensemble of inverted paths."""
    h = hurst(h)
    v = np.asarray(v_points, dtype=float)
    integral = kernels.trapezoid_cumulative(np.ascontiguousarray(hat / v), v)
    return hat - 2.0 * h * integral


def fbm_inversion_drift_check(u_grid, b, h, pairs, threshold=4.0, richardson=True, base_seed=None):
    """Law test of hat X - 2H int hat X / v dv for X = B^H.

    ``b`` holds drivers (N, n) on ``u_grid`` = [delta, T_max]. With
    ``richardson`` the hat grid is also coarsened by 2 and the paths
    combined as 2 D_fine - D_coarse on the coarse points before testing.
    """
    from .verify import Ensemble, check_fbm_law

    h = hurst(h)
    v = reciprocal_grid(u_grid)
    hat = v.points ** (2.0 * h) * b[:, ::-1]
    d = inversion_drift_values(v.points, hat, h)
    grid = v
    if richardson:
        step = 2
        if (len(v) - 1) % step:
            raise UsageError("Richardson step needs an even number of intervals")
        d_coarse = inversion_drift_values(v.points[::step], hat[:, ::step], h)
        d = 2.0 * d[:, ::step] - d_coarse
        grid = TimeGrid(v.points[::step], v.kind)
    v0 = v.start
    ens = Ensemble(grid, d, base_seed, {"statistic": "inversion_drift", "richardson": richardson})
    reports = check_fbm_law(ens, h, pairs, threshold)
    return {"reports": reports, "truncation_bound": 2.0 * v0**h, "ensemble": ens}


# -- Bessel-type equation ------------------------------------------------------------

def bessel_values(points, b, rho, k, mode, h):
    """Implicit positive-root scheme for Z = rho + B + int c(s) ds / Z, ensemble-shaped.

    ``c = k`` (plain) or ``k s^(2H-1)`` (time_weighted). A grid not starting
    at 0 gets a virtual first step from (0, rho) with B(0) = 0.
    """
    if not k > 0:
        raise DomainError("k must be positive")
    if rho < 0:
        raise DomainError("rho must be non-negative")
    h = hurst(h)
    t = np.asarray(points, dtype=float)
    b = np.atleast_2d(b)
    prepend = t[0] > 0
    if prepend:
        t = np.concatenate([[0.0], t])
        b = np.concatenate([np.zeros((b.shape[0], 1)), b], axis=1)
    if mode == "plain":
        c = np.full(t.size, float(k))
    elif mode == "time_weighted":
        with np.errstate(divide="ignore"):
            c = float(k) * t ** (2.0 * h - 1.0)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    z0 = np.full(b.shape[0], float(rho)) + b[:, 0]
    z = kernels.bessel_recursion(np.ascontiguousarray(b), t, c, z0)
    return z[:, 1:] if prepend else z


def solve_bessel_implicit(rho, k, driver, mode, h):
    vals = bessel_values(driver.grid.points, driver.values[None, :], rho, k, mode, h)[0]
    return driver.with_values(vals, label=f"R({rho:g})", k=float(k), mode=mode)


# -- Skorokhod reflection --------------------------------------------------------------

def complementarity_defect(z, lam):
    """Left-point sum of Z dlambda along the last axis (0 for an exact reflection).

    On a grid lambda only grows at steps ending with Z = 0, so every term is
    Z just before a push times the push.
    """
    z = np.asarray(z)
    dl = np.diff(lam, axis=-1)
    return np.sum(z[..., :-1] * dl, axis=-1)


def skorokhod_reflect(rho, driver):
    """Z = rho + B + lambda, lambda(t) = max(0, max_{s<=t} -(rho + B_s))."""
    if rho < 0:
        raise DomainError("rho must be non-negative")
    y = float(rho) + driver.values
    lam = kernels.reflection_push(np.ascontiguousarray(y[None, :]))[0]
    z = y + lam
    return ReflectedPair(driver.with_values(z, label="Z"), driver.with_values(lam, label="lambda"))


# -- representation theorem -------------------------------------------------------------

def _gamma_to_b(gamma, h):
    u = gamma.grid.points
    t = (1.0 / u)[::-1]
    run = integrate_values(u ** (-2.0 * h), gamma.values[None, :])[0]
    b = -(run[-1] - run)[::-1]
    return t, b


def _restrict(path, lo, hi):
    p = path.grid.points
    i = int(np.searchsorted(p, lo * (1 - 1e-12)))
    j = int(np.searchsorted(p, hi * (1 + 1e-12), side="right"))
    kind = path.grid.kind if path.grid.kind != "uniform" else "custom"
    return SamplePath(TimeGrid(p[i:j], kind), path.values[i:j], path.seed, path.label, path.meta)


def solve_Ek_via_inversion(k, gamma_driver, y, h, domain=None):
    """Solution of (E_k): X_t = gamma_t + 2H int X/s ds - k int s^(2H-1)/X ds.

    Builds B from gamma by inversion, solves the time-weighted Bessel
    equation from ``y`` and maps back with X(u) = u^2H R(1/u).
    ``domain=(delta, T)`` restricts the returned path.
    """
    h = hurst(h)
    if y < 0:
        raise DomainError("y must be non-negative")
    t, b = _gamma_to_b(gamma_driver, h)
    r = bessel_values(t, b[None, :], y, k, "time_weighted", h)[0]
    u = gamma_driver.grid.points
    x = u ** (2.0 * h) * r[::-1]
    xpath = gamma_driver.with_values(x, label="X_Ek", k=float(k), y=float(y))
    if domain is not None:
        xpath = _restrict(xpath, *domain)
    tg = TimeGrid(t, "custom")
    return {
        "x": xpath,
        "r": SamplePath(tg, r, gamma_driver.seed, "R"),
        "b": SamplePath(tg, b, gamma_driver.seed, "B"),
        "tail_stderr": gamma_driver.grid.stop ** -h,
    }


def ek_residual(x, gamma, k, h):
    """sup_t |X_t - X_d - (gamma_t - gamma_d) - 2H int_d^t X/s ds + k int_d^t s^(2H-1)/X ds|."""
    h = hurst(h)
    g = _restrict(gamma, x.grid.start, x.grid.stop)
    if not g.grid.same_as(x.grid):
        raise UsageError("gamma must live on the solution grid")
    s = x.grid.points
    xv = x.values[None, :]
    lin = kernels.trapezoid_cumulative(xv / s, s)[0]
    sing = kernels.trapezoid_cumulative(s ** (2.0 * h - 1.0) / xv, s)[0]
    r = (x.values - x.values[0]) - (g.values - g.values[0]) - 2.0 * h * lin + k * sing
    return float(np.max(np.abs(r)))


def solve_El_via_inversion(gamma_driver, y, h, domain=None):
    """Solution (X, l) of (E_l): X_t = gamma_t + 2H int X/s ds - l_t, X >= 0.

    l increases only where X = 0; it is recovered from the reflection
    push lambda via dl_u = -u^2H d[lambda(1/u)].
    """
    h = hurst(h)
    if y < 0:
        raise DomainError("y must be non-negative")
    t, b = _gamma_to_b(gamma_driver, h)
    tg = TimeGrid(t, "custom")
    pair = skorokhod_reflect(y, SamplePath(tg, b, gamma_driver.seed, "B"))
    u = gamma_driver.grid.points
    w = u ** (2.0 * h)
    x = w * pair.z.values[::-1]
    lam_u = pair.lam.values[::-1]  # lambda(1/u), non-increasing in u
    dl = w[:-1] * (lam_u[:-1] - lam_u[1:])
    l_vals = np.concatenate([[0.0], np.cumsum(dl)])
    xpath = gamma_driver.with_values(x, label="X_El", y=float(y))
    lpath = gamma_driver.with_values(l_vals, label="l")
    if domain is not None:
        xpath = _restrict(xpath, *domain)
        lpath = _restrict(lpath, *domain)
        lpath = lpath.with_values(lpath.values - lpath.values[0])
    return {"x": xpath, "l": lpath, "pair": pair, "tail_stderr": gamma_driver.grid.stop ** -h}


def el_residual(x, l_path, gamma, h):
    """sup_t |X_t - X_d - (gamma_t - gamma_d) - 2H int_d^t X/s ds + (l_t - l_d)|."""
    h = hurst(h)
    g = _restrict(gamma, x.grid.start, x.grid.stop)
    if not (g.grid.same_as(x.grid) and l_path.grid.same_as(x.grid)):
        raise UsageError("gamma, X and l must share the grid")
    s = x.grid.points
    lin = kernels.trapezoid_cumulative(x.values[None, :] / s, s)[0]
    r = (x.values - x.values[0]) - (g.values - g.values[0]) - 2.0 * h * lin \
        + (l_path.values - l_path.values[0])
    return float(np.max(np.abs(r)))


def estimate_limit_Y(x, h):
    """Average of X_t / t^2H over the last decade [T/10, T] and its max - min spread.

    The average is a time average (trapezoid in t), which weights the
    largest times most.
    """
    h = hurst(h)
    p = x.grid.points
    if p[0] <= 0 or p[-1] / p[0] < 100:
        raise UsageError("estimate_limit_Y needs T_max / delta >= 100")
    sel = p >= p[-1] / 10.0 * (1 - 1e-12)
    t = p[sel]
    ratio = x.values[sel] / t ** (2.0 * h)
    if t.size == 1:
        return {"y": float(ratio[0]), "spread": 0.0}
    y = float(np.trapezoid(ratio, t) / (t[-1] - t[0]))
    return {"y": y, "spread": float(np.max(ratio) - np.min(ratio))}


def transformed_drift(b, h):
    """Drift of the inverted equation: v -> b(1/v, hat/v^2H) v^2H / v^2."""
    h = hurst(h)
    two_h = 2.0 * h

    def drift(v, hat):
        v = np.asarray(v, dtype=float)
        return b(1.0 / v, hat / v**two_h) * v**two_h / v**2

    return drift


