"""Pathwise integrals of deterministic integrands against fBm paths."""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import UsageError
from .fbm import hurst
from .grid import SamplePath, TimeGrid
from .quadrature import kernel_double_integral

__all__ = [
    "IntegrandOnGrid",
    "integrate_against",
    "integrate_values",
    "wiener_second_moment",
    "power_tail_variance",
    "TailIntegral",
    "tail_integral",
]


@dataclass(frozen=True, eq=False)
class IntegrandOnGrid:
    """Deterministic integrand sampled on a grid.

    ``func`` (optional) is the exact function, needed by the quadrature
    routines; the sampled ``values`` feed the path integrals.
    """

    grid: TimeGrid
    values: np.ndarray
    singularity_at_zero: bool = False
    func: object = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.shape != self.grid.points.shape:
            raise UsageError("integrand values and grid differ in length")
        if not np.all(np.isfinite(vals)):
            raise UsageError("integrand must be finite at every grid point")
        if self.singularity_at_zero and self.grid.start <= 0:
            raise UsageError("a grid for an integrand singular at 0 must exclude 0")

    @classmethod
    def from_function(cls, func, grid, singularity_at_zero=False):
        vals = np.array([func(t) for t in grid.points], dtype=float)
        return cls(grid, vals, singularity_at_zero, func)

    def __call__(self, t):
        if self.func is None:
            raise UsageError("integrand has no exact function attached")
        return self.func(t)

    def combine(self, alpha, other, beta):
        if not self.grid.same_as(other.grid):
            raise UsageError("integrands live on different grids")
        fa, fb = self.func, other.func
        func = None if fa is None or fb is None else (lambda t: alpha * fa(t) + beta * fb(t))
        return IntegrandOnGrid(self.grid, alpha * self.values + beta * other.values,
                               self.singularity_at_zero or other.singularity_at_zero, func)


def integrate_values(f, b, method="left"):
    """Running integrals for an ensemble: ``f`` shape (n,), ``b`` shape (N, n).

    ``left``: I_k = sum_{j<k} f_j (b_{j+1} - b_j). ``trapezoid`` averages
    the integrand over each cell and serves as a cross-check only.
    """
    f = np.ascontiguousarray(f, dtype=float)
    b = np.ascontiguousarray(np.atleast_2d(b), dtype=float)
    if method == "left":
        return kernels.left_point_integral(f, b)
    if method == "trapezoid":
        fm = np.empty_like(f)
        fm[:-1] = 0.5 * (f[:-1] + f[1:])
        fm[-1] = f[-1]
        return kernels.left_point_integral(fm, b)
    raise UsageError(f"unknown integration rule {method!r}")


def integrate_against(f, driver, method="left"):
    """Running integral int_{t_0}^{t_k} f dB along one driver path."""
    if not f.grid.same_as(driver.grid):
        raise UsageError("integrand and driver must share the grid")
    vals = integrate_values(f.values, driver.values[None, :], method)[0]
    return driver.with_values(vals, label=f"int f d{driver.label or 'B'}")


def _as_callable(f):
    if isinstance(f, IntegrandOnGrid):
        if f.func is None:
            raise UsageError("quadrature needs the integrand's exact function")
        return f.func
    if isinstance(f, (int, float)):
        c = float(f)
        return lambda _t: c
    return f


def wiener_second_moment(f, g, h, t, a=0.0):
    """E[(int_a^t f dB^H)(int_a^t g dB^H)] = int int f(u) g(v) Phi_H(u - v) du dv."""
    h = hurst(h)
    val, _ = kernel_double_integral(_as_callable(f), _as_callable(g), h, (a, t), (a, t))
    return val


@lru_cache(maxsize=64)
def _power_tail_constant(p, h):
    # x = 1/a maps [1, inf)^2 to (0, 1]^2 and leaves (ab)^(p - 2H) |a - b|^(2H-2)
    if abs(p - 2.0 * h) < 1e-15:
        return 1.0
    e = p - 2.0 * h
    w = lambda a: a**e  # noqa: E731
    val, _ = kernel_double_integral(w, w, h, (0.0, 1.0), (0.0, 1.0))
    return val


def power_tail_variance(p, h):
    """Variance of int_T^inf u^(-p) dB^H as a function of T (needs p > H)."""
    h = hurst(h)
    p = float(p)
    if not p > h:
        raise UsageError(f"int_T^inf u^-{p} dB^H diverges unless p > H = {h}")
    c = _power_tail_constant(p, h)
    return lambda T: c * T ** (2.0 * h - 2.0 * p)


@dataclass(frozen=True)
class TailIntegral:
    value_path: SamplePath
    tail_stderr: float


def tail_integral(f, driver, h, tail_variance=None, zero=False):
    """Truncated tail integrals int_{t_k}^{T_max} f dB for every grid point t_k.

    ``tail_variance`` maps T to Var[int_T^inf f dB]; its square root at
    T_max is reported as ``tail_stderr``. ``zero=True`` declares f = 0.
    """
    h = hurst(h)
    grid = driver.grid
    if zero:
        return TailIntegral(driver.with_values(np.zeros(len(grid)), label="tail"), 0.0)
    if tail_variance is None:
        raise UsageError("tail_integral needs a tail variance bound for the integrand")
    var_tail = tail_variance(grid.stop) if callable(tail_variance) else float(tail_variance)
    if not (np.isfinite(var_tail) and var_tail >= 0):
        raise UsageError(f"invalid tail variance {var_tail!r}")
    fvals = np.array([f(t) for t in grid.points], dtype=float)
    run = integrate_values(fvals, driver.values[None, :])[0]
    vals = run[-1] - run
    return TailIntegral(driver.with_values(vals, label="tail"), math.sqrt(var_tail))
