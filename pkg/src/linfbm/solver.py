"""Solutions of X_t = B_t^H + int_0^t X_u dmu(u) on grids in (0, 1].

The integral from 0 is replaced by the integral from the first grid point
eps. On a cell (t_j, t_{j+1}] the drift term uses the weight
``w_j = expm1(mu((t_j, t_{j+1}]))``, i.e. int X dmu with X following the
homogeneous flow X M = const inside the cell. With this weight, C / M is
an exact discrete solution of the homogeneous equation, so adding it to
a solution leaves the residual unchanged.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels
from .errors import StabilityError, UsageError
from .fbm import hurst, sample_fbm_ensemble
from .grid import SamplePath, TimeGrid
from .measure import big_m_on, cell_masses, tail_mass
from .rng import derive_seeds
from .young import integrate_values, wiener_second_moment

__all__ = [
    "SolutionPath",
    "explicit_x0",
    "explicit_x1",
    "family_member",
    "direct_solve",
    "residual",
    "residual_report",
    "flow_relation_check",
    "variance_at_zero",
    "integral_criterion",
    "symmetric_grid",
    "time_reversal_psi",
    "reversed_residual",
    "calibrate_residual_threshold",
    "epsilon_sensitivity",
]


@dataclass(frozen=True, eq=False)
class SolutionPath:
    path: SamplePath
    kind: str
    measure: object
    epsilon: float
    c: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.path.grid.start <= 0:
            raise UsageError("solution grids must exclude t = 0")
        if self.epsilon != self.path.grid.start:
            raise UsageError("epsilon must be the first grid point")
        if self.kind == "x1" and self.path.values[-1] != 0.0:
            raise UsageError("X^(1) must vanish at t = 1")

    @property
    def values(self):
        return self.path.values

    @property
    def grid(self):
        return self.path.grid


def _check_solution_grid(grid):
    if grid.start <= 0 or grid.stop > 1.0:
        raise UsageError("solution grids must lie in (0, 1]")


def _check_same(a, b):
    if not a.grid.same_as(b.grid):
        raise UsageError("candidate and driver must share the grid")


def flow_weights(m, points):
    masses = cell_masses(m, points)
    worst = int(np.argmax(np.abs(masses))) if masses.size else 0
    if masses.size and abs(masses[worst]) >= 1.0:
        raise StabilityError(
            f"cell ({points[worst]!r}, {points[worst + 1]!r}] carries drift mass {masses[worst]!r}; "
            "refine the grid so every |mu(cell)| < 1")
    return np.expm1(masses)


# -- explicit representations ----------------------------------------------------

def x0_values(mvals, b):
    """X^(0) for an ensemble ``b`` (N, n) given M on the grid."""
    return integrate_values(mvals, b) / mvals


def x1_values(mvals, b):
    run = integrate_values(mvals, b)
    x = -(run[:, -1:] - run) / mvals
    x[:, -1] = 0.0
    return x


def explicit_x0(m, driver, h):
    """X^(0)_t = M(t)^-1 int_eps^t M(r) dB_r."""
    hurst(h)
    _check_solution_grid(driver.grid)
    mvals = big_m_on(m, driver.grid.points)
    vals = x0_values(mvals, driver.values[None, :])[0]
    return SolutionPath(driver.with_values(vals, label="X0"), "x0", m, driver.grid.start)


def explicit_x1(m, driver, h):
    """X^(1)_t = -M(t)^-1 int_t^1 M(r) dB_r, zero at t = 1."""
    hurst(h)
    _check_solution_grid(driver.grid)
    if driver.grid.stop != 1.0:
        raise UsageError("X^(1) needs a grid ending at t = 1")
    mvals = big_m_on(m, driver.grid.points)
    vals = x1_values(mvals, driver.values[None, :])[0]
    return SolutionPath(driver.with_values(vals, label="X1"), "x1", m, driver.grid.start)


def family_member(base, c, m):
    """base + c / M."""
    mvals = big_m_on(m, base.grid.points)
    vals = base.values + c / mvals
    return SolutionPath(base.path.with_values(vals, label=f"X(c={c:g})"), "family_member", m,
                        base.epsilon, c=float(c), meta={"base_kind": base.kind})


def direct_solve(m, driver, start_value=0.0):
    """Forward recursion X_{k+1} = X_k + w_k X_k + (B_{k+1} - B_k), X(eps) = start + B(eps).

    ``start_value`` stands for int_0^eps X dmu; the family constant is
    C = start_value * M(eps).
    """
    _check_solution_grid(driver.grid)
    w = flow_weights(m, driver.grid.points)
    b = np.ascontiguousarray(driver.values[None, :])
    vals = kernels.flow_recursion(b, w, np.array([float(start_value)]))[0]
    return SolutionPath(driver.with_values(vals, label="X_direct"), "direct", m, driver.grid.start,
                        meta={"start_value": float(start_value)})


def direct_values_ensemble(m, points, b, start):
    w = flow_weights(m, points)
    start = np.broadcast_to(np.asarray(start, dtype=float), (b.shape[0],)).copy()
    return kernels.flow_recursion(np.ascontiguousarray(b), w, start)


# -- diagnostics -----------------------------------------------------------------

def residual_values(m, points, x, b):
    """Per-point defect of the discretized equation, ensemble-shaped."""
    w = flow_weights(m, points)
    drift = np.zeros_like(x)
    np.cumsum(x[:, :-1] * w, axis=1, out=drift[:, 1:])
    return x - b - (x[:, :1] - b[:, :1]) - drift


def residual(candidate, m, driver):
    """sup_k |X_k - B_k - (X_eps - B_eps) - sum_{j<k} X_j w_j|."""
    _check_same(candidate.path if isinstance(candidate, SolutionPath) else candidate, driver)
    x = (candidate.values if isinstance(candidate, SolutionPath) else candidate.values)[None, :]
    r = residual_values(m, driver.grid.points, x, driver.values[None, :])
    return float(np.max(np.abs(r)))


def _tv_mass(m, a, b):
    val, _ = integrate.quad(lambda s: m.tv_density(math.exp(-s)) * math.exp(-s),
                            -math.log(b), -math.log(a), epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def residual_report(candidate, m, driver):
    """Residual plus the eps-truncation scale |X(eps)| * |mu|((eps, 2 eps])."""
    eps = driver.grid.start
    x_eps = float(candidate.values[0])
    return {
        "residual": residual(candidate, m, driver),
        "epsilon": eps,
        "eps_truncation_scale": abs(x_eps) * _tv_mass(m, eps, min(2.0 * eps, 1.0)),
    }


def flow_relation_check(candidate, m, driver, u, t):
    """|X_t - X_u M(u)/M(t) - M(t)^-1 int_u^t M dB| with a trapezoid dB-sum.

    The trapezoid rule is deliberately different from the left-point sums
    used to build X^(0), so the defect measures discretization error.
    """
    _check_same(candidate.path if isinstance(candidate, SolutionPath) else candidate, driver)
    grid = driver.grid
    i, k = grid.index_of(u), grid.index_of(t)
    if i > k:
        raise UsageError("flow relation needs u <= t")
    if i == k:
        return 0.0
    pts = grid.points[i:k + 1]
    mv = big_m_on(m, pts)
    db = np.diff(driver.values[i:k + 1])
    integral = float(np.sum(0.5 * (mv[:-1] + mv[1:]) * db))
    x = candidate.values
    return abs(x[k] - x[i] * mv[0] / mv[-1] - integral / mv[-1])


def m_function(m, n_nodes=4000):
    """Fast callable r -> M(r) for quadrature."""
    if m.family == "power_law":
        lam = m.lam
        return lambda r: r**-lam
    lo = max(m.domain_min, 1e-12)
    nodes = np.geomspace(lo, 1.0, n_nodes)
    logm = np.array([tail_mass(m, t) for t in nodes])
    logn = np.log(nodes)
    return lambda r: math.exp(float(np.interp(math.log(r), logn, logm)))


def variance_at_zero(m, h, probes, kind="x0"):
    """M(t)^-2 Var[int M dB] over (0, t] (``x0``) or [t, 1] (``x1``) at each probe."""
    h = hurst(h)
    mf = m_function(m)
    out = []
    for t in probes:
        t = float(t)
        if not 0.0 < t <= 1.0:
            raise UsageError("probes must lie in (0, 1]")
        if kind == "x0":
            v = wiener_second_moment(mf, mf, h, t, a=0.0)
        elif kind == "x1":
            v = wiener_second_moment(mf, mf, h, 1.0, a=t) if t < 1.0 else 0.0
        else:
            raise UsageError(f"unknown kind {kind!r}")
        out.append(v / mf(t) ** 2)
    return out


def integral_criterion(m, h, kind="x0", lower=1e-8):
    """int_lower^1 M(u)^-1 sqrt(Var[int M dB]) d|mu|(u), the variance test against |mu|.

    ``kind`` picks the integral over (0, u] (``x0``) or [u, 1] (``x1``).
    Returns the value and the truncation point.
    """
    h = hurst(h)
    mf = m_function(m)

    def integrand(s):
        u = math.exp(-s)
        if kind == "x0":
            v = wiener_second_moment(mf, mf, h, u)
        else:
            v = wiener_second_moment(mf, mf, h, 1.0, a=u) if u < 1.0 else 0.0
        return math.sqrt(max(v, 0.0)) / mf(u) * m.tv_density(u) * u

    val, err = integrate.quad(integrand, 0.0, -math.log(lower), epsabs=0.0, epsrel=1e-6, limit=100)
    return {"value": val, "error": err, "lower": lower, "kind": kind}


# -- time reversal ------------------------------------------------------------------

def symmetric_grid(n_half, eps):
    """Geometric on [eps, 1/2], mirrored onto [1/2, 1 - eps], plus t = 1."""
    g = TimeGrid.geometric(eps, 0.5, n_half).points
    pts = np.concatenate([g, 1.0 - g[-2::-1], [1.0]])
    return TimeGrid.custom(pts)


def _check_symmetric(grid):
    p = grid.points
    if p[-1] != 1.0:
        raise UsageError("time reversal needs a grid ending at 1")
    q = p[:-1]
    if np.max(np.abs(q + q[::-1] - 1.0)) > 1e-12:
        raise UsageError("time reversal needs a grid symmetric under t -> 1 - t")


def time_reversal_psi(x1, driver):
    """psi_s = -X^(1)_{1-s}, beta~_s = B_1 - B_{1-s} on the reflected grid {1 - t}."""
    _check_same(x1.path if isinstance(x1, SolutionPath) else x1, driver)
    _check_symmetric(driver.grid)
    p = driver.grid.points
    s = 1.0 - p[::-1]
    s[0] = 0.0
    rgrid = TimeGrid.custom(s)
    psi = -x1.values[::-1]
    beta = driver.values[-1] - driver.values[::-1]
    return {
        "psi": SamplePath(rgrid, psi + 0.0, driver.seed, "psi"),
        "beta_tilde": SamplePath(rgrid, beta, driver.seed, "beta_tilde"),
    }


def reversed_residual(psi, beta_tilde, m, source_grid):
    """sup |psi_k - beta~_k + sum_{j<k} psi_j mu~(cell_j)| with plain cell masses of the image measure."""
    masses = cell_masses(m, source_grid.points)[::-1]
    drift = np.concatenate([[0.0], np.cumsum(psi.values[:-1] * masses)])
    return float(np.max(np.abs(psi.values - beta_tilde.values + drift)))


# -- calibration ----------------------------------------------------------------------

def calibrate_residual_threshold(m, h, grid, kind="x1", n_seeds=200, base_seed=2024,
                                 quantile=0.99, factor=2.0, method="cholesky"):
    """Residual rejection threshold: ``factor`` times the ``quantile`` of true-solution residuals."""
    h = hurst(h)
    b = sample_fbm_ensemble(grid, h, derive_seeds(base_seed, n_seeds), method)
    mvals = big_m_on(m, grid.points)
    x = x1_values(mvals, b) if kind == "x1" else x0_values(mvals, b)
    r = np.max(np.abs(residual_values(m, grid.points, x, b)), axis=1)
    return {"threshold": float(factor * np.quantile(r, quantile)), "quantile": quantile,
            "factor": factor, "n_seeds": n_seeds, "base_seed": base_seed, "median": float(np.median(r))}


def epsilon_sensitivity(m, h, seed, eps_small, eps_large, n, kind="x0"):
    """Value at t = 1 from the same driver truncated at two epsilons."""
    h = hurst(h)
    grid = TimeGrid.geometric(eps_small, 1.0, n)
    k = grid.index_of(eps_large, rtol=1e-8) if eps_large in grid.points else None
    if k is None:
        k = int(np.searchsorted(grid.points, eps_large))
    b = sample_fbm_ensemble(grid, h, [seed])
    mvals = big_m_on(m, grid.points)
    fun = x0_values if kind == "x0" else x1_values
    full = fun(mvals, b)[0, -1]
    trunc = fun(mvals[k:], b[:, k:])[0, -1]
    return {"eps": [eps_small, float(grid.points[k])], "value_at_1": [float(full), float(trunc)],
            "gap": float(abs(full - trunc))}
