"""Fractional Brownian motion: covariance, kernel, exact path synthesis."""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg

from . import kernels, rng
from .errors import DomainError, SingularityError, UsageError
from .grid import SamplePath, TimeGrid
from .quadrature import kernel_double_integral

__all__ = [
    "HurstParam",
    "hurst",
    "covariance",
    "kernel_phi",
    "covariance_via_kernel",
    "cov_matrix",
    "is_psd",
    "sample_fbm",
    "sample_fbm_ensemble",
    "CirculantFallbackWarning",
]

CIRCULANT_CLIP = 1e-9
PSD_TOL = 1e-8


@dataclass(frozen=True)
class HurstParam:
    """Hurst exponent restricted to the open interval (1/2, 1)."""

    h: float

    def __post_init__(self):
        h = float(self.h)
        if not (0.5 < h < 1.0):
            raise DomainError(f"Hurst parameter must lie in (1/2, 1), got {h!r}")
        object.__setattr__(self, "h", h)

    def __float__(self):
        return self.h


def hurst(h):
    """Validate and return ``h`` as a float."""
    return h.h if isinstance(h, HurstParam) else HurstParam(h).h


def covariance(s, t, h):
    """R_H(s, t) = (t^2H + s^2H - |t - s|^2H) / 2.

    ``h`` is not range-checked here so the H = 1/2 limit stays usable as an
    analytic check; array arguments broadcast.
    """
    h = float(h)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("covariance is defined for non-negative times")
    two_h = 2.0 * h
    out = 0.5 * (t**two_h + s**two_h - np.abs(t - s) ** two_h)
    # exact diagonal
    out = np.where(s == t, t**two_h, out)
    return float(out) if out.ndim == 0 else out


def kernel_phi(t, h):
    """Phi_H(t) = H (2H - 1) |t|^(2H - 2); diverges at 0."""
    h = hurst(h)
    t = float(t)
    if t == 0.0:
        raise SingularityError("Phi_H is singular at t = 0 for H < 1")
    return h * (2.0 * h - 1.0) * abs(t) ** (2.0 * h - 2.0)


def covariance_via_kernel(s, t, h):
    """E[B_s B_t] as the double integral of Phi_H over [0, t] x [0, s]."""
    h = hurst(h)
    if not (s > 0 and t > 0):
        raise DomainError("covariance_via_kernel needs s, t > 0")
    one = lambda _u: 1.0  # noqa: E731
    val, _ = kernel_double_integral(one, one, h, (0.0, t), (0.0, s))
    return val


def cov_matrix(grid, h):
    """Covariance matrix of (B_t) over the grid points, symmetric by construction."""
    t = grid.points if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    c = covariance(t[:, None], t[None, :], h)
    return 0.5 * (c + c.T)


def is_psd(c, tol=PSD_TOL):
    if c.size == 0:
        return True
    scale = float(np.max(np.diag(c)))
    return float(np.linalg.eigvalsh(c)[0]) >= -tol * max(scale, 0.0)


# -- samplers --------------------------------------------------------------------


class CirculantFallbackWarning(RuntimeWarning):
    """Circulant embedding was not nonnegative; Cholesky was used instead."""


@lru_cache(maxsize=32)
def _cholesky_factor(points, h):
    t = np.frombuffer(points)
    nz = t > 0
    c = cov_matrix(t[nz], h)
    try:
        low = linalg.cholesky(c, lower=True, check_finite=False)
        lower = True
    except linalg.LinAlgError:
        # numerically singular: symmetric square root via eigh, negatives clipped
        w, v = np.linalg.eigh(c)
        low = v * np.sqrt(np.clip(w, 0.0, None))
        lower = False
    factor_t = np.ascontiguousarray(low.T)
    factor_t.setflags(write=False)
    return nz, factor_t, lower


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(n, h):
    """sqrt(eigenvalues / m) of the size m = 2n circulant embedding of unit-step fGn."""
    two_h = 2.0 * h
    j = np.arange(n + 1, dtype=float)
    gamma = 0.5 * (np.abs(j + 1) ** two_h - 2.0 * j**two_h + np.abs(j - 1) ** two_h)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    top = eig.max()
    if eig.min() < -CIRCULANT_CLIP * top:
        return None, float(eig.min())
    eig = np.clip(eig, 0.0, None)
    out = np.sqrt(eig / row.size)
    out.setflags(write=False)
    return out, float(eig.min())


def _uniform_offset(grid):
    """Number of steps from 0 to the first point of a uniform grid."""
    if len(grid) < 2:
        raise UsageError("circulant method needs at least two grid points")
    dt = (grid.stop - grid.start) / (len(grid) - 1)
    k = grid.start / dt
    if abs(k - round(k)) > 1e-9 * max(1.0, k):
        raise UsageError("circulant method needs the grid start to be a multiple of the step")
    return int(round(k)), dt


def _circulant_batch(grid, h, seeds):
    offset, dt = _uniform_offset(grid)
    n = offset + len(grid) - 1
    sq, min_eig = _circulant_sqrt_eigs(n, h)
    if sq is None:
        return None, min_eig
    m = sq.size
    out = np.zeros((len(seeds), n + 1))
    for row, seed in enumerate(seeds):
        z = rng.generator(seed).standard_normal(2 * m)
        w = sq * (z[:m] + 1j * z[m:])
        incr = np.fft.fft(w)[:n].real
        np.cumsum(incr, out=out[row, 1:])
    out *= dt**h
    return out[:, offset:], min_eig


def _cholesky_batch(grid, h, seeds):
    nz, factor_t, lower = _cholesky_factor(grid.points.tobytes(), h)
    z = rng.standard_normals(seeds, factor_t.shape[0])
    out = np.zeros((len(seeds), len(grid)))
    out[:, nz] = kernels.fixed_order_matmul(z, factor_t, lower)
    return out


def sample_fbm_ensemble(grid, h, seeds, method="cholesky", warnings_out=None):
    """Array ``(len(seeds), len(grid))``; row ``i`` depends only on ``seeds[i]``.

    ``method="circulant"`` needs a uniform grid whose start is a multiple of
    the step. If the embedding has eigenvalues below ``-1e-9 * max`` the
    Cholesky sampler is used and a record is appended to ``warnings_out``.
    Values at t = 0 are exactly zero.
    """
    h = hurst(h)
    seeds = [int(s) for s in seeds]
    if method == "cholesky":
        return _cholesky_batch(grid, h, seeds)
    if method != "circulant":
        raise UsageError(f"unknown method {method!r}")
    if grid.kind != "uniform":
        raise UsageError("circulant method needs a uniform grid")
    if len(grid) == 1:
        return _cholesky_batch(grid, h, seeds)
    out, min_eig = _circulant_batch(grid, h, seeds)
    if out is None:
        record = {
            "event": "circulant_fallback",
            "min_eigenvalue": min_eig,
            "h": h,
            "n": len(grid),
        }
        if warnings_out is not None:
            warnings_out.append(record)
        warnings.warn(f"circulant embedding not nonnegative ({record}); using Cholesky",
                      CirculantFallbackWarning, stacklevel=2)
        return _cholesky_batch(grid, h, seeds)
    return out


def sample_fbm(grid, h, seed, method="cholesky"):
    """One fBm path on ``grid``; deterministic in ``(seed, method, grid, h)``."""
    log = []
    values = sample_fbm_ensemble(grid, h, [seed], method, warnings_out=log)[0]
    meta = {"h": hurst(h), "method": method}
    if log:
        meta["warnings"] = log
    return SamplePath(grid, values, int(seed), "B^H", meta)


def ensemble_batches(grid, h, base_seed, n_paths, method="cholesky", batch=2000, start=0):
    """Yield ``(first_index, values)`` blocks of the ensemble seeded by ``base_seed``."""
    for lo in range(start, start + n_paths, batch):
        hi = min(lo + batch, start + n_paths)
        yield lo, sample_fbm_ensemble(grid, h, rng.derive_seeds(base_seed, hi - lo, lo), method)


