"""Hot inner loops.

Every kernel has a numba version (``*_nb``) and a numpy version
(``*_np``); the public name is bound to one of them according to
:data:`linfbm._accel.NUMBA_ENABLED`. Arrays are 2-D ``(n_paths, n_points)``;
the recursions run along axis 1 and are vectorized across paths in the
numpy versions. Summation order is identical in both backends.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

__all__ = [
    "fixed_order_matmul",
    "left_point_integral",
    "trapezoid_cumulative",
    "flow_recursion",
    "bessel_recursion",
    "reflection_push",
    "BACKEND",
]


# -- z @ M^T with one fixed summation order per entry ---------------------
# BLAS results depend on the batch shape in the last bit; here entry (p, i)
# is always ((M[i,0] z[p,0] + M[i,1] z[p,1]) + ...), so a path does not
# depend on which batch it was drawn in. ``mt`` is M^T, C-contiguous; with
# ``lower`` set, M is taken to be lower-triangular and the zeros are skipped.

def fixed_order_matmul_np(z, mt, lower):
    n_paths, k = z.shape
    out = np.zeros((n_paths, mt.shape[1]))
    for j in range(k):
        lo = j if lower else 0
        out[:, lo:] += z[:, j:j + 1] * mt[j, lo:]
    return out


@njit
def fixed_order_matmul_nb(z, mt, lower):
    n_paths, k = z.shape
    m = mt.shape[1]
    out = np.zeros((n_paths, m))
    for p in range(n_paths):
        for j in range(k):
            zj = z[p, j]
            lo = j if lower else 0
            for i in range(lo, m):
                out[p, i] += zj * mt[j, i]
    return out


# -- left-point Riemann-Stieltjes sums ------------------------------------

def left_point_integral_np(f, b):
    out = np.zeros_like(b)
    np.cumsum(f[:-1] * np.diff(b, axis=1), axis=1, out=out[:, 1:])
    return out


@njit
def left_point_integral_nb(f, b):
    n_paths, n = b.shape
    out = np.zeros((n_paths, n))
    for p in range(n_paths):
        acc = 0.0
        for k in range(n - 1):
            acc += f[k] * (b[p, k + 1] - b[p, k])
            out[p, k + 1] = acc
    return out


# -- cumulative trapezoid for du-integrals --------------------------------

def trapezoid_cumulative_np(y, t):
    out = np.zeros_like(y)
    np.cumsum(0.5 * (y[:, 1:] + y[:, :-1]) * np.diff(t), axis=1, out=out[:, 1:])
    return out


@njit
def trapezoid_cumulative_nb(y, t):
    n_paths, n = y.shape
    out = np.zeros((n_paths, n))
    for p in range(n_paths):
        acc = 0.0
        for k in range(n - 1):
            acc += 0.5 * (y[p, k + 1] + y[p, k]) * (t[k + 1] - t[k])
            out[p, k + 1] = acc
    return out


# -- linear flow: X_{k+1} = X_k + w_k X_k + (B_{k+1} - B_k) -----------------
# computed as y_{k+1} = y_k + w_k X_k, X_k = B_k + y_k

def flow_recursion_np(b, w, start):
    """``start`` has length 1 (shared) or n_paths."""
    # accumulate the drift part y = x - b, so that w = 0 gives x == b + start exactly
    x = np.empty_like(b)
    y = np.broadcast_to(np.asarray(start, dtype=float), b.shape[:1]).copy()
    x[:, 0] = b[:, 0] + y
    for k in range(b.shape[1] - 1):
        y = y + w[k] * x[:, k]
        x[:, k + 1] = b[:, k + 1] + y
    return x


@njit
def flow_recursion_nb(b, w, start):
    n_paths, n = b.shape
    x = np.empty((n_paths, n))
    shared = start.size == 1  # broadcast like the numpy version
    for p in range(n_paths):
        y = start[0] if shared else start[p]
        x[p, 0] = b[p, 0] + y
        for k in range(n - 1):
            y = y + w[k] * x[p, k]
            x[p, k + 1] = b[p, k + 1] + y
    return x


# -- implicit Bessel-type step: z = a + c*dt/z, positive root ---------------

def bessel_recursion_np(b, t, c, z0):
    z = np.empty_like(b)
    z[:, 0] = z0
    for k in range(b.shape[1] - 1):
        a = z[:, k] + (b[:, k + 1] - b[:, k])
        q = 4.0 * c[k + 1] * (t[k + 1] - t[k])
        root = np.sqrt(a * a + q)
        # two algebraically equal forms; pick the one without cancellation
        with np.errstate(divide="ignore", invalid="ignore"):
            z[:, k + 1] = np.where(a >= 0.0, 0.5 * (a + root), 0.5 * q / (root - a))
    return z


@njit
def bessel_recursion_nb(b, t, c, z0):
    n_paths, n = b.shape
    z = np.empty((n_paths, n))
    for p in range(n_paths):
        zk = z0[p]
        z[p, 0] = zk
        for k in range(n - 1):
            a = zk + (b[p, k + 1] - b[p, k])
            q = 4.0 * c[k + 1] * (t[k + 1] - t[k])
            root = np.sqrt(a * a + q)
            if a >= 0.0:
                zk = 0.5 * (a + root)
            else:
                zk = 0.5 * q / (root - a)
            z[p, k + 1] = zk
    return z


# -- Skorokhod push: lambda_k = max(0, max_{j<=k} -y_j) --------------------

def reflection_push_np(y):
    return np.maximum(np.maximum.accumulate(-y, axis=1), 0.0)


@njit
def reflection_push_nb(y):
    n_paths, n = y.shape
    lam = np.empty((n_paths, n))
    for p in range(n_paths):
        run = 0.0
        for k in range(n):
            v = -y[p, k]
            if v > run:
                run = v
            lam[p, k] = run
    return lam


if NUMBA_ENABLED:
    BACKEND = "numba"
    fixed_order_matmul = fixed_order_matmul_nb
    left_point_integral = left_point_integral_nb
    trapezoid_cumulative = trapezoid_cumulative_nb
    flow_recursion = flow_recursion_nb
    bessel_recursion = bessel_recursion_nb
    reflection_push = reflection_push_nb
else:
    BACKEND = "numpy"
    fixed_order_matmul = fixed_order_matmul_np
    left_point_integral = left_point_integral_np
    trapezoid_cumulative = trapezoid_cumulative_np
    flow_recursion = flow_recursion_np
    bessel_recursion = bessel_recursion_np
    reflection_push = reflection_push_np
