"""Double integrals against the singular kernel |u - v|^(2H-2).

The inner integral in v is split at the diagonal v = u and each half is
handed to QUADPACK's algebraic-weight rule (QAWS), which integrates the
factor |u - v|^(2H-2) exactly and only sees the smooth part of the
integrand. The outer integral in u is adaptive with the rectangle's
corners as breakpoints, where the inner function loses smoothness.
"""

import warnings

import numpy as np
from scipy import integrate

from .errors import NumericalError

_LIMIT = 200


def _quad(func, a, b, **kw):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(func, a, b, limit=_LIMIT, **kw)
    return val, err, bool(caught)


def _inner(g, u, a, b, alpha, epsrel):
    """int_a^b g(v) |u - v|^alpha dv and its error estimate."""
    total = 0.0
    err = 0.0
    if u <= a or u >= b:
        # kernel regular inside; nearly singular only when u hugs an end
        val, e, _ = _quad(lambda v: g(v) * abs(u - v) ** alpha, a, b, epsabs=0.0, epsrel=epsrel)
        return val, e
    if u > a:
        mid = a + 0.5 * (u - a)
        val, e, _ = _quad(lambda v: g(v) * (u - v) ** alpha, a, mid, epsabs=0.0, epsrel=epsrel)
        total += val
        err += e
        val, e, _ = _quad(g, mid, u, weight="alg", wvar=(0.0, alpha), epsabs=0.0, epsrel=epsrel)
        total += val
        err += e
    if u < b:
        val, e, _ = _quad(g, u, b, weight="alg", wvar=(alpha, 0.0), epsabs=0.0, epsrel=epsrel)
        total += val
        err += e
    return total, err


def kernel_double_integral(f, g, h, u_range, v_range, epsrel=1e-10, fail_rtol=1e-7):
    """Return ``(value, abserr)`` of

        int_{u_range} int_{v_range} f(u) g(v) H(2H-1) |u - v|^(2H-2) dv du.

    ``f`` and ``g`` are scalar callables. Raises :class:`NumericalError`
    when the outer error estimate exceeds ``fail_rtol`` relative.
    """
    h = float(h)
    alpha = 2.0 * h - 2.0
    const = h * (2.0 * h - 1.0)
    a1, b1 = map(float, u_range)
    a2, b2 = map(float, v_range)
    if b1 <= a1 or b2 <= a2:
        return 0.0, 0.0
    inner_err = [0.0]

    def outer(u):
        val, e = _inner(g, u, a2, b2, alpha, epsrel)
        fu = f(u)
        inner_err[0] = max(inner_err[0], abs(fu) * e)
        return fu * val

    brk = sorted({p for p in (a2, b2) if a1 < p < b1})
    val, err, warned = _quad(outer, a1, b1, epsabs=0.0, epsrel=epsrel, points=brk or None)
    err = const * (err + inner_err[0] * (b1 - a1))
    val = const * val
    if not np.isfinite(val) or err > fail_rtol * abs(val) + 1e-300:
        raise NumericalError(
            f"kernel quadrature did not converge: value={val!r}, error estimate={err!r}",
            achieved_error=err,
        )
    return val, err
