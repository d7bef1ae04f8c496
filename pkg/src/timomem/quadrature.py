"""Adaptive quadrature helpers for improper integrals on [0, inf)."""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate

from .errors import NumericalError

RTOL = 1e-10


def _quad(f, a, b, rtol, limit, what):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            f, a, b, epsabs=0.0, epsrel=rtol, limit=limit, full_output=1
        )[:3]
    if not np.isfinite(val):
        raise NumericalError(f"{what}: non-finite result on [{a}, {b}]")
    # Roundoff warnings are harmless when the error estimate is still small.
    tol = max(1e3 * rtol * abs(val), 1e-300)
    if err > tol and err > 1e-14:
        raise NumericalError(
            f"{what}: quadrature did not converge on [{a}, {b}] "
            f"(value={val:.6e}, error estimate={err:.2e}, evaluations={info.get('neval')})"
        )
    return val, err


def integrate_0_inf(f, split: float = 10.0, rtol: float = RTOL, what: str = "integral",
                    limit: int = 400) -> float:
    """Integrate ``f`` over [0, inf).

    [0, split] is handled directly; the tail uses ``u = 1/(1+s)`` so slowly
    decaying power-law tails become a finite interval.
    """
    if split <= 0:
        raise ValueError("split must be positive")
    head, _ = _quad(f, 0.0, split, rtol, limit, what)
    u_max = 1.0 / (1.0 + split)

    def mapped(u):
        if u <= 0.0:
            return 0.0
        return f(1.0 / u - 1.0) / (u * u)

    tail, _ = _quad(mapped, 0.0, u_max, rtol, limit, what)
    return head + tail


def integrate_finite(f, a: float, b: float, rtol: float = RTOL, what: str = "integral",
                     limit: int = 400) -> float:
    if b <= a:
        return 0.0
    val, _ = _quad(f, a, b, rtol, limit, what)
    return val


def gauss_slab_weights(f, dt: float, n: int, order: int = 6):
    """Product-trapezoid weights of ``f`` on the slabs [k dt, (k+1) dt], k < n.

    Returns ``(left, right)`` with ``left[k] = int f(s)(1 - theta) ds`` and
    ``right[k] = int f(s) theta ds`` where ``theta = (s - k dt)/dt``.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    theta = 0.5 * (x + 1.0)
    w = 0.5 * w * dt
    k = np.arange(n)[:, None]
    s = (k + theta[None, :]) * dt
    fs = f(s)
    left = (fs * (1.0 - theta) * w).sum(axis=1)
    right = (fs * theta * w).sum(axis=1)
    return left, right
