"""Relaxation kernels and the admissibility checks (A1)/(A2).

A kernel ``g`` enters the beam model through its values, its derivative and
its tail ``h(t) = int_t^inf g``.  Four variants are provided; all are frozen
dataclasses sharing the same small evaluation interface::

    k = PowerLawKernel(a=0.99, nu=2.0)
    g, dg = eval_kernel(k, 1.0)          # (0.2475, -0.2475)
    mass, ell = kernel_mass(k)           # (0.99, 0.01)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .errors import (
    FitError,
    InadmissibleHistoryError,
    InadmissibleKernelError,
    KernelRangeError,
    NumericalError,
)
from .quadrature import RTOL, integrate_0_inf

T0_MARGIN = 1e-6
T0_RTOL = 1e-10
A2_RTOL = 1e-12


class Kernel:
    """Common interface. Subclasses implement ``value``, ``deriv``, ``mass``, ``tail``."""

    kind = "abstract"

    @property
    def char_time(self) -> float:
        return 1.0

    def cumulative(self, t):
        """int_0^t g(s) ds."""
        return self.mass() - self.tail(t)

    # used by integrators that may look past a finite table
    def value_ext(self, t):
        return self.value(t)

    def deriv_ext(self, t):
        return self.deriv(t)


@dataclass(frozen=True)
class PowerLawKernel(Kernel):
    """g(t) = a (1+t)^(-nu)."""

    a: float
    nu: float
    kind = "power_law"

    def __post_init__(self):
        if not self.a > 0:
            raise InadmissibleKernelError(f"power-law amplitude must be > 0, got {self.a}")
        if not self.nu > 0:
            raise InadmissibleKernelError(f"power-law exponent must be > 0, got {self.nu}")

    def value(self, t):
        return self.a * (1.0 + np.asarray(t, dtype=float)) ** (-self.nu)

    def deriv(self, t):
        return -self.a * self.nu * (1.0 + np.asarray(t, dtype=float)) ** (-self.nu - 1.0)

    def mass(self) -> float:
        if self.nu <= 1.0:
            raise InadmissibleKernelError(
                f"power-law kernel with nu={self.nu} <= 1 has infinite mass"
            )
        return self.a / (self.nu - 1.0)

    def tail(self, t):
        return self.mass() * (1.0 + np.asarray(t, dtype=float)) ** (1.0 - self.nu)


@dataclass(frozen=True)
class ExponentialKernel(Kernel):
    """g(t) = a exp(-lam t)."""

    a: float
    lam: float
    kind = "exponential"

    def __post_init__(self):
        if not self.a > 0:
            raise InadmissibleKernelError(f"exponential amplitude must be > 0, got {self.a}")
        if not self.lam > 0:
            raise InadmissibleKernelError(f"exponential rate must be > 0, got {self.lam}")

    @property
    def char_time(self) -> float:
        return 1.0 / self.lam

    def value(self, t):
        return self.a * np.exp(-self.lam * np.asarray(t, dtype=float))

    def deriv(self, t):
        return -self.lam * self.value(t)

    def mass(self) -> float:
        return self.a / self.lam

    def tail(self, t):
        return self.mass() * np.exp(-self.lam * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class PronyKernel(Kernel):
    """g(t) = sum_j a_j exp(-b_j t).

    ``terms`` is a sequence of ``(a_j, b_j)`` pairs.
    """

    terms: tuple
    kind = "prony"

    def __post_init__(self):
        terms = tuple((float(a), float(b)) for a, b in self.terms)
        if not terms:
            raise InadmissibleKernelError("Prony kernel needs at least one term")
        for a, b in terms:
            if a < 0 or not b > 0:
                raise InadmissibleKernelError(f"Prony term ({a}, {b}) needs a >= 0, b > 0")
        if sum(a for a, _ in terms) <= 0:
            raise InadmissibleKernelError("Prony kernel has g(0) = 0")
        object.__setattr__(self, "terms", terms)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms])

    @property
    def rates(self) -> np.ndarray:
        return np.array([b for _, b in self.terms])

    @property
    def char_time(self) -> float:
        # initial relaxation time g(0)/|g'(0)|; slow terms are left to the
        # tail mapping of the integrators
        a, b = self.amplitudes, self.rates
        return float(a.sum() / (a * b).sum())

    def _sum(self, coef, t):
        t = np.asarray(t, dtype=float)
        e = np.exp(-np.multiply.outer(t, self.rates))
        return e @ coef

    def value(self, t):
        return self._sum(self.amplitudes, t)

    def deriv(self, t):
        return self._sum(-self.amplitudes * self.rates, t)

    def mass(self) -> float:
        return float(np.sum(self.amplitudes / self.rates))

    def tail(self, t):
        return self._sum(self.amplitudes / self.rates, t)


@dataclass(frozen=True)
class TabulatedKernel(Kernel):
    """Kernel sampled on a strictly increasing grid starting at t=0.

    Values between samples are linearly interpolated; the derivative uses
    second-order differences on the table.  Beyond the last sample the
    kernel is continued by a power law fitted to the final decade, which is
    what gives the table a finite total mass.
    """

    t: np.ndarray
    g: np.ndarray
    kind = "table"
    _dg: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _p: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 3:
            raise InadmissibleKernelError("table needs matching 1-d t and g with >= 3 rows")
        if t[0] != 0.0:
            raise InadmissibleKernelError("table must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise InadmissibleKernelError("table times must be strictly increasing")
        if not g[0] > 0 or np.any(g < 0):
            raise InadmissibleKernelError("table needs g(0) > 0 and g >= 0")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "_dg", np.gradient(g, t, edge_order=2))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (g[1:] + g[:-1]))])
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_p", self._fit_tail_exponent())

    def _fit_tail_exponent(self) -> float:
        t_end = self.t[-1]
        sel = (self.t >= t_end / 10.0) & (self.t > 0) & (self.g > 0)
        if sel.sum() < 2:
            raise InadmissibleKernelError("table too short to model the tail (need >= 2 points in the last decade)")
        slope = np.polyfit(np.log(self.t[sel]), np.log(self.g[sel]), 1)[0]
        p = -slope
        if p <= 1.0:
            raise InadmissibleKernelError(
                f"tail of tabulated kernel decays like t^-{p:.3g}; infinite mass"
            )
        return float(p)

    @property
    def tail_exponent(self) -> float:
        return self._p

    @property
    def char_time(self) -> float:
        return float(self.t[-1]) / 10.0

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.t[-1] * (1 + 1e-14)):
            raise KernelRangeError(f"t beyond table end {self.t[-1]}")
        return t

    def value(self, t):
        return np.interp(self._check(t), self.t, self.g)

    def deriv(self, t):
        return np.interp(self._check(t), self.t, self._dg)

    def value_ext(self, t):
        t = np.asarray(t, dtype=float)
        t_end, g_end = self.t[-1], self.g[-1]
        far = g_end * (np.maximum(t, t_end) / t_end) ** (-self._p)
        return np.where(t <= t_end, np.interp(t, self.t, self.g), far)

    def deriv_ext(self, t):
        t = np.asarray(t, dtype=float)
        t_end, g_end = self.t[-1], self.g[-1]
        tt = np.maximum(t, t_end)
        far = -self._p * g_end * (tt / t_end) ** (-self._p) / tt
        return np.where(t <= t_end, np.interp(t, self.t, self._dg), far)

    def _beyond(self) -> float:
        return self.g[-1] * self.t[-1] / (self._p - 1.0)

    def mass(self) -> float:
        return float(self._cum[-1] + self._beyond())

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        t_end = self.t[-1]
        tc = np.minimum(t, t_end)
        i = np.clip(np.searchsorted(self.t, tc, side="right") - 1, 0, len(self.t) - 2)
        gi = self.g[i]
        gt = np.interp(tc, self.t, self.g)
        inside = self._cum[i] + 0.5 * (tc - self.t[i]) * (gi + gt)
        extra = self._beyond() * (1.0 - (np.maximum(t, t_end) / t_end) ** (1.0 - self._p))
        return np.where(t <= t_end, inside, self._cum[-1] + extra)

    def tail(self, t):
        return self.mass() - self.cumulative(t)


KernelSpec = Kernel


@dataclass(frozen=True)
class BeamParams:
    rho1: float
    rho2: float
    b: float
    kappa: float
    L: float

    def __post_init__(self):
        for name in ("rho1", "rho2", "b", "kappa", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"BeamParams.{name} must be > 0")

    @property
    def speed_phi_sq(self) -> float:
        return self.kappa / self.rho1

    @property
    def speed_psi_sq(self) -> float:
        return self.b / self.rho2

    @property
    def max_speed(self) -> float:
        return math.sqrt(max(self.speed_phi_sq, self.speed_psi_sq))

    @property
    def equal_speeds(self) -> bool:
        a, b = self.speed_phi_sq, self.speed_psi_sq
        return abs(a - b) <= 1e-12 * max(a, b)


@dataclass(frozen=True)
class AdmissibilityReport:
    ell: float
    mass: float
    C0: float
    g0: float
    t0: float
    passes_A1: bool
    passes_A2: Optional[bool] = None
    A2_margin: Optional[float] = None
    reason: str = ""

    def as_lines(self) -> list[str]:
        out = []
        for key in ("passes_A1", "passes_A2", "mass", "ell", "C0", "g0", "t0", "A2_margin"):
            val = getattr(self, key)
            if isinstance(val, bool) or val is None:
                out.append(f"{key}={val}")
            else:
                out.append(f"{key}={val:.12g}")
        if self.reason:
            out.append(f"reason={self.reason}")
        return out


@dataclass(frozen=True)
class PronySpec:
    terms: tuple
    horizon: float
    fit_error: float
    rel_error: float = float("nan")

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.terms])

    @property
    def rates(self) -> np.ndarray:
        return np.array([b for _, b in self.terms])

    def kernel(self) -> PronyKernel:
        return PronyKernel(self.terms)


# --------------------------------------------------------------------------
# operations

def _nonneg_time(t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError(f"kernel time must be >= 0, got {t}")
    return t


def eval_kernel(k: Kernel, t):
    """Return ``(g(t), g'(t))``."""
    _nonneg_time(t)
    g, dg = k.value(t), k.deriv(t)
    if np.ndim(g) == 0:
        return float(g), float(dg)
    return g, dg


def kernel_mass(k: Kernel) -> tuple[float, float]:
    m = float(k.mass())
    return m, 1.0 - m


def tail_h(k: Kernel, t) -> float:
    """int_t^inf g(s) ds."""
    _nonneg_time(t)
    if np.isinf(t):
        return 0.0
    v = k.tail(t)
    return float(v) if np.ndim(v) == 0 else v


def h_rem(k: Kernel, t) -> float:
    """1 - int_0^t g(s) ds (the other 'h' used alongside t0)."""
    _nonneg_time(t)
    v = 1.0 - k.cumulative(t)
    return float(v) if np.ndim(v) == 0 else v


def threshold_C0(beam: BeamParams) -> float:
    q = 64.0 * beam.rho1 * beam.L ** 2
    return max(31.0 / 32.0, q / (q + beam.rho2))


def check_A1(k: Kernel, beam: BeamParams) -> AdmissibilityReport:
    C0 = threshold_C0(beam)
    try:
        mass, ell = kernel_mass(k)
    except InadmissibleKernelError as exc:
        return AdmissibilityReport(
            ell=-math.inf, mass=math.inf, C0=C0, g0=math.nan, t0=math.nan,
            passes_A1=False, reason=str(exc),
        )
    g_zero = float(k.value(0.0))
    if not g_zero > 0:
        reason = "g(0) <= 0"
    elif not ell > 0:
        reason = f"mass {mass:.6g} >= 1 (no residual stiffness)"
    elif not mass > C0:
        reason = f"mass {mass:.6g} <= C0 {C0:.6g}"
    else:
        reason = ""
    if reason:
        return AdmissibilityReport(ell=ell, mass=mass, C0=C0, g0=math.nan, t0=math.nan,
                                   passes_A1=False, reason=reason)

    target = C0 + min(T0_MARGIN, 0.5 * (mass - C0))
    t0 = _first_time_reaching(k, target)
    g0 = float(k.cumulative(t0))
    return AdmissibilityReport(ell=ell, mass=mass, C0=C0, g0=g0, t0=t0, passes_A1=True)


def _first_time_reaching(k: Kernel, target: float) -> float:
    f = lambda t: float(k.cumulative(t)) - target
    hi = max(k.char_time, 1.0)
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("cumulative kernel mass never reaches target")
    return float(optimize.bisect(f, 0.0, hi, xtol=1e-300, rtol=T0_RTOL, maxiter=2000))


def default_A2_grid(t_end: float, per_decade: int = 200, t_start: float = 1e-6) -> np.ndarray:
    """Geometric grid with ``per_decade`` points per decade on [t_start, t_end], plus 0."""
    t_end = max(t_end, 10 * t_start)
    n = int(math.ceil(per_decade * math.log10(t_end / t_start))) + 1
    return np.concatenate([[0.0], np.geomspace(t_start, t_end, n)])


def check_A2(k: Kernel, xi: Callable, H: Callable, grid: Optional[Sequence[float]] = None,
             report: Optional[AdmissibilityReport] = None):
    """Sampled check of g'(t) <= -xi(t) H(g(t)).

    Returns ``(passes, margin)`` with margin = min over the grid of
    ``-g'(t) - xi(t) H(g(t))``.
    """
    if grid is None:
        t0 = report.t0 if report is not None and np.isfinite(report.t0) else k.char_time
        grid = default_A2_grid(10.0 * max(t0, 1e-3))
    grid = np.asarray(grid, dtype=float)
    xs = np.array([float(xi(t)) for t in grid])
    if np.any(xs <= 0) or np.any(~np.isfinite(xs)):
        raise ValueError("xi must be positive on the sample grid")
    g = np.asarray(k.value_ext(grid), dtype=float)
    dg = np.asarray(k.deriv_ext(grid), dtype=float)
    Hg = np.array([float(H(v)) for v in g])
    gap = -dg - xs * Hg
    scale = np.maximum(np.abs(dg), np.abs(xs * Hg))
    passes = bool(np.all(gap >= -A2_RTOL * scale))
    return passes, float(gap.min())


def compute_C_alpha(k: Kernel, alpha: float, rtol: float = RTOL) -> float:
    """C_alpha = int_0^inf g^2 / (alpha g - g') ds."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")

    def integrand(s):
        g = float(k.value_ext(s))
        den = alpha * g - float(k.deriv_ext(s))
        if den <= 0.0:
            return 0.0
        return g * g / den

    return integrate_0_inf(integrand, split=10.0 * k.char_time, rtol=rtol,
                           what=f"C_alpha(alpha={alpha})")


def _check_history_growth(k: Kernel, history_norm: Callable, t: float):
    probes = [1e5, 1e7, 1e9]
    vals = []
    for s in probes:
        hn = float(history_norm(s))
        if hn < 0 or not np.isfinite(hn):
            raise InadmissibleHistoryError(f"history norm at age {s} is {hn}")
        vals.append(float(k.value_ext(t + s)) * (1.0 + hn) * s)
    if vals[0] > 0 and vals[2] >= vals[1] >= vals[0] * (1 - 1e-12):
        raise InadmissibleHistoryError(
            "history norm grows too fast against the kernel: h0 integral diverges"
        )


def h0(k: Kernel, history_norm: Optional[Callable], t: float) -> float:
    """h0(t) = int_0^inf g(t+s) (1 + ||history(s)||^2) ds."""
    _nonneg_time(t)
    base = float(k.tail(t))
    if history_norm is None:
        return base
    _check_history_growth(k, history_norm, t)
    extra = integrate_0_inf(
        lambda s: float(k.value_ext(t + s)) * float(history_norm(s)),
        split=10.0 * k.char_time, what="h0",
    )
    return base + extra


# --------------------------------------------------------------------------
# Prony fitting

def _fit_once(target, t_fit, t_chk, rates, relative):
    from scipy.optimize import nnls

    A = np.exp(-np.outer(t_fit, rates))
    y = target(t_fit)
    w = 1.0 / np.maximum(y, 1e-300) if relative else np.ones_like(y)
    try:
        amps, _ = nnls(A * w[:, None], y * w, maxiter=1000 * len(rates))
    except RuntimeError as exc:   # iteration cap
        raise FitError(f"nonnegative least squares did not converge: {exc}") from exc
    approx = np.exp(-np.outer(t_chk, rates)) @ amps
    exact = target(t_chk)
    abs_err = float(np.max(np.abs(approx - exact)))
    pos = exact > 0
    rel_err = float(np.max(np.abs(approx[pos] / exact[pos] - 1.0))) if pos.any() else math.nan
    return amps, abs_err, rel_err


def fit_prony(k: Kernel, J: int, horizon: float, tol: float, *, dt_min: Optional[float] = None,
              relative: bool = False, rates: Optional[Sequence[float]] = None) -> PronySpec:
    """Fit sum_j a_j exp(-b_j t) to g on [0, horizon].

    Rates sit on a fixed log grid spanning roughly [1/horizon, 1/dt_min];
    amplitudes come from nonnegative least squares, so the approximant is
    automatically nonnegative and non-increasing.  When ``dt_min`` is not
    given, a small sweep over the grid endpoints picks the best grid.  With
    ``relative=True`` the least squares is weighted by 1/g and ``tol`` bounds
    the maximum relative error; otherwise it bounds the sup-norm error.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    if not horizon > 0:
        raise ValueError("horizon must be > 0")

    if isinstance(k, ExponentialKernel):
        return PronySpec(((k.a, k.lam),), horizon, 0.0, 0.0)
    if isinstance(k, PronyKernel) and len(k.terms) <= J:
        return PronySpec(k.terms, horizon, 0.0, 0.0)

    target = lambda t: np.asarray(k.value_ext(t), dtype=float)
    t_lo = min(1e-4, dt_min / 10.0) if dt_min else 1e-4
    t_fit = np.unique(np.concatenate([np.linspace(0.0, horizon, 3000),
                                      np.geomspace(t_lo, horizon, 3000)]))
    t_chk = np.unique(np.concatenate([np.linspace(0.0, horizon, 20001),
                                      np.geomspace(t_lo / 10.0, horizon, 5000)]))

    if rates is not None:
        grids = [np.sort(np.asarray(rates, dtype=float))]
    else:
        los = np.geomspace(0.01, 10.0, 13) / horizon
        his = [1.0 / dt_min] if dt_min else list(np.geomspace(0.3, 100.0, 13) * max(1.0, 1.0 / k.char_time))
        grids = [np.geomspace(lo, hi, J) if J > 1 else np.array([math.sqrt(lo * hi)])
                 for lo in los for hi in his if hi > lo]

    best = None
    for b in grids:
        amps, abs_err, rel_err = _fit_once(target, t_fit, t_chk, b, relative)
        score = rel_err if relative else abs_err
        if best is None or score < best[0]:
            best = (score, amps, b, abs_err, rel_err)
    score, amps, b, abs_err, rel_err = best
    keep = amps > 0
    spec = PronySpec(tuple(zip(amps[keep].tolist(), b[keep].tolist())), horizon, abs_err, rel_err)
    if score > tol:
        raise FitError(
            f"Prony fit with J={J} reached {'relative' if relative else 'sup'} error "
            f"{score:.3e} > tol {tol:.3e}", best_error=score, best=spec,
        )
    return spec


def prony_rates(horizon: float, dt: float, per_decade: int = 6, below: float = 100.0) -> np.ndarray:
    """Log-spaced rates from 1/(below*horizon) up to 1/dt, ``per_decade`` per decade."""
    lo, hi = 1.0 / (below * horizon), 1.0 / dt
    n = int(math.ceil(per_decade * math.log10(hi / lo))) + 1
    return np.geomspace(lo, hi, n)


def make_kernel(kind: str, **params) -> Kernel:
    if kind == "power_law":
        return PowerLawKernel(a=params["a"], nu=params["nu"])
    if kind == "exponential":
        return ExponentialKernel(a=params["a"], lam=params["lam"])
    if kind == "prony":
        return PronyKernel(tuple(params["terms"]))
    if kind == "table":
        return TabulatedKernel(np.asarray(params["t"]), np.asarray(params["g"]))
    raise InadmissibleKernelError(f"unknown kernel type {kind!r}")


def load_table(path) -> TabulatedKernel:
    with open(path) as fh:
        first = fh.readline()
    skip = 0 if first.strip()[:1] in "0123456789.-+" else 1
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#", skiprows=skip)
    if data.shape[1] != 2:
        raise InadmissibleKernelError(f"{path}: expected two columns (t, g)")
    return TabulatedKernel(data[:, 0], data[:, 1])
