"""Time stepping of the viscoelastic Timoshenko beam with infinite memory.

The elastic and inertial terms are advanced with Newmark average acceleration
(beta = 1/4, gamma = 1/2).  The memory convolution of the shear strain
s = phi_x + psi uses a product-trapezoid rule in time (the strain is
interpolated linearly between steps, the kernel is integrated exactly per
slab).  The newest slab couples to the unknown strain, so its weight is folded
into the implicit matrix; everything older is known.  This keeps the scheme
second order and makes the discrete energy balance track the continuous one.

Two memory paths evaluate the same rule:

* ``direct`` keeps every strain snapshot of the run and integrates the
  prescribed history (ages beyond the elapsed time) analytically;
* ``prony`` replaces g by a sum of exponentials and carries one accumulator per
  term, so a step costs the same at t = 10 and at t = 10^4.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import interpolate, sparse
from scipy.sparse.linalg import splu

from . import kernel as kmod
from .errors import InadmissibleKernelError, NumericalError
from .kernel import BeamParams, Kernel, PronyKernel, PronySpec
from .quadrature import gauss_slab_weights, integrate_0_inf
from .spatial import FieldPair, Grid, build_operators, mean

log = logging.getLogger(__name__)

CSV_HEADER = "t,E_total,E_kin_phi,E_kin_psi,E_bend,E_shear,E_mem,diss_residual,q,envelope_bound"


# --------------------------------------------------------------------------
# prescribed past

@dataclass(frozen=True)
class HistoryProfile:
    """Shear strain at negative times, as a function of the age s >= 0.

    ``power_growth`` histories are separable: the strain at age s is
    ``amplitude * (1+s)**(r/2) * s0`` where ``s0`` is the strain of the
    initial data.  ``amplitude = 1`` makes the history continuous at t = 0;
    ``r = 0`` freezes it.  ``custom`` takes a callable ``field(s, x)``
    returning the strain at the node positions ``x``.
    """

    kind: str = "zero"
    r: float = 0.0
    amplitude: float = 1.0
    field: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("zero", "power_growth", "custom"):
            raise ValueError(f"unknown history kind {self.kind!r}")
        if self.kind == "custom" and self.field is None:
            raise ValueError("custom history needs a field callable")
        if self.r < 0:
            raise ValueError("history growth exponent r must be >= 0")

    @classmethod
    def zero(cls) -> "HistoryProfile":
        return cls("zero")

    @classmethod
    def power_growth(cls, r: float = 0.0, amplitude: float = 1.0) -> "HistoryProfile":
        return cls("power_growth", r=r, amplitude=amplitude)

    @classmethod
    def custom(cls, field: Callable, r: float = 0.0) -> "HistoryProfile":
        return cls("custom", r=r, field=field)

    def norm_sq_function(self, s0_norm_sq: float, grid: Optional[Grid] = None) -> Callable:
        """s -> ||history(s)||^2."""
        if self.kind == "zero":
            return lambda s: 0.0
        if self.kind == "power_growth":
            c = self.amplitude ** 2 * s0_norm_sq
            return lambda s: c * (1.0 + s) ** self.r
        if grid is None:
            raise ValueError("custom history norms need the grid")
        w, x = grid.weights, grid.nodes
        return lambda s: float(np.dot(w, np.asarray(self.field(s, x)) ** 2))

    def bounds(self, s0_norm_sq: float, grid: Optional[Grid] = None, s_max: float = 1e6):
        """(m0, m1) with m0 (1+s)^r <= 1 + ||history(s)||^2 <= m1 (1+s)^r.

        For the separable profile the bracket is exact (m0 is an infimum);
        for custom profiles it is sampled on a log grid up to ``s_max``.
        """
        if self.kind == "power_growth":
            c = self.amplitude ** 2 * s0_norm_sq
            if self.r == 0:
                return 1.0 + c, 1.0 + c
            return c, 1.0 + c
        nf = self.norm_sq_function(s0_norm_sq, grid)
        s = np.concatenate([[0.0], np.geomspace(1e-3, s_max, 400)])
        ratio = np.array([(1.0 + nf(si)) / (1.0 + si) ** self.r for si in s])
        return float(ratio.min()), float(ratio.max())


class _SmoothIntegral:
    """t -> int_0^inf f(t + s) w(s) ds, tabulated once and interpolated.

    The table is log-spaced in 1+t and interpolated in log-log coordinates,
    which is accurate to a few 1e-9 for the smooth, monotone integrands used
    here.  ``sign`` handles integrands that are negative throughout.
    """

    def __init__(self, f, weight, t_max, char_time, points=400):
        grid = np.concatenate([[0.0], np.geomspace(1e-4, max(t_max, 1.0) * 1.01, points)])
        vals = np.array([
            integrate_0_inf(lambda s, t=t: float(f(t + s)) * weight(s),
                            split=10.0 * char_time, what="history integral")
            for t in grid
        ])
        self.sign = -1.0 if vals[0] < 0 else 1.0
        mag = self.sign * vals
        if np.any(mag <= 0):
            self._interp = interpolate.PchipInterpolator(grid, vals)
            self._log = False
        else:
            self._interp = interpolate.PchipInterpolator(np.log1p(grid), np.log(mag))
            self._log = True

    def __call__(self, t):
        if self._log:
            return self.sign * float(np.exp(self._interp(math.log1p(t))))
        return float(self._interp(t))


class _HistoryTail:
    """Integrals of g and g' against the prescribed history beyond age t.

    ``vector(which, t)`` returns int_0^inf K(t+s) hist(s) ds at the nodes and
    ``scalar(which, t)`` returns int_0^inf K(t+s) ||hist(s)||^2 ds, with K = g
    or g'.  ``weight(which, t)`` is int_t^inf K.
    """

    def __init__(self, k: Kernel, profile: HistoryProfile, s0: np.ndarray, grid: Grid, t_max: float):
        self.k, self.profile, self.grid = k, profile, grid
        self.s0 = np.asarray(s0, dtype=float)
        self.s0_norm_sq = float(np.dot(grid.weights, self.s0 ** 2))
        self.kind = profile.kind
        if self.kind == "power_growth" and profile.r > 0:
            A, r = profile.amplitude, profile.r
            self._I1 = {}
            self._I2 = {}
            for which, f in (("g", k.value_ext), ("dg", k.deriv_ext)):
                self._I1[which] = _SmoothIntegral(f, lambda s: A * (1 + s) ** (r / 2), t_max, k.char_time)
                self._I2[which] = _SmoothIntegral(f, lambda s: A * A * (1 + s) ** r, t_max, k.char_time)
        elif self.kind == "custom":
            y, w = np.polynomial.legendre.leggauss(400)
            ymax = math.log1p(1e8)
            y = 0.5 * ymax * (y + 1.0)
            self._sig = np.expm1(y)
            self._w = 0.5 * ymax * w * np.exp(y)
            x = grid.nodes
            self._fields = np.array([np.asarray(profile.field(s, x), dtype=float) for s in self._sig])
            self._norms = self._fields ** 2 @ grid.weights

    def weight(self, which: str, t: float) -> float:
        if which == "g":
            return float(self.k.tail(t))
        return -float(self.k.value_ext(t))

    def _kern(self, which, s):
        return self.k.value_ext(s) if which == "g" else self.k.deriv_ext(s)

    def vector(self, which: str, t: float) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros_like(self.s0)
        if self.kind == "power_growth":
            if self.profile.r == 0:
                return self.profile.amplitude * self.weight(which, t) * self.s0
            return self._I1[which](t) * self.s0
        kw = self._w * self._kern(which, t + self._sig)
        return kw @ self._fields

    def scalar(self, which: str, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "power_growth":
            A2 = self.profile.amplitude ** 2
            if self.profile.r == 0:
                return A2 * self.weight(which, t) * self.s0_norm_sq
            return self._I2[which](t) * self.s0_norm_sq
        kw = self._w * self._kern(which, t + self._sig)
        return float(kw @ self._norms)

    def discrepancy(self, which: str, t: float, s: np.ndarray) -> float:
        """int_t^inf K(a) ||s - hist(a - t)||^2 da."""
        if self.kind == "power_growth" and self.profile.r == 0:
            d = s - self.profile.amplitude * self.s0
            return self.weight(which, t) * float(np.dot(self.grid.weights, d * d))
        if self.kind == "zero":
            return self.weight(which, t) * float(np.dot(self.grid.weights, s * s))
        W = self.grid.weights
        return (self.weight(which, t) * float(np.dot(W, s * s))
                - 2.0 * float(np.dot(W, s * self.vector(which, t)))
                + self.scalar(which, t))

    def exp_moments(self, rates: np.ndarray):
        """int_0^inf e^{-b s} hist(s) ds (vectors) and the ||hist||^2 analogue."""
        rates = np.asarray(rates, dtype=float)
        if self.kind == "zero":
            return np.zeros((len(rates), len(self.s0))), np.zeros(len(rates))
        if self.kind == "power_growth":
            A, r = self.profile.amplitude, self.profile.r
            if r == 0:
                j1 = j2 = 1.0 / rates
            else:
                def moment(b, p):
                    return integrate_0_inf(lambda s: math.exp(-b * s) * (1 + s) ** p,
                                           split=min(10.0, 50.0 / b), what="history moment")
                j1 = np.array([moment(b, r / 2) for b in rates])
                j2 = np.array([moment(b, r) for b in rates])
            return A * np.outer(j1, self.s0), A * A * j2 * self.s0_norm_sq
        ew = self._w[None, :] * np.exp(-np.outer(rates, self._sig))
        return ew @ self._fields, ew @ self._norms


# --------------------------------------------------------------------------
# memory stores

@dataclass
class MemoryTerms:
    """Memory quantities at one time level.

    ``g_circ`` and ``dg_circ`` are (g o s) and (g' o s); ``defect`` is
    int_0^inf g(a) (s(t) - s(t-a)) da at the nodes (the Jensen left side
    integrand).
    """

    g_circ: float
    dg_circ: float
    defect: np.ndarray


class DirectHistory:
    """Every strain snapshot of the run plus the analytic prescribed past."""

    mode = "direct"

    def __init__(self, k: Kernel, tail: _HistoryTail, grid: Grid, dt: float, n_steps: int,
                 window_steps: int):
        self.k, self.tail, self.grid, self.dt = k, tail, grid, dt
        self.nw = max(1, min(window_steps, n_steps))
        self.cap = self.nw + 1
        n = grid.N + 2
        self._buf = np.zeros((2 * self.cap, n))
        self.n = -1
        self.Lg, self.Rg = gauss_slab_weights(k.value_ext, dt, self.nw)
        self.Ld, self.Rd = gauss_slab_weights(k.deriv_ext, dt, self.nw)
        # int_{t_w}^{t} g for ages that fell out of the window
        self._cum_w = float(k.cumulative(self.nw * dt))
        self.W0 = float(self.Lg[0])

    @property
    def window(self) -> float:
        return self.nw * self.dt

    @property
    def snapshot_count(self) -> int:
        return min(self.n, self.nw) + 1

    def _latest(self, m: int) -> np.ndarray:
        """[s^n, s^{n-1}, ..., s^{n-m}]."""
        p = self.n % self.cap + self.cap
        return self._buf[p - m:p + 1][::-1]

    def push(self, s: np.ndarray):
        self.n += 1
        i = self.n % self.cap
        self._buf[i] = s
        self._buf[i + self.cap] = s

    @property
    def current(self) -> np.ndarray:
        return self._latest(0)[0]

    def _coeffs(self, L, R, m):
        c = np.zeros(m + 1)
        c[:m] += L[:m]
        c[1:] += R[:m]
        return c

    def _truncated(self, t):
        return max(0.0, float(self.k.cumulative(t)) - self._cum_w) if self.n > self.nw else 0.0

    def conv(self) -> np.ndarray:
        """int_0^inf g(a) s(t - a) da at the current level."""
        t = self.n * self.dt
        m = min(self.n, self.nw)
        c = self._coeffs(self.Lg, self.Rg, m)
        out = c @ self._latest(m) + self.tail.vector("g", t)
        return out + self._truncated(t) * self.current

    def known_next(self) -> np.ndarray:
        """Convolution at the next level minus W0 * s^{n+1}."""
        t = (self.n + 1) * self.dt
        m = min(self.n + 1, self.nw)
        c = self._coeffs(self.Lg, self.Rg, m)[1:]
        out = c @ self._latest(m - 1) + self.tail.vector("g", t)
        if self.n + 1 > self.nw:
            out = out + (float(self.k.cumulative(t)) - self._cum_w) * self.current
        return out

    def terms(self) -> MemoryTerms:
        t = self.n * self.dt
        m = min(self.n, self.nw)
        s = self.current
        if m > 0:
            D = s[None, :] - self._latest(m)[1:]
            sq = (D * D) @ self.grid.weights
            cg = self._coeffs(self.Lg, self.Rg, m)[1:]
            cd = self._coeffs(self.Ld, self.Rd, m)[1:]
            g_in, dg_in, defect = float(cg @ sq), float(cd @ sq), cg @ D
        else:
            g_in = dg_in = 0.0
            defect = np.zeros_like(s)
        defect = defect + self.tail.weight("g", t) * s - self.tail.vector("g", t)
        return MemoryTerms(g_in + self.tail.discrepancy("g", t, s),
                           dg_in + self.tail.discrepancy("dg", t, s), defect)


class PronyHistory:
    """One exponentially weighted strain accumulator per Prony term."""

    mode = "prony"

    def __init__(self, spec: PronySpec, tail: _HistoryTail, grid: Grid, dt: float):
        self.spec, self.grid, self.dt = spec, grid, dt
        self.a = spec.amplitudes.copy()
        self.b = spec.rates.copy()
        x = self.b * dt
        self.decay = np.exp(-x)
        phi1 = np.where(x > 1e-4, -np.expm1(-x) / np.where(x > 0, x, 1.0), 1 - x / 2 + x * x / 6)
        phi2 = np.where(x > 1e-3, (-np.expm1(-x) - x * np.exp(-x)) / np.where(x > 0, x * x, 1.0),
                        0.5 - x / 3 + x * x / 8 - x ** 3 / 30)
        self.beta_w = dt * phi2                 # weight of the older endpoint
        self.alpha_w = dt * (phi1 - phi2)       # weight of the newer endpoint
        self.mu = 1.0 / self.b
        self.W0 = float(self.a @ self.alpha_w)
        self.w: Optional[np.ndarray] = None
        self.m: Optional[np.ndarray] = None
        self._tail = tail
        self._s = None
        self._s_norm = 0.0
        self.n = -1

    def initialize(self, s0: np.ndarray):
        self.w, self.m = self._tail.exp_moments(self.b)
        self._s = np.asarray(s0, dtype=float).copy()
        self._s_norm = float(np.dot(self.grid.weights, self._s ** 2))
        self.n = 0

    def _require(self):
        if self.w is None:
            raise NumericalError("Prony accumulators used before initialization")

    @property
    def current(self) -> np.ndarray:
        self._require()
        return self._s

    def conv(self) -> np.ndarray:
        self._require()
        return self.a @ self.w

    def known_next(self) -> np.ndarray:
        self._require()
        return (self.a * self.decay) @ self.w + float(self.a @ self.beta_w) * self._s

    def push(self, s_new: np.ndarray):
        self._require()
        nn = float(np.dot(self.grid.weights, s_new ** 2))
        self.w = (self.decay[:, None] * self.w + self.alpha_w[:, None] * s_new[None, :]
                  + self.beta_w[:, None] * self._s[None, :])
        self.m = self.decay * self.m + self.alpha_w * nn + self.beta_w * self._s_norm
        self._s = np.asarray(s_new, dtype=float).copy()
        self._s_norm = nn
        self.n += 1

    def terms(self) -> MemoryTerms:
        self._require()
        s = self._s
        cross = self.w @ (self.grid.weights * s)
        per_term = self.mu * self._s_norm - 2.0 * cross + self.m
        per_term = np.maximum(per_term, 0.0)
        defect = float(self.a @ self.mu) * s - self.a @ self.w
        return MemoryTerms(float(self.a @ per_term), float(-(self.a * self.b) @ per_term), defect)


@dataclass
class HistoryStore:
    """Memory path plus the implicit solver that depends on its newest-slab weight."""

    memory: object
    kernel: Kernel          # the kernel the memory actually integrates
    mode: str
    window: float
    prony: Optional[PronySpec] = None
    stepper: object = None


# --------------------------------------------------------------------------
# state, initial data, configuration

@dataclass
class SimState:
    fields: FieldPair
    velocities: FieldPair
    t: float = 0.0
    step_index: int = 0
    accel: Optional[np.ndarray] = None      # packed Newmark acceleration


@dataclass(frozen=True)
class InitialData:
    """Sine/cosine modes for phi, psi and their velocities.

    ``shape = "kink"`` replaces the phi sine by a tent function (a kink at
    mid-span), a deliberately non-smooth control case.
    """

    phi_amp: float = 1.0
    phi_mode: int = 1
    psi_amp: float = 0.0
    psi_mode: int = 1
    vphi_amp: float = 0.0
    vphi_mode: int = 1
    vpsi_amp: float = 0.0
    vpsi_mode: int = 1
    shape: str = "smooth"

    def __post_init__(self):
        if self.shape not in ("smooth", "kink"):
            raise ValueError(f"unknown initial shape {self.shape!r}")
        for name in ("phi_mode", "psi_mode", "vphi_mode", "vpsi_mode"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def fields(self, grid: Grid):
        x, L = grid.nodes, grid.L
        if self.shape == "kink":
            phi = self.phi_amp * (1.0 - np.abs(2.0 * x / L - 1.0))
        else:
            phi = self.phi_amp * np.sin(self.phi_mode * np.pi * x / L)
        psi = self.psi_amp * np.cos(self.psi_mode * np.pi * x / L)
        vphi = self.vphi_amp * np.sin(self.vphi_mode * np.pi * x / L)
        vpsi = self.vpsi_amp * np.cos(self.vpsi_mode * np.pi * x / L)
        phi[0] = phi[-1] = vphi[0] = vphi[-1] = 0.0
        return FieldPair(phi, psi), FieldPair(vphi, vpsi)


@dataclass(frozen=True)
class SimConfig:
    beam: BeamParams
    kernel: Kernel
    history: HistoryProfile = field(default_factory=HistoryProfile.power_growth)
    initial: InitialData = field(default_factory=InitialData)
    N: int = 64
    dt: float = 0.01
    T: float = 10.0
    memory_mode: str = "direct"
    Th: Optional[float] = None
    eps: float = 1e-8
    prony_horizon: Optional[float] = None
    prony_per_decade: int = 6
    prony_tol: float = 1e-6
    every: int = 1
    allow_inadmissible: bool = False

    def __post_init__(self):
        if self.memory_mode not in ("direct", "prony"):
            raise ValueError(f"memory mode must be direct or prony, got {self.memory_mode!r}")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.every < 1:
            raise ValueError("output stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def grid(self) -> Grid:
        return Grid(self.N, self.beam.L)


class _NewmarkSolver:
    """Average-acceleration Newmark with the newest memory slab implicit."""

    def __init__(self, beam: BeamParams, grid: Grid, W0: float, dt: float):
        self.ops = build_operators(grid)
        self.beam, self.dt = beam, dt
        ops = self.ops
        w = grid.weights
        self.Mdiag = np.concatenate([beam.rho1 * w[1:-1], beam.rho2 * w])
        self.K_el = (beam.kappa * ops.K_shear + beam.b * ops.K_bend).tocsr()
        self.K_eff = (self.K_el - beam.kappa * W0 * ops.K_shear).tocsr()
        self.force_map = (beam.kappa * ops.strain.T @ ops.W).tocsr()   # nodes -> packed force
        A = sparse.diags(self.Mdiag) + 0.25 * dt * dt * self.K_eff
        self._lu = splu(A.tocsc())

    def initial_accel(self, x, conv):
        return (self.force_map @ conv - self.K_el @ x) / self.Mdiag

    def step(self, x, v, a, known):
        dt = self.dt
        x_pred = x + dt * v + 0.25 * dt * dt * a
        v_pred = v + 0.5 * dt * a
        rhs = self.force_map @ known - self.K_eff @ x_pred
        a_new = self._lu.solve(rhs)
        x_new = x_pred + 0.25 * dt * dt * a_new
        v_new = v_pred + 0.5 * dt * a_new
        return x_new, v_new, a_new


# --------------------------------------------------------------------------
# public operations

def _strain(ops, x):
    return ops.strain @ x


def _prony_spec(cfg: SimConfig) -> PronySpec:
    k = cfg.kernel
    if isinstance(k, (kmod.ExponentialKernel, PronyKernel)):
        return kmod.fit_prony(k, 10 ** 6, 1.0, cfg.prony_tol)
    horizon = cfg.prony_horizon or max(1000.0 * cfg.T, 1e6)
    rates = kmod.prony_rates(horizon, cfg.dt, per_decade=cfg.prony_per_decade)
    spec = kmod.fit_prony(k, len(rates), horizon, math.inf, relative=True, rates=rates)
    if spec.fit_error > cfg.prony_tol:
        from .errors import FitError
        raise FitError(f"Prony fit error {spec.fit_error:.3e} exceeds {cfg.prony_tol:.1e}",
                       best_error=spec.fit_error, best=spec)
    log.info("Prony fit: %d terms, sup error %.2e, relative %.2e", len(spec.terms),
             spec.fit_error, spec.rel_error)
    return spec


def _auto_window(cfg: SimConfig, k: Kernel, hist_norm: Callable, E0: float, gamma: float) -> float:
    """Smallest time with M0 h0(Th) <= eps_mem, capped at the run length."""
    eps_mem = max(cfg.eps * E0, 1e-14)
    M0 = max(2.0, 4.0 * E0 / (cfg.beam.kappa * gamma)) if gamma > 0 else 2.0
    h0 = lambda t: kmod.h0(k, hist_norm, t)
    if M0 * h0(cfg.T) > eps_mem:
        return cfg.T
    lo, hi = 0.0, cfg.T
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if M0 * h0(mid) > eps_mem:
            lo = mid
        else:
            hi = mid
        if hi - lo < cfg.dt:
            break
    return math.ceil(hi / cfg.dt) * cfg.dt


def init(cfg: SimConfig):
    """Build the initial state and memory store; returns ``(SimState, HistoryStore)``."""
    beam, k, grid = cfg.beam, cfg.kernel, cfg.grid
    if abs(grid.L - beam.L) > 1e-12 * beam.L:
        raise ValueError("grid length differs from beam length")
    report = kmod.check_A1(k, beam)
    if not report.passes_A1:
        if not cfg.allow_inadmissible:
            raise InadmissibleKernelError(f"kernel fails A1: {report.reason}")
        log.warning("running with inadmissible kernel (%s)", report.reason)

    cfl = grid.dx / beam.max_speed
    if cfg.dt > cfl:
        warnings.warn(f"dt={cfg.dt:g} exceeds the CFL hint dx/c_max={cfl:.4g}; "
                      "the implicit scheme stays stable but waves are under-resolved",
                      RuntimeWarning, stacklevel=2)

    f, v = cfg.initial.fields(grid)
    for pair in (f, v):
        m = mean(pair.psi, grid)
        if abs(m) > 1e-12 * (1.0 + np.max(np.abs(pair.psi))):
            log.info("removing mean %.3e from initial psi data", m)
        pair.psi = pair.psi - m

    ops = build_operators(grid)
    x0 = ops.pack(f.phi, f.psi)
    s0 = _strain(ops, x0)
    hist = cfg.history
    if hist.kind == "power_growth" and abs(hist.amplitude - 1.0) > 1e-8:
        warnings.warn("history does not match the initial strain at age 0 "
                      f"(amplitude {hist.amplitude:g})", RuntimeWarning, stacklevel=2)
    if hist.kind == "custom":
        gap = np.max(np.abs(np.asarray(hist.field(0.0, grid.nodes)) - s0))
        if gap > 1e-8:
            warnings.warn(f"custom history differs from the initial strain at age 0 by {gap:.2e}",
                          RuntimeWarning, stacklevel=2)

    tail_full = _HistoryTail(k, hist, s0, grid, cfg.T)
    if cfg.memory_mode == "prony":
        spec = _prony_spec(cfg)
        pk = spec.kernel()
        tail = _HistoryTail(pk, hist, s0, grid, cfg.T) if hist.kind != "zero" else tail_full
        memory = PronyHistory(spec, tail, grid, cfg.dt)
        memory.initialize(s0)
        store = HistoryStore(memory, pk, "prony", math.inf, prony=spec)
    else:
        gamma = 1.0 - kmod.kernel_mass(k)[0]
        s0n = float(np.dot(grid.weights, s0 ** 2))
        # E(0) estimate for the truncation rule: kinetic + elastic + memory at t = 0
        E0 = _energy_estimate(beam, grid, f, v, s0, gamma, tail_full)
        Th = cfg.Th if cfg.Th is not None else _auto_window(cfg, k, hist.norm_sq_function(s0n, grid), E0, gamma)
        nwin = int(round(Th / cfg.dt))
        memory = DirectHistory(k, tail_full, grid, cfg.dt, cfg.n_steps, nwin)
        memory.push(s0)
        store = HistoryStore(memory, k, "direct", memory.window)

    store.stepper = _NewmarkSolver(beam, grid, store.memory.W0, cfg.dt)
    a0 = store.stepper.initial_accel(x0, store.memory.conv())
    state = SimState(f, v, 0.0, 0, a0)
    return state, store


def _energy_estimate(beam, grid, f, v, s0, gamma, tail):
    from .spatial import bending_norm_sq
    W = grid.weights
    E = 0.5 * beam.rho1 * float(W @ v.phi ** 2) + 0.5 * beam.rho2 * float(W @ v.psi ** 2)
    E += 0.5 * beam.b * bending_norm_sq(f.psi, grid) + 0.5 * beam.kappa * gamma * float(W @ s0 ** 2)
    E += 0.5 * beam.kappa * tail.discrepancy("g", 0.0, s0)
    return E


def convolution_direct(store: HistoryStore, k: Optional[Kernel] = None) -> np.ndarray:
    if store.mode != "direct":
        raise ValueError("store is not in direct mode")
    return store.memory.conv()


def convolution_prony(store: HistoryStore, p: Optional[PronySpec] = None, dt: Optional[float] = None) -> np.ndarray:
    if store.mode != "prony":
        raise ValueError("store is not in prony mode")
    return store.memory.conv()


def step(state: SimState, store: HistoryStore, beam: BeamParams = None, grid: Grid = None,
         k: Kernel = None, dt: float = None) -> SimState:
    """Advance one step in place and return the state.

    ``beam``, ``grid``, ``k`` and ``dt`` are accepted for symmetry with the
    other operations; the store already carries the operators built from them.
    """
    solver: _NewmarkSolver = store.stepper
    ops = solver.ops
    x = ops.pack(state.fields.phi, state.fields.psi)
    v = ops.pack(state.velocities.phi, state.velocities.psi)
    known = store.memory.known_next()
    x, v, a = solver.step(x, v, state.accel, known)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NumericalError(f"non-finite state at step {state.step_index + 1}")
    phi, psi = ops.split(x)
    vphi, vpsi = ops.split(v)
    state.fields = FieldPair(phi, psi)
    state.velocities = FieldPair(vphi, vpsi)
    state.accel = a
    state.step_index += 1
    state.t = state.step_index * solver.dt
    store.memory.push(_strain(ops, x))
    return state


@dataclass
class RunSeries:
    """Recorded output of a run.

    Per-record arrays (``t``, energy components, ``residual``, Jensen inputs)
    are sampled every ``every`` steps; ``step_E`` and ``step_dg`` hold E and
    (g' o s) at every step for the dissipation identity.
    """

    t: np.ndarray
    E_total: np.ndarray
    E_kin_phi: np.ndarray
    E_kin_psi: np.ndarray
    E_bend: np.ndarray
    E_shear: np.ndarray
    E_mem: np.ndarray
    residual: np.ndarray
    jensen_lhs: np.ndarray
    g_circ: np.ndarray
    dg_circ: np.ndarray
    step_E: np.ndarray
    step_dg: np.ndarray
    dt: float
    kappa: float
    kernel: Kernel
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)


def run(cfg: SimConfig, progress: Optional[Callable[[int, int], None]] = None) -> RunSeries:
    """Step to ``cfg.T``; deterministic for a given config."""
    from .diagnostics import energy

    state, store = init(cfg)
    grid, beam = cfg.grid, cfg.beam
    n_steps, every = cfg.n_steps, cfg.every
    n_rec = n_steps // every + 1
    rec = {name: np.zeros(n_rec) for name in
           ("t", "E_total", "E_kin_phi", "E_kin_psi", "E_bend", "E_shear", "E_mem",
            "residual", "jensen_lhs", "g_circ", "dg_circ")}
    step_E = np.zeros(n_steps + 1)
    step_dg = np.zeros(n_steps + 1)

    def record(i, eb, terms):
        rec["t"][i] = state.t
        for name in ("E_total", "E_kin_phi", "E_kin_psi", "E_bend", "E_shear", "E_mem"):
            rec[name][i] = getattr(eb, name)
        rec["residual"][i] = eb.diss_residual
        rec["jensen_lhs"][i] = float(np.dot(grid.weights, terms.defect ** 2))
        rec["g_circ"][i] = terms.g_circ
        rec["dg_circ"][i] = terms.dg_circ

    eb, terms = energy(state, store, store.kernel, beam, grid, return_terms=True)
    eb.diss_residual = math.nan
    step_E[0], step_dg[0] = eb.E_total, terms.dg_circ
    record(0, eb, terms)
    psi_scale = max(np.max(np.abs(state.fields.psi)), 1e-300)
    max_drift = 0.0
    for n in range(1, n_steps + 1):
        step(state, store)
        eb, terms = energy(state, store, store.kernel, beam, grid, return_terms=True)
        step_E[n], step_dg[n] = eb.E_total, terms.dg_circ
        eb.diss_residual = (step_E[n] - step_E[n - 1]) / cfg.dt - 0.25 * beam.kappa * (step_dg[n] + step_dg[n - 1])
        if n % every == 0:
            record(n // every, eb, terms)
            psi_scale = max(psi_scale, np.max(np.abs(state.fields.psi)))
            max_drift = max(max_drift, abs(mean(state.fields.psi, grid)))
        if progress is not None:
            progress(n, n_steps)
    gamma = 1.0 - store.kernel.mass()
    meta = dict(
        mode=store.mode, gamma=gamma, mass=store.kernel.mass(), window=store.window,
        E0=float(step_E[0]), n_steps=n_steps, N=cfg.N,
        max_step_increase=float(np.max(np.diff(step_E))) if n_steps else 0.0,
        psi_mean_drift=max_drift / psi_scale,
    )
    if store.prony is not None:
        meta.update(prony_terms=len(store.prony.terms), prony_fit_error=store.prony.fit_error,
                    prony_rel_error=store.prony.rel_error)
    return RunSeries(step_E=step_E, step_dg=step_dg, dt=cfg.dt, kappa=beam.kappa,
                     kernel=store.kernel, meta=meta, **rec)
