"""Convex-analysis machinery behind the general decay envelope.

Builds H (and its quadratic continuation), the transforms G1..G5, the weight
q = q0/f and the class-S function chi, and evaluates the envelope

    E(t) <= C * G5(t) / (chi(t) q(t)).

For power-law H(s) = s^((nu+1)/nu) everything has a closed form; the numeric
routes (quadrature, bisection, discrete Legendre transform) are kept so the
two can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import EnvelopeError, NumericalError
from .kernel import PowerLawKernel, h0 as kernel_h0
from .quadrature import integrate_finite

BISECT_XTOL = 1e-13
LEGENDRE_GRID = 512


@dataclass(frozen=True)
class ConvexH:
    """H on (0, r], with derivative and (optional) second derivative.

    ``nu`` is set for the power family s^((nu+1)/nu); it switches on the closed
    forms in :func:`G_functions`.
    """

    eval: Callable[[float], float]
    deriv: Callable[[float], float]
    r: float = 1.0
    second: Optional[Callable[[float], float]] = None
    extended: bool = False
    nu: Optional[float] = None

    def __call__(self, s):
        return self.eval(s)

    def d2(self, s: float) -> float:
        if self.second is not None:
            return float(self.second(s))
        h = 1e-5 * max(s, 1e-8)
        return (float(self.deriv(s + h)) - float(self.deriv(s - h))) / (2 * h)

    def deriv_inverse(self, y: float, numeric: bool = False) -> float:
        """(H')^{-1}(y); closed form for the power family unless ``numeric``,
        otherwise bracketing bisection in log s."""
        if y <= 0:
            return 0.0
        if self.nu is not None and not self.extended and not numeric:
            nu = self.nu
            return (nu * y / (nu + 1.0)) ** nu
        f = lambda u: float(self.deriv(math.exp(u))) - y
        lo, hi = -30.0, 0.0
        while f(hi) < 0:
            hi += 5.0
            if hi > 700:
                raise NumericalError(f"(H')^-1({y}) not bracketed")
        while f(lo) > 0:
            lo -= 10.0
            if lo < -700:
                return 0.0
        return math.exp(optimize.brentq(f, lo, hi, xtol=BISECT_XTOL, rtol=4 * np.finfo(float).eps))

    def conjugate(self, s: float) -> float:
        """H*(s) = s (H')^{-1}(s) - H((H')^{-1}(s))."""
        x = self.deriv_inverse(s)
        return s * x - float(self.eval(x))


def make_H_power(nu: float) -> ConvexH:
    """H(s) = s^((nu+1)/nu) on (0, 1]."""
    if not nu > 1:
        raise ValueError(f"nu must be > 1, got {nu}")
    e = (nu + 1.0) / nu
    return ConvexH(
        eval=lambda s: np.asarray(s, dtype=float) ** e if np.ndim(s) else float(s) ** e,
        deriv=lambda s: e * (np.asarray(s, dtype=float) ** (1.0 / nu) if np.ndim(s) else float(s) ** (1.0 / nu)),
        second=lambda s: e / nu * float(s) ** (1.0 / nu - 1.0),
        r=1.0,
        nu=nu,
    )


def extend_H(h: ConvexH) -> ConvexH:
    """Continue H past r by the matching quadratic, keeping C^1 (and C^2 at r)."""
    r = h.r
    a, b, c = float(h.eval(r)), float(h.deriv(r)), h.d2(r)
    if not c > 0:
        raise EnvelopeError(f"H''(r) = {c} <= 0: quadratic extension would not be convex")
    const = a + 0.5 * c * r * r - b * r

    def ev(s):
        s = float(s)
        return float(h.eval(s)) if s <= r else 0.5 * c * s * s + (b - c * r) * s + const

    def dv(s):
        s = float(s)
        return float(h.deriv(s)) if s <= r else c * s + (b - c * r)

    def d2(s):
        s = float(s)
        return h.d2(s) if s <= r else c

    eps = 1e-7 * r
    jump = abs(ev(r + eps) - ev(r)) - abs(dv(r) * eps)
    if abs(ev(r) - a) > 1e-8 * max(1.0, abs(a)) or abs(dv(r + 1e-12) - b) > 1e-8 * max(1.0, abs(b)) \
            or abs(jump) > 1e-8 * max(1.0, abs(a)):
        raise NumericalError("extension is not C^1 at r")
    return ConvexH(eval=ev, deriv=dv, second=d2, r=r, extended=True, nu=h.nu)


@dataclass(frozen=True)
class GFunctions:
    G1: Callable[[float], float]
    G1_inv: Callable[[float], float]
    G2: Callable[[float], float]
    G3: Callable[[float], float]
    G4: Callable[[float], float]
    closed_form: bool = False


def power_constants(nu: float) -> dict:
    """Constants of the closed forms for H(s) = s^((nu+1)/nu)."""
    a1 = (nu + 1.0) / nu
    a2 = nu * nu / (nu + 1.0)
    a3 = (nu / (nu + 1.0)) ** nu
    a0 = (nu / (nu + 1.0)) * (a3 * (nu + 1.0)) ** (-1.0 / nu)
    return {"a0": a0, "a1": a1, "a2": a2, "a3": a3}


def _closed_G(nu: float) -> GFunctions:
    c = power_constants(nu)
    e = (nu + 1.0) / nu
    return GFunctions(
        G1=lambda t: c["a2"] * (t ** (-1.0 / nu) - 1.0),
        G1_inv=lambda y: (1.0 + y / c["a2"]) ** (-nu),
        G2=lambda t: c["a1"] * t ** e,
        G3=lambda t: c["a3"] * t ** (nu + 1.0),
        G4=lambda s: c["a0"] * s ** e,
        closed_form=True,
    )


def _numeric_G1(h: ConvexH):
    def G1(t: float) -> float:
        if t <= 0:
            return math.inf
        # s = e^u turns 1/(s H'(s)) ds into du / H'(e^u)
        f = lambda u: 1.0 / float(h.deriv(math.exp(u)))
        lt = math.log(t)
        if lt < 0:
            return integrate_finite(f, lt, 0.0, rtol=1e-12, what="G1")
        return -integrate_finite(f, 0.0, lt, rtol=1e-12, what="G1")
    return G1


def _numeric_G1_inv(G1):
    def G1_inv(y: float) -> float:
        if y == 0:
            return 1.0
        f = lambda u: G1(math.exp(u)) - y   # decreasing in u
        lo, hi = -1.0, 1.0
        while f(lo) < 0:
            lo *= 2.0
            if lo < -1400:
                raise NumericalError(f"G1 inverse at {y}: no bracket")
        while f(hi) > 0:
            hi *= 2.0
            if hi > 1400:
                raise NumericalError(f"G1 inverse at {y}: no bracket")
        u = optimize.brentq(f, lo, hi, xtol=BISECT_XTOL, rtol=4 * np.finfo(float).eps)
        return math.exp(u)
    return G1_inv


def legendre_transform(f: Callable[[float], float], s: float, lo: float = 1e-12,
                       hi: float = 1e6, n: int = LEGENDRE_GRID) -> float:
    """sup_{t>0} (s t - f(t)) for convex increasing f with f(0) = 0.

    Log grid search, widened when the maximizer sits on the edge, then a
    golden-section refinement in log t around the best grid point.
    """
    if s <= 0:
        return 0.0
    for _ in range(20):
        u = np.linspace(math.log(lo), math.log(hi), n)
        t = np.exp(u)
        vals = s * t - np.array([f(x) for x in t])
        i = int(np.argmax(vals))
        if i == n - 1:
            hi *= 1e4
            continue
        if i == 0:
            if vals[0] <= 0 and lo < 1e-250:
                return max(0.0, float(vals[0]))
            lo *= 1e-6
            continue
        obj = lambda x: -(s * math.exp(x) - f(math.exp(x)))
        res = optimize.minimize_scalar(obj, bracket=(u[i - 1], u[i], u[i + 1]), method="golden",
                                       tol=1e-12)
        return max(float(-res.fun), float(vals[i]))
    raise NumericalError(f"Legendre transform at s={s}: maximizer not bracketed")


def G_functions(h: ConvexH, numeric: bool = False) -> GFunctions:
    """G1, G1^{-1}, G2, G3 and G4 = G3* for the given H."""
    if h.nu is not None and not numeric and not h.extended:
        return _closed_G(h.nu)
    G1 = _numeric_G1(h)
    G1_inv = _numeric_G1_inv(G1)
    G2 = lambda t: t * float(h.deriv(t))
    G3 = lambda t: t * h.deriv_inverse(t, numeric=True)
    G4 = lambda s: legendre_transform(G3, s)
    return GFunctions(G1=G1, G1_inv=G1_inv, G2=G2, G3=G3, G4=G4, closed_form=False)


# --------------------------------------------------------------------------
# q, f and the envelope model

def chi_exponent(nu: float, r: float) -> float:
    """Decay exponent p of chi(t) = lambda (1+t)^-p for the power-law example."""
    if not nu > 1:
        raise ValueError("nu must be > 1")
    if not 0 <= r < nu - 1:
        raise ValueError(f"need 0 <= r < nu - 1, got r={r}, nu={nu}")
    return r + 1.0 if nu - r >= 2.0 else nu - 1.0


def cumulative_h0(h0_func: Callable[[float], float], t_max: float, n: int = 1500):
    """Monotone interpolant of f(t) = 1 + int_0^t h0 on [0, t_max]."""
    t = np.concatenate([[0.0], np.geomspace(1e-4, max(t_max, 1e-3), n)])
    vals = np.array([h0_func(x) for x in t])
    # trapezoid in log time is far more accurate for slowly decaying h0
    cum = np.concatenate([[0.0], integrate.cumulative_trapezoid(vals, t)])
    f_vals = 1.0 + cum
    return interpolate.PchipInterpolator(t, f_vals, extrapolate=True)


@dataclass(frozen=True)
class EnvelopeModel:
    H: ConvexH
    xi: Callable[[float], float]
    xi_integral: Callable[[float], float]
    c1: float
    q0: float
    f: Callable[[float], float]
    h0: Callable[[float], float]
    G: GFunctions
    chi_lambda: float = 1.0
    chi_p: float = 0.0
    c2: float = 1.0
    c_over_d: float = 1.0
    dif_ok: bool = False
    dif_margin: float = math.nan
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0 < self.q0 < 1:
            raise EnvelopeError(f"q0 must lie in (0, 1), got {self.q0}")
        if not 0 < self.chi_lambda <= 1:
            raise EnvelopeError(f"chi lambda must lie in (0, 1], got {self.chi_lambda}")
        if self.chi_p < 0:
            raise EnvelopeError("chi exponent must be >= 0")

    def chi(self, t: float) -> float:
        return self.chi_lambda * (1.0 + t) ** (-self.chi_p)

    def chi_deriv(self, t: float) -> float:
        return -self.chi_p * self.chi_lambda * (1.0 + t) ** (-self.chi_p - 1.0)

    def with_chi(self, lam: float, p: float) -> "EnvelopeModel":
        return replace(self, chi_lambda=lam, chi_p=p, dif_ok=False, dif_margin=math.nan)


def G5(model: EnvelopeModel, t: float) -> float:
    return float(model.G.G1_inv(model.c1 * model.xi_integral(t)))


def weight_q(model: EnvelopeModel, t: float) -> float:
    return model.q0 / float(model.f(t))


def check_dif(model: EnvelopeModel, c2: Optional[float] = None, c_over_d: Optional[float] = None,
              grid=None):
    """Sampled class-S condition. Returns ``(ok, worst_margin)``.

    The margin is min over the grid of RHS - LHS.
    """
    c2 = model.c2 if c2 is None else c2
    cd = model.c_over_d if c_over_d is None else c_over_d
    if grid is None:
        grid = default_dif_grid(model.meta.get("horizon", 1e3))
    G = model.G
    worst = math.inf
    for t in np.asarray(grid, dtype=float):
        lhs = c2 * G.G4(cd * weight_q(model, t) * model.h0(t))
        g5 = G5(model, t)
        chi = model.chi(t)
        rhs = model.c1 * (G.G2(g5 / chi) - G.G2(g5) / chi)
        worst = min(worst, rhs - lhs)
    return bool(worst >= 0.0), float(worst)


def default_dif_grid(horizon: float, n: int = 200) -> np.ndarray:
    return np.concatenate([[0.0], np.geomspace(1e-3, max(horizon, 1e-2), n)])


def select_chi(model: EnvelopeModel, nu: float, r: float, grid=None, max_halvings: int = 60):
    """Largest lambda in {1, 1/2, 1/4, ...} passing :func:`check_dif`; returns ``(lambda, p)``."""
    p = chi_exponent(nu, r)
    lam = 1.0
    for _ in range(max_halvings + 1):
        ok, _ = check_dif(model.with_chi(lam, p), grid=grid)
        if ok:
            return lam, p
        lam *= 0.5
    raise EnvelopeError(f"no lambda >= 2^-{max_halvings} satisfies the class-S condition")


def validate(model: EnvelopeModel, grid=None) -> EnvelopeModel:
    ok, margin = check_dif(model, grid=grid)
    return replace(model, dif_ok=ok, dif_margin=margin)


def calibrate_C(model: EnvelopeModel, E0: float) -> float:
    return E0 * model.chi(0.0) * weight_q(model, 0.0) / G5(model, 0.0)


def predicted_envelope(model: EnvelopeModel, C: float, t: float) -> float:
    if not model.dif_ok:
        raise EnvelopeError("envelope requested before the class-S condition was verified")
    return C * G5(model, t) / (model.chi(t) * weight_q(model, t))


def power_law_model(kernel: PowerLawKernel, *, r: float = 0.0,
                    history_norm: Optional[Callable[[float], float]] = None,
                    history_const: Optional[float] = None,
                    c1: float = 1.0, c2: float = 1.0, c_over_d: float = 1.0, q0: float = 0.5,
                    horizon: float = 1e3, lam: Optional[float] = None,
                    grid=None) -> EnvelopeModel:
    """Envelope model for g = a(1+t)^-nu with H(s) = s^((nu+1)/nu), xi = nu a^(-1/nu).

    The history enters through h0: pass ``history_norm`` (s -> ||history(s)||^2)
    or, for a history of constant norm, ``history_const``.

    With ``lam=None`` the chi amplitude is picked by :func:`select_chi`;
    the returned model has already been through :func:`check_dif`.
    """
    nu, a = kernel.nu, kernel.a
    xi_bar = nu * a ** (-1.0 / nu)
    H = make_H_power(nu)
    if history_norm is None:
        # constant history norm c: h0 = (1 + c) * tail, f in closed form
        scale = 1.0 + (history_const or 0.0)
        h0_func = lambda t: scale * float(kernel.tail(t))
        f_interp = lambda t: 1.0 + scale * kernel.mass() * _int_tail_power(kernel, t)
    else:
        h0_func = lambda t: kernel_h0(kernel, history_norm, t)
        f_interp = cumulative_h0(h0_func, 2.0 * horizon)
    model = EnvelopeModel(
        H=H, xi=lambda t: xi_bar, xi_integral=lambda t: xi_bar * t, c1=c1, q0=q0,
        f=f_interp, h0=h0_func, G=G_functions(H), c2=c2, c_over_d=c_over_d,
        meta={"nu": nu, "r": r, "a": a, "xi_bar": xi_bar, "horizon": horizon},
    )
    p = chi_exponent(nu, r)
    if grid is None:
        grid = default_dif_grid(horizon)
    if lam is None:
        lam, p = select_chi(model, nu, r, grid=grid)
    return validate(model.with_chi(lam, p), grid=grid)


def _int_tail_power(kernel: PowerLawKernel, t: float) -> float:
    """int_0^t (1+s)^(1-nu) ds, i.e. (int_0^t tail)/mass."""
    nu = kernel.nu
    if abs(nu - 2.0) < 1e-14:
        return math.log1p(t)
    return ((1.0 + t) ** (2.0 - nu) - 1.0) / (2.0 - nu)


def envelope_table(model: EnvelopeModel, C: float, times) -> np.ndarray:
    """Rows (t, G5, chi, q, bound)."""
    rows = []
    for t in times:
        rows.append((t, G5(model, t), model.chi(t), weight_q(model, t), predicted_envelope(model, C, t)))
    return np.array(rows)
