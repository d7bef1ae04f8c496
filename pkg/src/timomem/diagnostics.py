"""Energy bookkeeping, dissipation and Jensen checks, decay fits.

Energy of a state::

    E = rho1/2 ||phi_t||^2 + rho2/2 ||psi_t||^2 + b/2 ||psi_x||^2
        + kappa*gamma/2 ||s||^2 + kappa/2 (g o s)

with s = phi_x + psi, gamma = 1 - int g, and
(g o s)(t) = int_0^inf g(a) ||s(t) - s(t-a)||^2 da.  Along solutions
dE/dt = (kappa/2) (g' o s) <= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envelope import EnvelopeModel, predicted_envelope
from .errors import InsufficientDataError
from .kernel import BeamParams, Kernel, compute_C_alpha
from .spatial import bending_norm_sq, l2_norm_sq, shear_strain

MIN_FIT_SAMPLES = 8


@dataclass
class EnergyBreakdown:
    E_kin_phi: float
    E_kin_psi: float
    E_bend: float
    E_shear: float
    E_mem: float
    diss_residual: float = math.nan

    @property
    def E_total(self) -> float:
        return self.E_kin_phi + self.E_kin_psi + self.E_bend + self.E_shear + self.E_mem

    def as_dict(self) -> dict:
        return dict(E_total=self.E_total, E_kin_phi=self.E_kin_phi, E_kin_psi=self.E_kin_psi,
                    E_bend=self.E_bend, E_shear=self.E_shear, E_mem=self.E_mem,
                    diss_residual=self.diss_residual)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    amplitude: float
    r2: float
    window: tuple
    log_corrected: bool
    n_samples: int


def energy(state, store, k: Kernel, beam: BeamParams, grid, return_terms: bool = False):
    """Energy components of ``state`` with the memory term taken from ``store``.

    ``k`` should be the kernel the store integrates (for the Prony path, the
    fitted sum), so that gamma and (g o s) come from the same function.
    """
    f, v = state.fields, state.velocities
    gamma = 1.0 - k.mass()
    s = shear_strain(f, grid)
    terms = store.memory.terms()
    eb = EnergyBreakdown(
        E_kin_phi=0.5 * beam.rho1 * l2_norm_sq(v.phi, grid),
        E_kin_psi=0.5 * beam.rho2 * l2_norm_sq(v.psi, grid),
        E_bend=0.5 * beam.b * bending_norm_sq(f.psi, grid),
        E_shear=0.5 * beam.kappa * gamma * l2_norm_sq(s, grid),
        E_mem=0.5 * beam.kappa * max(terms.g_circ, 0.0),
    )
    return (eb, terms) if return_terms else eb


def dissipation_residual(series, k: Optional[Kernel] = None):
    """Per-step residual of dE/dt = (kappa/2)(g' o s), midpoint in time.

    Returns ``(residuals, max_abs)``; residual_n compares the energy change over
    step n with the trapezoidal average of the dissipation rate.
    """
    E, dg = np.asarray(series.step_E), np.asarray(series.step_dg)
    if len(E) < 2:
        return np.zeros(0), 0.0
    res = np.diff(E) / series.dt - 0.25 * series.kappa * (dg[1:] + dg[:-1])
    return res, float(np.max(np.abs(res)))


def jensen_sides(series, alpha: float, C_alpha: Optional[float] = None):
    """(LHS, RHS) of ||int g (s(t)-s(t-a)) da||^2 <= C_alpha (mu o s) at recorded times.

    mu = alpha g - g', so (mu o s) = alpha (g o s) - (g' o s).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if C_alpha is None:
        C_alpha = compute_C_alpha(series.kernel, alpha)
    lhs = np.asarray(series.jensen_lhs)
    rhs = C_alpha * (alpha * np.asarray(series.g_circ) - np.asarray(series.dg_circ))
    return lhs, rhs


def jensen_check(series, store=None, k: Optional[Kernel] = None, alpha: float = 0.1) -> float:
    """min over recorded times of RHS - LHS of the Jensen-type bound."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    C = compute_C_alpha(k if k is not None else series.kernel, alpha)
    lhs, rhs = jensen_sides(series, alpha, C)
    return float(np.min(rhs - lhs)) if len(lhs) else 0.0


def _series_te(series):
    if hasattr(series, "E_total"):
        return np.asarray(series.t, dtype=float), np.asarray(series.E_total, dtype=float)
    t, E = series
    return np.asarray(t, dtype=float), np.asarray(E, dtype=float)


def fit_decay(series, window_fraction: float = 0.5, expect_log: bool = False) -> DecayFit:
    """Fit E ~ C (1+t)^-beta on the final ``window_fraction`` of the time span.

    With ``expect_log`` the model is E ~ C (1 + ln(1+t)) (1+t)^-beta; the log
    factor is a fixed offset, so beta is still a single slope.  ``series`` is a
    RunSeries or a ``(t, E)`` pair.
    """
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    t, E = _series_te(series)
    if len(t) < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_FIT_SAMPLES} samples, got {len(t)}")
    t_end = t[-1]
    t_start = t[0] + (1.0 - window_fraction) * (t_end - t[0])
    sel = t >= t_start
    # keep only the final strictly positive stretch
    idx = np.flatnonzero(sel)
    nonpos = idx[E[idx] <= 0]
    if len(nonpos):
        idx = idx[idx > nonpos[-1]]
    if len(idx) < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"only {len(idx)} positive samples in the fit window")
    tt, EE = t[idx], E[idx]
    x = np.log1p(tt)
    y = np.log(EE)
    if expect_log:
        y = y - np.log1p(np.log1p(tt))
    A = np.vstack([np.ones_like(x), x]).T
    (c0, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ np.array([c0, slope])
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return DecayFit(exponent=float(-slope), amplitude=float(math.exp(c0)), r2=float(min(max(r2, 0.0), 1.0)),
                    window=(float(tt[0]), float(tt[-1])), log_corrected=expect_log, n_samples=len(idx))


def wave_speed_check(beam: BeamParams):
    """(equal, gap) for kappa/rho1 versus b/rho2."""
    c1, c2 = beam.kappa / beam.rho1, beam.b / beam.rho2
    gap = abs(c1 - c2)
    return bool(gap <= 1e-12 * max(c1, c2)), float(gap)


@dataclass(frozen=True)
class CumulativeMonitor:
    ratio: np.ndarray
    sup: float
    t_sup: float
    late_slope: float   # slope of the ratio over the final quarter, per unit time


def cumulative_energy_monitor(series, model: EnvelopeModel) -> CumulativeMonitor:
    """rho(t) = (int_0^t E) / f(t), accumulated with the trapezoid rule."""
    t, E = _series_te(series)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (E[1:] + E[:-1]) * np.diff(t))])
    f = np.array([float(model.f(x)) for x in t])
    ratio = cum / f
    i = int(np.argmax(ratio))
    q = t >= t[0] + 0.75 * (t[-1] - t[0])
    slope = float(np.polyfit(t[q], ratio[q], 1)[0]) if q.sum() >= 2 else 0.0
    return CumulativeMonitor(ratio, float(ratio[i]), float(t[i]), slope)


def envelope_compare(series, model: EnvelopeModel, C: float):
    """(violations, max_ratio) of E(t) against C G5/(chi q)."""
    t, E = _series_te(series)
    bound = np.array([predicted_envelope(model, C, x) for x in t])
    ratio = np.divide(E, bound, out=np.where(E > 0, np.inf, 0.0), where=bound > 0)
    violations = int(np.sum(E > bound * (1.0 + 1e-6)))
    return violations, float(np.max(ratio)) if len(ratio) else 0.0
