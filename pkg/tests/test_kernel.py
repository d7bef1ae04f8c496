import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from timomem.errors import (
    FitError,
    InadmissibleHistoryError,
    InadmissibleKernelError,
    KernelRangeError,
)
from timomem.kernel import (
    BeamParams,
    ExponentialKernel,
    PowerLawKernel,
    PronyKernel,
    TabulatedKernel,
    check_A1,
    check_A2,
    compute_C_alpha,
    eval_kernel,
    fit_prony,
    h0,
    h_rem,
    kernel_mass,
    load_table,
    make_kernel,
    prony_rates,
    tail_h,
    threshold_C0,
)


def power_t0(a, nu, target):
    """Closed-form first time with int_0^t a(1+s)^-nu ds = target."""
    m = a / (nu - 1)
    return (1.0 - target / m) ** (1.0 / (1.0 - nu)) - 1.0


class TestEvaluation:
    def test_power_law_values(self):
        k = PowerLawKernel(0.99, 2.0)
        assert eval_kernel(k, 0.0) == pytest.approx((0.99, -1.98), rel=1e-15)
        assert eval_kernel(k, 1.0) == pytest.approx((0.2475, -0.2475), rel=1e-15)

    def test_mass_and_tail(self):
        k = PowerLawKernel(0.99, 2.0)
        mass, ell = kernel_mass(k)
        assert mass == pytest.approx(0.99, rel=1e-15)
        assert ell == pytest.approx(0.01, rel=1e-12)
        assert tail_h(k, 9.0) == pytest.approx(0.099, rel=1e-14)
        assert tail_h(k, math.inf) == 0.0
        assert h_rem(k, 0.0) == pytest.approx(1.0)

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            eval_kernel(PowerLawKernel(0.99, 2.0), -1.0)

    def test_infinite_mass(self):
        with pytest.raises(InadmissibleKernelError):
            PowerLawKernel(0.5, 1.0).mass()

    def test_exponential(self):
        k = ExponentialKernel(0.5, 2.0)
        assert k.mass() == pytest.approx(0.25)
        assert eval_kernel(k, 0.0) == pytest.approx((0.5, -1.0))

    def test_prony_mass_and_values(self):
        k = PronyKernel(((0.3, 1.0), (0.2, 4.0)))
        assert k.mass() == pytest.approx(0.3 + 0.05)
        assert float(k.value(0.0)) == pytest.approx(0.5)
        assert float(k.deriv(0.0)) == pytest.approx(-0.3 - 0.8)
        with pytest.raises(InadmissibleKernelError):
            PronyKernel(((-0.1, 1.0),))

    def test_make_kernel(self):
        assert isinstance(make_kernel("power_law", a=1.0, nu=2.0), PowerLawKernel)
        assert isinstance(make_kernel("exponential", a=1.0, lam=2.0), ExponentialKernel)
        with pytest.raises(InadmissibleKernelError):
            make_kernel("gaussian", a=1.0)

    @given(a=st.floats(0.1, 3.0), nu=st.floats(1.2, 5.0), t=st.floats(0.0, 1e4))
    def test_cumulative_plus_tail_is_mass(self, a, nu, t):
        k = PowerLawKernel(a, nu)
        assert float(k.cumulative(t)) + tail_h(k, t) == pytest.approx(k.mass(), rel=1e-12)

    @given(t=st.floats(0.0, 1e3), dt=st.floats(1e-6, 10.0))
    def test_power_law_non_increasing(self, t, dt):
        k = PowerLawKernel(0.99, 2.0)
        assert float(k.value(t + dt)) <= float(k.value(t))
        assert float(k.deriv(t)) < 0


class TestTabulated:
    def _table(self, nu=3.0, t_end=200.0):
        t = np.concatenate([[0.0], np.geomspace(1e-3, t_end, 4000)])
        return TabulatedKernel(t, 1.94 * (1 + t) ** -nu)

    def test_matches_power_law(self):
        k = self._table()
        ref = PowerLawKernel(1.94, 3.0)
        assert k.mass() == pytest.approx(ref.mass(), rel=2e-3)
        assert float(k.value(1.0)) == pytest.approx(float(ref.value(1.0)), rel=1e-5)

    def test_range_error(self):
        with pytest.raises(KernelRangeError):
            self._table().value(500.0)

    def test_slow_tail_rejected(self):
        t = np.linspace(0, 100, 200)
        with pytest.raises(InadmissibleKernelError):
            TabulatedKernel(t, 1.0 / (1 + t) ** 0.8)

    def test_must_start_at_zero(self):
        with pytest.raises(InadmissibleKernelError):
            TabulatedKernel(np.array([1.0, 2.0, 3.0]), np.array([1.0, 0.5, 0.2]))

    def test_load_table(self, tmp_path):
        t = np.concatenate([[0.0], np.geomspace(1e-3, 100.0, 500)])
        g = 0.99 * (1 + t) ** -2
        path = tmp_path / "g.csv"
        np.savetxt(path, np.column_stack([t, g]), delimiter=",", header="t,g", comments="")
        k = load_table(path)
        assert float(k.value(1.0)) == pytest.approx(0.2475, rel=1e-4)


class TestAdmissibility:
    def test_threshold(self):
        assert threshold_C0(BeamParams(1, 1, 1, 1, 1)) == pytest.approx(64 / 65)
        assert threshold_C0(BeamParams(1, 64, 1, 1, 1)) == pytest.approx(31 / 32)

    def test_accepts_and_locates_t0(self):
        k = PowerLawKernel(0.99, 2.0)
        rep = check_A1(k, BeamParams(1, 1, 1, 1, 1))
        assert rep.passes_A1
        assert rep.mass == pytest.approx(0.99 / (2 - 1))
        assert rep.t0 == pytest.approx(power_t0(0.99, 2.0, 64 / 65 + 1e-6), rel=1e-8)
        assert rep.g0 == pytest.approx(64 / 65 + 1e-6, rel=1e-12)

    def test_rejects_low_mass(self):
        rep = check_A1(PowerLawKernel(0.97, 2.0), BeamParams(1, 1, 1, 1, 1))
        assert not rep.passes_A1
        assert rep.reason.startswith("mass 0.97 <= C0")

    def test_heavy_rotation_inertia_lowers_threshold(self):
        rep = check_A1(PowerLawKernel(0.97, 2.0), BeamParams(1, 64, 1, 1, 1))
        assert rep.passes_A1
        assert rep.C0 == pytest.approx(31 / 32)

    def test_unit_mass_fails(self):
        rep = check_A1(PowerLawKernel(1.0, 2.0), BeamParams(1, 64, 1, 1, 1))
        assert not rep.passes_A1

    def test_A2_power_law_equality(self):
        # g' = -nu a^(-1/nu) g^((nu+1)/nu) holds with equality for the power law
        for nu in (1.5, 2.0, 3.0):
            k = PowerLawKernel(0.99, nu)
            xi = nu * 0.99 ** (-1 / nu)
            ok, margin = check_A2(k, lambda t: xi, lambda s: s ** ((nu + 1) / nu))
            assert ok
            assert abs(margin) < 1e-12

    def test_A2_fails_with_large_xi(self):
        k = PowerLawKernel(0.99, 2.0)
        ok, margin = check_A2(k, lambda t: 10.0, lambda s: s ** 1.5)
        assert not ok and margin < 0

    def test_A2_rejects_nonpositive_xi(self):
        with pytest.raises(ValueError):
            check_A2(PowerLawKernel(0.99, 2.0), lambda t: 0.0, lambda s: s)


class TestCAlpha:
    def test_exponential_closed_form(self):
        k = ExponentialKernel(1.0, 1.0)
        # C_alpha = (a/lam)/(alpha + lam)
        assert compute_C_alpha(k, 1.0) == pytest.approx(0.5, rel=1e-10)
        assert compute_C_alpha(k, 0.1) == pytest.approx(1 / 1.1, rel=1e-10)

    @pytest.mark.parametrize("alpha", [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    def test_power_law_nu2_closed_form(self, alpha):
        a, nu = 0.99, 2.0
        expected = alpha * a / nu * math.log((alpha + nu) / alpha)   # alpha * C_alpha
        assert alpha * compute_C_alpha(PowerLawKernel(a, nu), alpha) == pytest.approx(expected, rel=1e-8)

    def test_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            compute_C_alpha(ExponentialKernel(1.0, 1.0), 0.0)


class TestH0:
    def test_zero_history_is_tail(self):
        k = PowerLawKernel(0.99, 2.0)
        assert h0(k, None, 3.0) == pytest.approx(float(k.tail(3.0)))
        assert h0(k, lambda s: 0.0, 3.0) == pytest.approx(float(k.tail(3.0)), rel=1e-9)

    def test_constant_history(self):
        k = PowerLawKernel(1.94, 3.0)
        assert h0(k, lambda s: 2.0, 1.0) == pytest.approx(3.0 * float(k.tail(1.0)), rel=1e-8)

    def test_diverging_history(self):
        with pytest.raises(InadmissibleHistoryError):
            h0(PowerLawKernel(0.99, 2.0), lambda s: (1 + s) ** 1.5, 0.0)


class TestProny:
    def test_exponential_is_exact(self):
        spec = fit_prony(ExponentialKernel(0.5, 2.0), 1, 10.0, 1e-12)
        assert spec.fit_error == 0.0
        assert spec.terms == ((0.5, 2.0),)

    def test_power_law_sup_fit(self):
        k = PowerLawKernel(0.99, 2.0)
        spec = fit_prony(k, 8, 100.0, 1e-4)
        assert spec.fit_error <= 1e-4
        t = np.linspace(0, 100, 1001)
        assert np.max(np.abs(spec.kernel().value(t) - k.value(t))) <= 1.5e-4

    def test_relative_fit_on_rate_grid(self):
        k = PowerLawKernel(1.94, 3.0)
        rates = prony_rates(1e4, 0.05)
        spec = fit_prony(k, len(rates), 1e4, 1e-6, relative=True, rates=rates)
        assert spec.rel_error < 1e-6
        assert spec.kernel().mass() == pytest.approx(k.mass(), rel=1e-6)

    def test_fit_error_reports_best(self):
        with pytest.raises(FitError) as info:
            fit_prony(PowerLawKernel(0.99, 2.0), 2, 100.0, 1e-10)
        assert info.value.best_error > 1e-10
        assert info.value.best is not None

    def test_fitted_kernel_is_completely_monotone(self):
        spec = fit_prony(PowerLawKernel(0.99, 2.0), 6, 50.0, 1e-3)
        assert np.all(spec.amplitudes > 0) and np.all(spec.rates > 0)
