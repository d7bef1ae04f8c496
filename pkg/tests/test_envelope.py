import numpy as np
import pytest
from hypothesis import given, strategies as st

from timomem.envelope import (
    G5,
    G_functions,
    calibrate_C,
    check_dif,
    chi_exponent,
    envelope_table,
    extend_H,
    legendre_transform,
    make_H_power,
    power_constants,
    power_law_model,
    predicted_envelope,
    weight_q,
)
from timomem.errors import EnvelopeError
from timomem.kernel import PowerLawKernel

NUS = (1.5, 2.0, 3.0)
LOG_GRID = np.geomspace(1e-3, 1.0, 50)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


@pytest.fixture(scope="module", params=NUS)
def g_pair(request):
    H = make_H_power(request.param)
    return request.param, G_functions(H), G_functions(H, numeric=True)


class TestGFunctions:
    def test_closed_form_flag(self, g_pair):
        _, closed, numeric = g_pair
        assert closed.closed_form and not numeric.closed_form

    def test_G1_matches_formula(self, g_pair):
        nu, closed, numeric = g_pair
        for t in LOG_GRID:
            expected = nu * nu / (nu + 1) * (t ** (-1 / nu) - 1)
            assert closed.G1(t) == pytest.approx(expected, rel=1e-14, abs=1e-15)
            assert numeric.G1(t) == pytest.approx(expected, rel=1e-6, abs=1e-12)

    @pytest.mark.parametrize("name", ["G2", "G3", "G4"])
    def test_numeric_matches_closed(self, g_pair, name):
        _, closed, numeric = g_pair
        for t in LOG_GRID[::5]:
            assert rel(getattr(numeric, name)(t), getattr(closed, name)(t)) < 1e-6

    def test_G1_inverse_roundtrip(self, g_pair):
        _, closed, numeric = g_pair
        for t in LOG_GRID[::7]:
            assert numeric.G1_inv(numeric.G1(t)) == pytest.approx(t, rel=1e-9)
            assert closed.G1_inv(closed.G1(t)) == pytest.approx(t, rel=1e-12)

    def test_G1_vanishes_at_one(self, g_pair):
        _, closed, numeric = g_pair
        assert closed.G1(1.0) == 0.0
        assert numeric.G1(1.0) == 0.0
        assert closed.G1_inv(0.0) == 1.0

    def test_constants(self):
        c = power_constants(2.0)
        assert c["a1"] == pytest.approx(1.5)
        assert c["a2"] == pytest.approx(4 / 3)
        assert c["a3"] == pytest.approx(4 / 9)


class TestH:
    def test_power_H(self):
        H = make_H_power(2.0)
        assert H(0.25) == pytest.approx(0.125)
        assert H.deriv(0.25) == pytest.approx(0.75)
        assert H.deriv_inverse(0.75) == pytest.approx(0.25)
        assert H.deriv_inverse(0.75, numeric=True) == pytest.approx(0.25, rel=1e-12)

    def test_rejects_small_nu(self):
        with pytest.raises(ValueError):
            make_H_power(1.0)

    def test_extension_is_C1_and_convex(self):
        H = extend_H(make_H_power(3.0))
        r = H.r
        eps = 1e-7
        assert H(r + eps) == pytest.approx(H(r), abs=1e-6)
        assert H.deriv(r + eps) == pytest.approx(H.deriv(r), rel=1e-6)
        xs = np.linspace(0.1, 3.0, 30)
        d = [H.deriv(x) for x in xs]
        assert np.all(np.diff(d) > 0)

    @given(nu=st.floats(1.2, 6.0), s=st.floats(1e-6, 1.0), theta=st.floats(0.0, 1.0))
    def test_sub_homogeneity(self, nu, s, theta):
        # H(theta s) <= theta H(s) for theta in [0, 1]
        H = make_H_power(nu)
        assert H(theta * s) <= theta * H(s) * (1 + 1e-12) + 1e-300

    @given(nu=st.floats(1.2, 6.0), x=st.floats(1e-4, 1.0), y=st.floats(0.0, 5.0))
    def test_young_inequality(self, nu, x, y):
        # x*y <= H(x) + H*(y)
        H = make_H_power(nu)
        assert x * y <= H(x) + H.conjugate(y) + 1e-12 * (1 + x * y)

    def test_legendre_matches_conjugate(self):
        H = make_H_power(2.0)
        for s in (0.3, 1.0, 1.4):
            assert legendre_transform(lambda x: float(H(x)), s) == pytest.approx(H.conjugate(s), rel=1e-8)


@pytest.fixture(scope="module")
def model():
    return power_law_model(PowerLawKernel(1.94, 3.0), c1=0.1, q0=0.2, horizon=2000.0)


class TestModel:
    def test_dif_verified(self, model):
        assert model.dif_ok and model.dif_margin >= 0
        assert model.chi_p == chi_exponent(3.0, 0.0) == 1.0

    def test_G5_closed_form(self, model):
        nu, xi_bar = 3.0, 3.0 * 1.94 ** (-1 / 3)
        a4 = 0.1 * xi_bar / power_constants(nu)["a2"]
        for t in np.geomspace(1e-2, 2000.0, 50):
            assert rel(G5(model, t), (1 + a4 * t) ** -nu) < 1e-6

    def test_calibration_matches_E0(self, model):
        C = calibrate_C(model, 0.0123)
        assert predicted_envelope(model, C, 0.0) == pytest.approx(0.0123, rel=1e-12)

    def test_envelope_decays_like_power(self, model):
        C = calibrate_C(model, 1.0)
        ratio = predicted_envelope(model, C, 2000.0) / predicted_envelope(model, C, 1000.0)
        # G5 ~ t^-3, chi ~ t^-1 and q ~ const: bound ~ t^-2
        assert ratio == pytest.approx(0.25, rel=0.05)

    def test_table_columns(self, model):
        tab = envelope_table(model, 1.0, [0.0, 1.0, 10.0])
        assert tab.shape == (3, 5)
        t, g5, chi, q, bound = tab.T
        np.testing.assert_allclose(bound, g5 / (chi * q), rtol=1e-14)

    def test_unverified_model_refuses(self, model):
        bad = model.with_chi(1.0, 1.0)
        assert not bad.dif_ok
        with pytest.raises(EnvelopeError):
            predicted_envelope(bad, 1.0, 1.0)

    def test_large_c2_breaks_condition(self, model):
        ok, margin = check_dif(model, c2=1e8)
        assert not ok and margin < 0

    def test_invalid_q0(self, model):
        from dataclasses import replace
        with pytest.raises(EnvelopeError):
            replace(model, q0=1.5)

    def test_weight_q_decreasing(self, model):
        assert weight_q(model, 0.0) == pytest.approx(0.2)
        assert weight_q(model, 100.0) < weight_q(model, 1.0)

    def test_chi_exponent_cases(self):
        assert chi_exponent(3.0, 0.0) == 1.0
        assert chi_exponent(2.0, 0.0) == 1.0
        assert chi_exponent(1.5, 0.0) == 0.5
        with pytest.raises(ValueError):
            chi_exponent(2.0, 1.5)

    def test_history_norm_path_matches_constant(self):
        k = PowerLawKernel(1.94, 3.0)
        m1 = power_law_model(k, history_const=1.0, c1=0.1, q0=0.2, horizon=100.0, lam=1.0)
        m2 = power_law_model(k, history_norm=lambda s: 1.0, c1=0.1, q0=0.2, horizon=100.0, lam=1.0)
        for t in (0.0, 1.0, 50.0):
            assert float(m2.f(t)) == pytest.approx(float(m1.f(t)), rel=1e-4)
