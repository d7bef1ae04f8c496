"""Structural properties: zero-input/zero-output, frozen-history cancellation,
summation by parts, sub-homogeneity of H, Young's inequality and the
G1 o G1^{-1} identity."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from timomem.envelope import G_functions, make_H_power
from timomem.kernel import BeamParams, ExponentialKernel, PowerLawKernel
from timomem.simulate import HistoryProfile, InitialData, SimConfig, init, run, step
from timomem.spatial import Grid, d_first, d_second_neumann, inner

BEAM = BeamParams(1.0, 4.0, 4.0, 1.0, 1.0)
finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@settings(max_examples=10)
@given(N=st.integers(4, 24), mode=st.sampled_from(["direct", "prony"]),
       kernel=st.sampled_from([PowerLawKernel(1.94, 3.0), ExponentialKernel(0.98, 1.0)]))
def test_zero_input_zero_output(N, mode, kernel):
    cfg = SimConfig(beam=BEAM, kernel=kernel, N=N, dt=0.05, T=0.5, memory_mode=mode,
                    history=HistoryProfile.zero(), initial=InitialData(phi_amp=0.0))
    s = run(cfg)
    assert not np.any(s.step_E) and not np.any(s.step_dg) and not np.any(s.jensen_lhs)


@settings(max_examples=10)
@given(amp=st.floats(0.1, 3.0), mode=st.integers(1, 4),
       kernel=st.sampled_from([PowerLawKernel(1.94, 3.0), PowerLawKernel(0.99, 2.0),
                               ExponentialKernel(0.98, 1.0)]))
def test_frozen_history_cancels_shear_force(amp, mode, kernel):
    # a history frozen at s0 / mass feeds back exactly s0 through the memory
    # term, so with psi = 0 the initial accelerations vanish
    mass = kernel.mass()
    cfg = SimConfig(beam=BEAM, kernel=kernel, N=16, dt=0.02, T=0.1,
                    history=HistoryProfile.power_growth(0.0, 1.0 / mass),
                    initial=InitialData(phi_amp=amp, phi_mode=mode, psi_amp=0.0))
    with pytest.warns(RuntimeWarning):
        state, store = init(cfg)
    np.testing.assert_allclose(store.memory.conv(), store.memory.current, rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(state.accel)) <= 1e-10 * amp * mode


def test_zero_history_state_is_static():
    cfg = SimConfig(beam=BEAM, kernel=PowerLawKernel(1.94, 3.0), N=8, dt=0.05, T=1.0,
                    history=HistoryProfile.zero(), initial=InitialData(phi_amp=0.0))
    state, store = init(cfg)
    for _ in range(20):
        step(state, store)
    assert not np.any(state.fields.phi) and not np.any(state.fields.psi)


@given(st.data())
def test_summation_by_parts(data):
    N = data.draw(st.integers(4, 48))
    g = Grid(N, L=data.draw(st.floats(0.25, 4.0)))
    u = data.draw(arrays(np.float64, N + 2, elements=finite))
    v = data.draw(arrays(np.float64, N + 2, elements=finite))
    scale = 1e-10 * (1 + 25 / g.dx)
    assert abs(inner(d_first(u, g), v, g) + inner(u, d_first(v, g), g)
               - (u[-1] * v[-1] - u[0] * v[0])) <= scale
    assert abs(inner(d_second_neumann(u, g), v, g) + np.dot(np.diff(u), np.diff(v)) / g.dx) <= scale * (1 + 1 / g.dx)


@given(nu=st.floats(1.1, 8.0), s=st.floats(1e-8, 1.0), theta=st.floats(0.0, 1.0))
def test_H_sub_homogeneous(nu, s, theta):
    H = make_H_power(nu)
    assert H(theta * s) <= theta * H(s) * (1 + 1e-12)


@given(nu=st.floats(1.1, 8.0), x=st.floats(1e-6, 1.0), y=st.floats(0.0, 10.0))
def test_young_inequality(nu, x, y):
    H = make_H_power(nu)
    assert x * y <= H(x) + H.conjugate(y) + 1e-12 * (1 + x * y)


@given(y=st.floats(1e-3, 1.0))
def test_young_equality_at_derivative(y):
    # equality holds at y = H'(x)
    H = make_H_power(2.0)
    yy = float(H.deriv(y))
    assert y * yy == pytest.approx(float(H(y)) + H.conjugate(yy), rel=1e-10)


@given(nu=st.sampled_from([1.5, 2.0, 3.0]), t=st.floats(1e-3, 1.0))
def test_G1_inverse_identity(nu, t):
    G = G_functions(make_H_power(nu))
    assert G.G1_inv(G.G1(t)) == pytest.approx(t, rel=1e-10)


@settings(max_examples=15)
@given(nu=st.sampled_from([1.5, 2.0, 3.0]), t=st.floats(1e-3, 1.0))
def test_G1_inverse_identity_numeric(nu, t):
    G = G_functions(make_H_power(nu), numeric=True)
    assert G.G1_inv(G.G1(t)) == pytest.approx(t, rel=1e-8)
