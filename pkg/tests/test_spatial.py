import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from timomem.kernel import BeamParams
from timomem.spatial import (
    FieldPair,
    Grid,
    assemble_rhs,
    bending_norm_sq,
    build_operators,
    d_first,
    d_second_neumann,
    inner,
    l2_norm_sq,
    mean,
    shear_strain,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def node_arrays(n):
    return arrays(np.float64, n, elements=finite)


class TestGrid:
    def test_spacing_and_weights(self):
        g = Grid(9, L=2.0)
        assert g.dx == pytest.approx(0.2)
        assert g.nodes[-1] == pytest.approx(2.0)
        assert g.weights.sum() == pytest.approx(2.0)

    def test_too_small(self):
        with pytest.raises(ValueError):
            Grid(3)

    def test_norms_of_constants(self):
        g = Grid(10)
        one = np.ones(12)
        assert l2_norm_sq(one, g) == pytest.approx(1.0)
        assert mean(3 * one, g) == pytest.approx(3.0)
        assert bending_norm_sq(one, g) == 0.0

    def test_linear_bending_norm_exact(self):
        g = Grid(10, L=1.0)
        assert bending_norm_sq(2.0 * g.nodes, g) == pytest.approx(4.0)

    def test_shape_mismatch(self):
        g = Grid(8)
        with pytest.raises(ValueError):
            d_first(np.zeros(9), g)
        with pytest.raises(ValueError):
            assemble_rhs(FieldPair(np.zeros(10), np.zeros(10)), np.zeros(9), BeamParams(1, 1, 1, 1, 1), g)
        with pytest.raises(ValueError):
            FieldPair(np.zeros(10), np.zeros(11))


class TestSummationByParts:
    @given(st.data())
    def test_first_derivative(self, data):
        N = data.draw(st.integers(4, 40))
        g = Grid(N, L=data.draw(st.floats(0.5, 3.0)))
        u = data.draw(node_arrays(N + 2))
        v = data.draw(node_arrays(N + 2))
        lhs = inner(d_first(u, g), v, g) + inner(u, d_first(v, g), g)
        rhs = u[-1] * v[-1] - u[0] * v[0]
        assert lhs == pytest.approx(rhs, abs=1e-9 * (1 + np.abs(u).max() * np.abs(v).max() / g.dx))

    @given(st.data())
    def test_neumann_second_derivative(self, data):
        N = data.draw(st.integers(4, 40))
        g = Grid(N)
        u = data.draw(node_arrays(N + 2))
        v = data.draw(node_arrays(N + 2))
        lhs = inner(d_second_neumann(u, g), v, g)
        rhs = -g.dx * np.dot(np.diff(u) / g.dx, np.diff(v) / g.dx)
        scale = 1 + np.abs(u).max() * np.abs(v).max() / g.dx
        assert lhs == pytest.approx(rhs, abs=1e-9 * scale)

    def test_operator_matrices_are_symmetric_psd(self):
        ops = build_operators(Grid(12))
        for K in (ops.K_shear, ops.K_bend):
            A = K.toarray()
            np.testing.assert_allclose(A, A.T, atol=1e-12)
            assert np.linalg.eigvalsh(A).min() > -1e-9

    def test_operator_strain_matches_function(self, rng):
        g = Grid(12)
        ops = build_operators(g)
        phi = np.concatenate([[0.0], rng.normal(size=12), [0.0]])
        psi = rng.normal(size=14)
        x = ops.pack(phi, psi)
        np.testing.assert_allclose(ops.strain @ x, shear_strain(FieldPair(phi, psi), g), atol=1e-12)
        p2, s2 = ops.split(x)
        np.testing.assert_array_equal(p2, phi)
        np.testing.assert_array_equal(s2, psi)
        assert x @ ops.K_bend @ x == pytest.approx(bending_norm_sq(psi, g))


def _errors(N):
    g = Grid(N)
    x = g.nodes
    e1 = np.max(np.abs(d_first(np.sin(np.pi * x), g) - np.pi * np.cos(np.pi * x)))
    e2 = np.max(np.abs(d_second_neumann(np.cos(np.pi * x), g) + np.pi ** 2 * np.cos(np.pi * x)))
    return e1, e2


def test_manufactured_order():
    errs = np.array([_errors(N) for N in (31, 63, 127)])
    orders = np.log2(errs[:-1] / errs[1:])
    assert np.all(orders > 1.9), orders


def test_rhs_example():
    """Static equilibrium phi = 0, psi = 0 gives zero acceleration; a pure
    constant psi with a matching memory term is also at rest."""
    g = Grid(10)
    beam = BeamParams(1, 1, 1, 1, 1)
    zero = np.zeros(12)
    a_phi, a_psi = assemble_rhs(FieldPair(zero, zero), zero, beam, g)
    assert not a_phi.any() and not a_psi.any()
    c = np.full(12, 0.3)
    a_phi, a_psi = assemble_rhs(FieldPair(zero, c), c, beam, g)
    np.testing.assert_allclose(a_phi, 0, atol=1e-14)
    np.testing.assert_allclose(a_psi, 0, atol=1e-14)


def test_rhs_values():
    g = Grid(10)
    beam = BeamParams(rho1=2.0, rho2=4.0, b=3.0, kappa=5.0, L=1.0)
    x = g.nodes
    f = FieldPair(np.sin(np.pi * x), np.cos(np.pi * x))
    conv = 0.1 * np.ones(12)
    a_phi, a_psi = assemble_rhs(f, conv, beam, g)
    s = d_first(f.phi, g) + f.psi
    assert a_phi[0] == a_phi[-1] == 0.0
    np.testing.assert_allclose(a_phi[1:-1], 2.5 * (s[2:] - s[:-2]) / (2 * g.dx))
    np.testing.assert_allclose(a_psi, 0.75 * d_second_neumann(f.psi, g) - 1.25 * (s - conv))
