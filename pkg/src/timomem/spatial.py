"""Finite differences on [0, L] for phi (Dirichlet) and psi (Neumann).

Both fields live on the same nodes x_i = i dx, i = 0..N+1.  The first
derivative is the classical summation-by-parts pair: centered differences
inside, one-sided at the two end nodes, with trapezoid weights as the norm.
That pairing makes the semi-discrete energy balance exact, which is what the
dissipation checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class Grid:
    N: int
    L: float = 1.0

    def __post_init__(self):
        if self.N < 4:
            raise ValueError(f"need N >= 4 interior nodes, got {self.N}")
        if not self.L > 0:
            raise ValueError("L must be > 0")

    @property
    def dx(self) -> float:
        return self.L / (self.N + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 2) * self.dx

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights."""
        w = np.full(self.N + 2, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


@dataclass
class FieldPair:
    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        if self.phi.shape != self.psi.shape or self.phi.ndim != 1:
            raise ValueError("phi and psi must be 1-d arrays of equal length")

    def copy(self) -> "FieldPair":
        return FieldPair(self.phi.copy(), self.psi.copy())


def _check(values, grid: Grid, name="values"):
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.N + 2,):
        raise ValueError(f"{name} has shape {values.shape}, expected ({grid.N + 2},)")
    return values


def d_first(u, grid: Grid) -> np.ndarray:
    """SBP first derivative: centered inside, one-sided at x=0 and x=L."""
    u = _check(u, grid)
    dx = grid.dx
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * dx)
    out[0] = (u[1] - u[0]) / dx
    out[-1] = (u[-1] - u[-2]) / dx
    return out


def d_second_neumann(u, grid: Grid) -> np.ndarray:
    """Second derivative with zero-slope ends (mirror ghost u_{-1} = u_1)."""
    u = _check(u, grid)
    dx2 = grid.dx ** 2
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx2
    out[0] = 2 * (u[1] - u[0]) / dx2
    out[-1] = 2 * (u[-2] - u[-1]) / dx2
    return out


def shear_strain(f: FieldPair, grid: Grid) -> np.ndarray:
    """phi_x + psi at every node."""
    _check(f.phi, grid, "phi")
    _check(f.psi, grid, "psi")
    return d_first(f.phi, grid) + f.psi


def assemble_rhs(f: FieldPair, conv, beam, grid: Grid):
    """Accelerations of phi and psi given the memory convolution at each node.

    accel_phi = (kappa/rho1) d/dx (s - conv)       (zero at the clamped ends)
    accel_psi = (b/rho2) psi_xx - (kappa/rho2)(s - conv)
    """
    conv = _check(conv, grid, "conv")
    s = shear_strain(f, grid)
    v = s - conv
    acc_phi = np.zeros_like(v)
    acc_phi[1:-1] = beam.kappa / beam.rho1 * (v[2:] - v[:-2]) / (2 * grid.dx)
    acc_psi = beam.b / beam.rho2 * d_second_neumann(f.psi, grid) - beam.kappa / beam.rho2 * v
    return acc_phi, acc_psi


def l2_norm_sq(values, grid: Grid) -> float:
    values = _check(values, grid)
    return float(np.dot(grid.weights, values * values))


def inner(u, v, grid: Grid) -> float:
    return float(np.dot(grid.weights, np.asarray(u) * np.asarray(v)))


def bending_norm_sq(psi, grid: Grid) -> float:
    """||psi_x||^2 from edge differences (the norm that pairs with d_second_neumann)."""
    psi = _check(psi, grid, "psi")
    d = np.diff(psi) / grid.dx
    return float(grid.dx * np.dot(d, d))


def mean(u, grid: Grid) -> float:
    return float(np.dot(grid.weights, u)) / grid.L


# --------------------------------------------------------------------------
# sparse operators for the implicit stepper; unknowns x = [phi_1..phi_N, psi_0..psi_{N+1}]

def derivative_matrix(grid: Grid) -> sparse.csr_matrix:
    n, dx = grid.N + 2, grid.dx
    D = sparse.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5 / dx
        D[i, i + 1] = 0.5 / dx
    D[0, 0], D[0, 1] = -1 / dx, 1 / dx
    D[n - 1, n - 2], D[n - 1, n - 1] = -1 / dx, 1 / dx
    return D.tocsr()


def edge_difference_matrix(grid: Grid) -> sparse.csr_matrix:
    n, dx = grid.N + 2, grid.dx
    return sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)).tocsr() / dx


@dataclass(frozen=True)
class Operators:
    grid: Grid
    strain: sparse.csr_matrix      # x -> s at all nodes
    W: sparse.dia_matrix           # trapezoid weights
    K_shear: sparse.csr_matrix     # strain^T W strain
    K_bend: sparse.csr_matrix      # psi_x energy form
    n_phi: int

    def split(self, x):
        N = self.grid.N
        phi = np.zeros(N + 2)
        phi[1:-1] = x[:N]
        return phi, x[N:].copy()

    def pack(self, phi, psi):
        return np.concatenate([np.asarray(phi)[1:-1], np.asarray(psi)])


def build_operators(grid: Grid) -> Operators:
    N = grid.N
    n = N + 2
    D = derivative_matrix(grid)
    embed = sparse.lil_matrix((n, N))
    for i in range(N):
        embed[i + 1, i] = 1.0
    strain = sparse.hstack([D @ embed.tocsr(), sparse.identity(n)]).tocsr()
    W = sparse.diags(grid.weights)
    K_shear = (strain.T @ W @ strain).tocsr()
    De = edge_difference_matrix(grid)
    bend_psi = grid.dx * (De.T @ De)
    K_bend = sparse.block_diag([sparse.csr_matrix((N, N)), bend_psi]).tocsr()
    return Operators(grid=grid, strain=strain, W=W, K_shear=K_shear, K_bend=K_bend, n_phi=N)
