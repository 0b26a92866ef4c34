"""Discontinuous-Galerkin discretisation on a uniform 1D grid.

Reference cell is (-1/2, 1/2) with scaled Legendre polynomials
phi_i(x) = P_i(2x), so phi_0 = 1, phi_1 = 2x, phi_2 = (12x^2 - 1)/2 and
int phi_i phi_j = delta_ij / (2i + 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import eval_legendre, roots_jacobi

from .moments import NotRealizable, flux, is_realizable, realizability_margin, source

SOURCE_DEGREE = 1  # piecewise-constant coefficients live in V_h^1 (degree 0)


@dataclass(frozen=True)
class Grid1D:
    zL: float
    zR: float
    nz: int

    def __post_init__(self):
        if not self.zR > self.zL:
            raise ValueError("grid needs zR > zL")
        if self.nz < 1:
            raise ValueError("grid needs at least one cell")

    @property
    def dz(self) -> float:
        return (self.zR - self.zL) / self.nz

    @property
    def centers(self) -> np.ndarray:
        return self.zL + (np.arange(1, self.nz + 1) - 0.5) * self.dz

    @property
    def edges(self) -> np.ndarray:
        return self.zL + np.arange(self.nz + 1) * self.dz

    def points(self, xhat) -> np.ndarray:
        """Physical coordinates (nz, n) of reference nodes in every cell."""
        return self.centers[:, None] + self.dz * np.asarray(xhat)[None, :]


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def w1_hat(self) -> float:
        return float(self.weights[0])


def gauss_lobatto(n_q: int) -> QuadratureRule:
    """n-point Gauss-Lobatto rule on (-1/2, 1/2), weights summing to one."""
    if n_q < 2:
        raise ValueError("Gauss-Lobatto needs at least two points")
    interior = roots_jacobi(n_q - 2, 1.0, 1.0)[0] if n_q > 2 else np.zeros(0)
    x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    w = 2.0 / (n_q * (n_q - 1) * eval_legendre(n_q - 1, x) ** 2)
    w[0] = w[-1] = 2.0 / (n_q * (n_q - 1))
    return QuadratureRule(nodes=0.5 * x, weights=0.5 * w)


def gauss_legendre(n: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(nodes=0.5 * x, weights=0.5 * w)


def legendre_ref(i: int, zhat):
    """Scaled Legendre polynomial phi_i on the reference cell."""
    return eval_legendre(i, 2.0 * np.asarray(zhat, dtype=float))


def legendre_matrix(zhat, k: int) -> np.ndarray:
    """Values phi_i(zhat_q) as an (n_q, k) matrix (three-term recurrence)."""
    x = 2.0 * np.atleast_1d(np.asarray(zhat, dtype=float))
    P = np.empty((x.size, k))
    P[:, 0] = 1.0
    if k > 1:
        P[:, 1] = x
    for i in range(2, k):
        P[:, i] = ((2 * i - 1) * x * P[:, i - 1] - (i - 1) * P[:, i - 2]) / i
    return P


def legendre_derivative_matrix(zhat, k: int) -> np.ndarray:
    """d phi_i / d zhat at the nodes, shape (n_q, k)."""
    x = 2.0 * np.atleast_1d(np.asarray(zhat, dtype=float))
    D = np.zeros((x.size, k))
    for i in range(1, k):
        c = np.zeros(i + 1)
        c[i] = 1.0
        D[:, i] = 2.0 * np.polynomial.legendre.legval(x, np.polynomial.legendre.legder(c))
    return D


def realizability_nodes(k: int, ks: int = SOURCE_DEGREE) -> QuadratureRule:
    """Gauss-Lobatto rule whose nodes the CFL theorem needs to be realizable."""
    return gauss_lobatto(max(2, math.ceil((k + ks + 1) / 2)))


def project(moment_function: Callable[[np.ndarray], np.ndarray], grid: Grid1D, k: int,
            n_points: Optional[int] = None) -> np.ndarray:
    """Per-cell L2 projection onto polynomials of degree k-1.

    ``moment_function`` maps an array of z values (shape (P,)) to moments (P, N+1).
    Uses Gauss-Legendre quadrature with at least k points.
    """
    rule = gauss_legendre(max(k, n_points or 20))
    z = grid.points(rule.nodes)
    vals = np.asarray(moment_function(z.ravel()), dtype=float)
    vals = vals.reshape(z.shape + (vals.shape[-1],))
    phi = legendre_matrix(rule.nodes, k)
    scale = 2 * np.arange(k) + 1.0
    return np.einsum("q,qi,cqn->cin", rule.weights, phi, vals) * scale[None, :, None]


def evaluate(U: np.ndarray, zhat) -> np.ndarray:
    """Point values (nz, n_q, N+1) of the DG polynomials at reference nodes."""
    return np.einsum("qi,cin->cqn", legendre_matrix(zhat, U.shape[1]), U)


def cell_means(U: np.ndarray) -> np.ndarray:
    return U[:, 0, :]


def total_mass(U: np.ndarray, grid: Grid1D) -> float:
    # fixed-order summation keeps this reproducible
    return float(math.fsum(U[:, 0, 0] * grid.dz))


def lf_flux(uL, uR, check: bool = True) -> np.ndarray:
    """Global Lax-Friedrichs flux with viscosity constant 1."""
    uL = np.asarray(uL, dtype=float)
    uR = np.asarray(uR, dtype=float)
    return 0.5 * (flux(uL, check=check) + flux(uR, check=check) - (uR - uL))


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class Dirichlet:
    left: np.ndarray
    right: np.ndarray


BoundarySpec = Union[Periodic, Dirichlet]


def ghost_cells(U: np.ndarray, bc: BoundarySpec) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient blocks (k, N+1) for the left and right ghost cells."""
    if isinstance(bc, Periodic):
        return U[-1].copy(), U[0].copy()
    left = np.zeros(U.shape[1:])
    right = np.zeros(U.shape[1:])
    left[0] = bc.left
    right[0] = bc.right
    return left, right


def extend(U: np.ndarray, bc: BoundarySpec) -> np.ndarray:
    gl, gr = ghost_cells(U, bc)
    return np.concatenate([gl[None], U, gr[None]], axis=0)


@dataclass
class PhysicsFields:
    """Piecewise-constant coefficients per cell."""

    sigma_a: np.ndarray
    sigma_s: np.ndarray
    q_moments: np.ndarray

    @property
    def sigma_t(self) -> np.ndarray:
        return self.sigma_a + self.sigma_s

    @classmethod
    def zero(cls, nz: int, N: int) -> "PhysicsFields":
        return cls(np.zeros(nz), np.zeros(nz), np.zeros((nz, N + 1)))


def cfl_dt(dz: float, w1_hat: float, sigma_t_max: float, safety: float = 0.95) -> float:
    """Largest admissible forward-Euler step times a safety factor."""
    a = dz * w1_hat
    if sigma_t_max <= 0:
        return safety * a
    return safety * min(1.0 / sigma_t_max, a / (1.0 + a * sigma_t_max))


@dataclass
class Discretization:
    """Precomputed reference-cell data for a DG degree k on a grid."""

    grid: Grid1D
    k: int
    realizability_rule: QuadratureRule = field(init=False)
    volume_rule: QuadratureRule = field(init=False)
    check_nodes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.realizability_rule = realizability_nodes(self.k)
        # volume/source integrals: exact for degree 2k-1
        self.volume_rule = gauss_lobatto(max(2, self.k + 1))
        self.check_nodes = np.unique(np.round(np.concatenate(
            [self.realizability_rule.nodes, self.volume_rule.nodes]), 15))
        self.phi_vol = legendre_matrix(self.volume_rule.nodes, self.k)
        self.dphi_vol = legendre_derivative_matrix(self.volume_rule.nodes, self.k)
        self.phi_check = legendre_matrix(self.check_nodes, self.k)
        # traces and volume values are read off the limiter's node set so both see identical numbers
        self.vol_index = np.searchsorted(self.check_nodes, np.round(self.volume_rule.nodes, 15))
        self.phi_right = legendre_matrix([0.5], self.k)[0]
        self.phi_left = legendre_matrix([-0.5], self.k)[0]
        self.scale = 2 * np.arange(self.k) + 1.0

    @property
    def w1_hat(self) -> float:
        return self.realizability_rule.w1_hat


def _check_nodes(vals: np.ndarray, where: str, psd_tol: float):
    ok = is_realizable(vals, psd_tol)
    if not np.all(ok):
        c, q = np.argwhere(~ok)[0]
        raise NotRealizable(
            f"non-realizable moments at {where} (cell {c}, node {q}): {vals[c, q]}, "
            f"margin {float(realizability_margin(vals[c, q])):.3e}")


def semidiscrete_rhs(U: np.ndarray, disc: Discretization, bc: BoundarySpec, physics: PhysicsFields,
                     check: bool = True, psd_tol: float = 1e-10) -> np.ndarray:
    """Time derivative of the DG coefficients (nz, k, N+1).

    Interface traces use the Lax-Friedrichs flux with ghost cells; the volume and
    source integrals use a Gauss-Lobatto rule exact for degree 2k-1.  With
    ``check`` every evaluated state is tested for realizability first.
    """
    dz = disc.grid.dz
    Ue = extend(U, bc)
    nodes = np.einsum("qi,cin->cqn", disc.phi_check, Ue)  # first node is -1/2, last is +1/2
    uL = nodes[:-1, -1]   # interface j+1/2, j = 0..nz: left state from cell j
    uR = nodes[1:, 0]
    vol = nodes[1:-1, disc.vol_index]
    if check:
        _check_nodes(np.stack([uL, uR], axis=1), "interface", psd_tol)
        _check_nodes(nodes[1:-1], "quadrature node", psd_tol)
    Fhat = lf_flux(uL, uR, check=False)  # (nz+1, N+1)
    Fvol = flux(vol, check=False)
    svol = source(vol, physics.sigma_s[:, None], physics.sigma_a[:, None], physics.q_moments[:, None, :])

    w = disc.volume_rule.weights
    surface = (Fhat[:-1, None, :] * disc.phi_left[None, :, None]
               - Fhat[1:, None, :] * disc.phi_right[None, :, None])
    volume = np.einsum("q,qi,cqn->cin", w, disc.dphi_vol, Fvol)
    src = np.einsum("q,qi,cqn->cin", w, disc.phi_vol, svol)
    return disc.scale[None, :, None] * ((surface + volume) / dz + src)
