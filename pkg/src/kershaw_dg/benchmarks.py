"""Benchmark problems, analytic references and error/convergence metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dg import Dirichlet, Grid1D, Periodic, PhysicsFields, gauss_lobatto, legendre_matrix, project
from .dg import realizability_nodes
from .limiters import limit_cells
from .moments import basis_eval, isotropic_moments

F_VAC = 0.5e-8
PLANE_SOURCE_WIDTH = 3.2e-4
BEAM_SHARPNESS = 1e5


@dataclass
class ProblemSpec:
    name: str
    N: int
    grid: Grid1D
    tf: float
    physics: PhysicsFields
    bc: object
    initial: Callable[[np.ndarray], np.ndarray]
    tvb_M: float = math.inf
    signed_density: bool = False
    exact_u0: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    meta: dict = field(default_factory=dict)


@dataclass
class ErrorReport:
    L1: float
    Linf: float
    order_L1: Optional[float] = None
    order_Linf: Optional[float] = None


def default_tvb_M(k: int) -> float:
    return 5.0 if k >= 7 else 20.0


# --- manufactured solution --------------------------------------------------------

def _wrap(z):
    return (np.asarray(z) + np.pi) % (2 * np.pi) - np.pi


def manufactured_exact(t: float, z, N: int = 1) -> np.ndarray:
    """Moments of sin(z - t) delta(mu - 1): every component equals sin(z - t)."""
    f = np.sin(_wrap(np.asarray(z, dtype=float) - t))
    return np.repeat(f[..., None], N + 1, axis=-1)


def manufactured(nz: int, N: int = 1, k: int = 2) -> ProblemSpec:
    grid = Grid1D(-np.pi, np.pi, nz)
    return ProblemSpec(
        name="manufactured", N=N, grid=grid, tf=0.2 * np.pi,
        physics=PhysicsFields.zero(nz, N), bc=Periodic(),
        initial=lambda z: manufactured_exact(0.0, z, N),
        tvb_M=default_tvb_M(k), signed_density=True,
        exact_u0=lambda t, z: np.sin(_wrap(z - t)),
    )


# --- plane source ------------------------------------------------------------------

def plane_source_ic(z, N: int = 1, width: float = PLANE_SOURCE_WIDTH, f_vac: float = F_VAC) -> np.ndarray:
    """Isotropic moments 2 (f_vac + g(z)) n_iso of the smoothed Dirac initial density."""
    z = np.asarray(z, dtype=float)
    g = np.exp(-z**2 / (4 * width)) / (2 * np.sqrt(np.pi * width))
    return 2.0 * (f_vac + g)[..., None] * isotropic_moments(N)


def plane_source(nz: int = 100, N: int = 1) -> ProblemSpec:
    grid = Grid1D(-1.2, 1.2, nz)
    vac = 2 * F_VAC * isotropic_moments(N)
    physics = PhysicsFields(np.zeros(nz), np.ones(nz), np.zeros((nz, N + 1)))
    return ProblemSpec(
        name="plane-source", N=N, grid=grid, tf=1.0, physics=physics,
        bc=Dirichlet(vac, vac), initial=lambda z: plane_source_ic(z, N),
        tvb_M=math.inf,
    )


# --- source beam ---------------------------------------------------------------------

def source_beam_inflow_moments(N: int, a: float = BEAM_SHARPNESS) -> np.ndarray:
    """Normalised moments of exp(-a (mu - 1)^2) on [-1, 1].

    With m_j = int mu^j G, integration by parts gives
    m_j = m_{j-1} + (j-1)/(2a) m_{j-2} - (1 - (-1)^(j-1) e^{-4a}) / (2a).
    """
    m = np.empty(N + 1)
    e4 = math.exp(-4 * a)
    m[0] = 0.5 * math.sqrt(math.pi / a) * math.erf(2 * math.sqrt(a))
    if N >= 1:
        m[1] = m[0] - (1 - e4) / (2 * a)
    for j in range(2, N + 1):
        m[j] = m[j - 1] + (j - 1) / (2 * a) * m[j - 2] - (1 - (-1) ** (j - 1) * e4) / (2 * a)
    return m / m[0]


def source_beam_coefficients(z):
    z = np.asarray(z, dtype=float)
    sigma_a = np.where(z <= 2, 1.0, 0.0)
    sigma_s = np.where(z <= 1, 0.0, np.where(z <= 2, 2.0, 10.0))
    q = np.where((z >= 1) & (z <= 1.5), 1.0, 0.0)
    return sigma_a, sigma_s, q


def source_beam(nz: int = 102, N: int = 1, k: int = 4) -> ProblemSpec:
    if nz % 6:
        raise ValueError("source beam needs nz divisible by 6 to align coefficient jumps with cell faces")
    grid = Grid1D(0.0, 3.0, nz)
    sa, ss, q = source_beam_coefficients(grid.centers)
    n_iso = isotropic_moments(N)
    physics = PhysicsFields(sa, ss, 2.0 * q[:, None] * n_iso)
    vac = 2 * F_VAC * n_iso
    return ProblemSpec(
        name="source-beam", N=N, grid=grid, tf=2.5, physics=physics,
        bc=Dirichlet(source_beam_inflow_moments(N), vac),
        initial=lambda z: np.broadcast_to(vac, np.shape(z) + (N + 1,)).copy(),
        tvb_M=default_tvb_M(k),
    )


# --- errors ---------------------------------------------------------------------------

ERROR_POINTS = 100


def error_norms(U: np.ndarray, exact: Callable[[np.ndarray], np.ndarray], grid: Grid1D,
                n_points: int = ERROR_POINTS) -> ErrorReport:
    """L1 and Linf errors of the zeroth moment on a per-cell Gauss-Lobatto rule."""
    rule = gauss_lobatto(n_points)
    z = grid.points(rule.nodes)
    num = np.einsum("qi,ci->cq", legendre_matrix(rule.nodes, U.shape[1]), U[:, :, 0])
    err = np.abs(np.asarray(exact(z)) - num)
    l1 = float(math.fsum((err @ rule.weights) * grid.dz))
    return ErrorReport(L1=l1, Linf=float(np.max(err)))


def observed_order(err1: float, err2: float, dz1: float, dz2: float) -> float:
    return math.log(err1 / err2) / math.log(dz1 / dz2)


def add_orders(reports: list, dzs: list) -> list:
    for i in range(1, len(reports)):
        a, b = reports[i - 1], reports[i]
        b.order_L1 = observed_order(a.L1, b.L1, dzs[i - 1], dzs[i]) if a.L1 > 0 and b.L1 > 0 else None
        b.order_Linf = observed_order(a.Linf, b.Linf, dzs[i - 1], dzs[i]) if a.Linf > 0 and b.Linf > 0 else None
    return reports


# --- realizability-limiter reconstruction study ----------------------------------------

def reconstruction_curve(z, gamma: float, N: int) -> np.ndarray:
    """U(z) = (1 - lam) U0 + lam U1 with lam = (cos(pi z) + 1) / 2."""
    n_iso = isotropic_moments(N)
    U0 = (1 - gamma) * basis_eval(1.0, N) + gamma * n_iso
    U1 = 1e-8 * ((1 - gamma) * basis_eval(-1.0, N) + gamma * n_iso)
    lam = (np.cos(np.pi * np.asarray(z, dtype=float)) + 1) / 2
    return (1 - lam)[..., None] * U0 + lam[..., None] * U1


@dataclass
class ReconstructionResult:
    errors: ErrorReport
    theta_max: float
    U: np.ndarray


def limiter_reconstruction(gamma: float, nz: int, k: int, N: int, nodes=None) -> ReconstructionResult:
    """Project the curve on [-1, 1], apply the realizability limiter, measure the u0 error."""
    grid = Grid1D(-1.0, 1.0, nz)
    U = project(lambda z: reconstruction_curve(z, gamma, N), grid, k)
    if nodes is None:
        nodes = realizability_nodes(k).nodes
    limited, theta, _ = limit_cells(U, legendre_matrix(nodes, k))
    err = error_norms(limited, lambda z: reconstruction_curve(z, gamma, N)[..., 0], grid)
    return ReconstructionResult(err, float(np.max(theta)), limited)


# --- theta activity -------------------------------------------------------------------

def theta_activity_record(result) -> list:
    """(t, z_cell, theta) for every step and cell where the realizability limiter acted."""
    return [rec for rec in result.theta_records if rec[2] > 0]


def build_problem(name: str, nz: int, N: int, k: int) -> ProblemSpec:
    builders = {"manufactured": manufactured, "plane-source": plane_source, "source-beam": source_beam}
    try:
        builder = builders[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r} (choose from {', '.join(builders)})") from None
    if name == "plane-source":
        return builder(nz, N)
    return builder(nz, N, k)
