"""Time loop for the realizability-preserving DG scheme."""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dg import (
    BoundarySpec,
    Discretization,
    Grid1D,
    PhysicsFields,
    cfl_dt,
    extend,
    gauss_lobatto,
    legendre_derivative_matrix,
    legendre_matrix,
    project,
    semidiscrete_rhs,
    total_mass,
)
from .limiters import characteristic_limit, flux_jacobian, limit_cells, tvbm_slope_limit
from .moments import PSD_TOL, MeanNotRealizable, NotRealizable, is_realizable, realizability_margin
from .timestepping import default_time_order, scheme_for_order, ssp_step

log = logging.getLogger(__name__)

# below this dt/dz the DG/SSP pair is unusable (forward Euler with k >= 2)
MIN_STABILITY_LIMIT = 1e-3


@dataclass
class SolverConfig:
    k: int = 2
    time_order: Optional[int] = None
    tvb_M: float = math.inf
    characteristic: bool = True
    cfl_safety: float = 0.95
    psd_tol: float = PSD_TOL
    theta_clamp_eps: float = 0.0
    record_theta: bool = True
    track_speeds: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.time_order is None:
            self.time_order = default_time_order(self.k)
        if self.time_order not in (1, 2, 3, 4):
            raise ValueError("time_order must be 1, 2, 3 or 4")


@dataclass
class StepRecord:
    step: int
    t: float
    dt: float
    mass: float
    min_realizability_margin: float


@dataclass
class RunResult:
    U: np.ndarray
    t: float
    grid: Grid1D
    initial_mass: float
    steps: list = field(default_factory=list)
    theta_records: list = field(default_factory=list)
    bypass_events: int = 0
    max_speed: float = math.nan


def stability_polynomial(z, order: int) -> np.ndarray:
    """Amplification factor R(z) of the SSP scheme for y' = lambda*y, z = lambda*dt."""
    z = np.asarray(z, dtype=complex)
    return ssp_step(np.ones_like(z), 1.0, order, lambda y: z * y, lambda y: y)


@functools.lru_cache(maxsize=None)
def linear_stability_limit(k: int, order: int) -> float:
    """Largest dt/dz keeping the DG/SSP pair stable for u_t + a u_z = 0, |a| <= 1.

    Fourier analysis of the semi-discrete operator with the Lax-Friedrichs flux
    (viscosity 1) on a uniform grid; the time step must keep every eigenvalue
    inside the stability region of the SSP scheme.  This bound is independent
    of the realizability CFL bound and can be the tighter one (k=2 with
    SSPRK(2,2)).
    """
    rule = gauss_lobatto(k + 1)
    phi = legendre_matrix(rule.nodes, k)
    dphi = legendre_derivative_matrix(rule.nodes, k)
    mass_dphi = np.einsum("q,qi,qm->im", rule.weights, dphi, phi)
    pr = legendre_matrix([0.5], k)[0]
    pl = legendre_matrix([-0.5], k)[0]
    scale = (2 * np.arange(k) + 1.0)[:, None]
    eigs = []
    for a in np.linspace(-1.0, 1.0, 9):
        for th in np.linspace(0, 2 * np.pi, 128, endpoint=False):
            e = np.exp(1j * th)
            f_minus = 0.5 * (a + 1) * np.conj(e) * pr + 0.5 * (a - 1) * pl
            f_plus = 0.5 * (a + 1) * pr + 0.5 * (a - 1) * e * pl
            G = scale * (np.outer(pl, f_minus) - np.outer(pr, f_plus) + a * mass_dphi)
            eigs.append(np.linalg.eigvals(G))
    lam = np.concatenate(eigs)

    def stable(nu):
        return np.max(np.abs(stability_polynomial(nu * lam, order))) <= 1 + 1e-12

    lo, hi = 0.0, 4.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if stable(mid) else (lo, mid)
    return lo


class DGSolver:
    """Semi-discrete DG operator plus limiters for one problem setup.

    ``signed_density`` switches to the mode used by the manufactured solution,
    where the density changes sign: realizability checks are skipped and the
    realizability limiter leaves sign-indefinite cells alone.
    """

    def __init__(self, grid: Grid1D, N: int, physics: PhysicsFields, bc: BoundarySpec,
                 config: SolverConfig, signed_density: bool = False):
        self.grid = grid
        self.N = N
        self.physics = physics
        self.bc = bc
        self.config = config
        self.signed_density = signed_density
        self.disc = Discretization(grid, config.k)
        if linear_stability_limit(config.k, config.time_order) < MIN_STABILITY_LIMIT:
            raise ValueError(f"time order {config.time_order} is linearly unstable with k={config.k}; "
                             f"use time order >= min(k, 4)")
        self.bypass_events = 0
        self._theta = np.zeros(grid.nz)

    # limiter stages are separate methods so the call order can be observed
    def slope_limit(self, U: np.ndarray) -> np.ndarray:
        cfg = self.config
        if U.shape[1] < 2 or math.isinf(cfg.tvb_M):
            return U
        Ue = extend(U, self.bc)
        limiter = characteristic_limit if cfg.characteristic else tvbm_slope_limit
        return limiter(Ue[:-2], U, Ue[2:], cfg.tvb_M, self.grid.dz)

    def realizability_limit(self, U: np.ndarray) -> np.ndarray:
        out, theta, bypassed = limit_cells(U, self.disc.phi_check, self.config.psd_tol,
                                           signed_density=self.signed_density,
                                           theta_eps=self.config.theta_clamp_eps)
        if np.any(bypassed):
            n = int(np.count_nonzero(bypassed))
            self.bypass_events += n
            log.debug("realizability limiter bypassed in %d sign-indefinite cells", n)
        np.maximum(self._theta, theta, out=self._theta)
        return out

    def prepare(self, U: np.ndarray) -> np.ndarray:
        return self.realizability_limit(self.slope_limit(U))

    def rhs(self, U: np.ndarray) -> np.ndarray:
        return semidiscrete_rhs(U, self.disc, self.bc, self.physics,
                                check=not self.signed_density, psd_tol=self.config.psd_tol)

    def stable_dt(self) -> float:
        """Realizability CFL bound, capped by the linear stability limit of the DG/SSP pair.

        Every SSP stage is a forward-Euler step of size dt / c, so the Euler
        bound is scaled by the scheme's SSP coefficient c.
        """
        sigma_max = float(np.max(self.physics.sigma_t)) if self.grid.nz else 0.0
        c = scheme_for_order(self.config.time_order).ssp_coefficient
        dt = c * cfl_dt(self.grid.dz, self.disc.w1_hat, sigma_max, self.config.cfl_safety)
        nu = linear_stability_limit(self.config.k, self.config.time_order)
        return min(dt, self.config.cfl_safety * nu * self.grid.dz)

    def step(self, U: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """One SSP step from a prepared state; returns the prepared new state and theta per cell."""
        self._theta = np.zeros(self.grid.nz)
        new = ssp_step(U, dt, self.config.time_order, self.rhs, self.prepare)
        new = self.prepare(new)
        return new, self._theta.copy()

    def check_means(self, U: np.ndarray, t: float):
        if self.signed_density:
            return
        margin = realizability_margin(U[:, 0, :])
        bad = margin < -self.config.psd_tol
        if np.any(bad):
            j = int(np.argmax(bad))
            raise MeanNotRealizable(
                f"t={t:.6g}: cell {j} (z={self.grid.centers[j]:.6g}) mean {U[j, 0]} left the realizable "
                f"set; the CFL bound and node realizability of the previous step must hold")


def min_margin(U: np.ndarray) -> float:
    return float(np.min(realizability_margin(U[:, 0, :])))


def max_speed(U: np.ndarray) -> float:
    """Largest |eigenvalue| of the flux Jacobian over realizable cell means with positive mass."""
    mean = U[:, 0, :]
    keep = (mean[:, 0] > 0) & np.atleast_1d(is_realizable(mean))
    if not np.any(keep):
        return math.nan
    return float(np.max(np.abs(np.linalg.eigvals(flux_jacobian(mean[keep])))))


def run(problem, config: SolverConfig, tf: Optional[float] = None) -> RunResult:
    """Integrate ``problem`` to its final time (or ``tf``).

    ``problem`` provides ``grid``, ``N``, ``tf``, ``physics``, ``bc``,
    ``initial`` (z -> moments) and ``signed_density``.
    """
    tf = problem.tf if tf is None else tf
    solver = DGSolver(problem.grid, problem.N, problem.physics, problem.bc, config,
                      signed_density=getattr(problem, "signed_density", False))
    grid = problem.grid
    U = project(problem.initial, grid, config.k)
    m0 = total_mass(U, grid)
    U = solver.prepare(U)
    result = RunResult(U=U, t=0.0, grid=grid, initial_mass=m0)
    if config.track_speeds:
        result.max_speed = max_speed(U)
    dt_max = solver.stable_dt()
    t, n = 0.0, 0
    while t < tf:
        dt = min(dt_max, tf - t)
        try:
            U, theta = solver.step(U, dt)
        except NotRealizable as exc:
            raise type(exc)(f"step {n + 1}, t={t:.6g}: {exc}") from exc
        n += 1
        t = tf if tf - (t + dt) <= 1e-14 * max(1.0, tf) else t + dt
        solver.check_means(U, t)
        result.steps.append(StepRecord(n, t, dt, total_mass(U, grid), min_margin(U)))
        if config.track_speeds:
            result.max_speed = float(np.fmax(result.max_speed, max_speed(U)))
        if config.record_theta:
            for j in np.nonzero(theta > 0)[0]:
                result.theta_records.append((t, float(grid.centers[j]), float(theta[j])))
    result.U = U
    result.t = t
    result.bypass_events = solver.bypass_events
    return result
