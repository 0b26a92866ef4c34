"""TVBM minmod slope limiting and the realizability (linear scaling) limiter.

Coefficient arrays follow the solver layout ``(..., k, N+1)``: row ``i`` holds the
coefficient vector of the i-th scaled Legendre polynomial, row 0 is the cell
mean.  Every limiter here leaves row 0 untouched.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .moments import (
    PSD_TOL,
    MeanNotRealizable,
    closure_gradient,
    is_realizable,
    kershaw_closure,
    order_of,
    realizability_margin,
    realizability_matrices,
)

# near-double roots split into complex pairs of size ~sqrt(eps)
ROOT_IMAG_TOL = 1e-6
ROOT_WINDOW = 1e-10
THETA_VERIFY_STEP = 1e-12
# node values are pushed this far inside the operator's tolerance so that
# re-evaluating them with another summation order still passes
LIMITER_TOL_FACTOR = 0.1
EIG_DISTINCT_TOL = 1e-8


@dataclass(frozen=True)
class LimiterConfig:
    tvb_M: float = math.inf
    characteristic: bool = True
    psd_tol: float = PSD_TOL
    theta_clamp_eps: float = 0.0

    def __post_init__(self):
        if not self.tvb_M >= 0:
            raise ValueError("tvb_M must be non-negative (or inf)")
        if not self.psd_tol > 0:
            raise ValueError("psd_tol must be positive")
        if not 0.0 <= self.theta_clamp_eps <= 1e-6:
            raise ValueError("theta_clamp_eps must lie in [0, 1e-6]")


class Binding(enum.Enum):
    NONE = "none"
    FIRST = "first_poly"
    SECOND = "second_poly"


@dataclass(frozen=True)
class ThetaResult:
    theta: float
    active: bool
    binding_constraint: Binding


# --- slope limiting -------------------------------------------------------------

def minmod(a, b, c) -> np.ndarray:
    a, b, c = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c)))
    s = np.sign(a)
    same = (s == np.sign(b)) & (s == np.sign(c))
    return np.where(same, s * np.minimum(np.minimum(np.abs(a), np.abs(b)), np.abs(c)), 0.0)


def _limit_rows(rows, dplus, dminus, threshold):
    """Apply the TVBM rule to rows 1.. of ``rows`` (..., k, m) component by component.

    Returns the new rows and the mask of limited components.
    """
    slope = rows[..., 1, :]
    active = np.abs(slope) >= threshold
    out = rows.copy()
    out[..., 1, :] = np.where(active, minmod(slope, dplus, dminus), slope)
    out[..., 2:, :] = np.where(active[..., None, :], 0.0, rows[..., 2:, :])
    return out, active


def tvbm_slope_limit(U_prev, U_curr, U_next, M: float, dz: float) -> np.ndarray:
    """Componentwise TVBM-corrected minmod limiter on the conserved moments.

    Works on a single cell ``(k, N+1)`` or on stacked cells ``(nz, k, N+1)``.
    """
    U_curr = np.asarray(U_curr, dtype=float)
    if U_curr.shape[-2] < 2 or math.isinf(M):
        return U_curr.copy()
    mean = U_curr[..., 0, :]
    dplus = np.asarray(U_next)[..., 0, :] - mean
    dminus = mean - np.asarray(U_prev)[..., 0, :]
    out, _ = _limit_rows(U_curr, dplus, dminus, M * dz**2)
    return out


def flux_jacobian(u_mean, fd_step=None) -> np.ndarray:
    """Flux Jacobian: shift rows plus the closure gradient in the last row.

    The gradient is analytic by default.  Passing ``fd_step`` switches to
    central differences with that step (a check on the analytic form away
    from the realizability boundary).
    """
    u = np.asarray(u_mean, dtype=float)
    N = order_of(u)
    n = N + 1
    if fd_step is None:
        grad = closure_gradient(u)
    else:
        step = float(fd_step) * np.eye(n)
        cp = kershaw_closure(u[..., None, :] + step, check=False)
        cm = kershaw_closure(u[..., None, :] - step, check=False)
        grad = (cp - cm) / (2 * float(fd_step))
    J = np.zeros(u.shape + (n,))
    J[..., np.arange(N), np.arange(1, n)] = 1.0
    J[..., N, :] = grad
    return J


def _characteristic_basis(u_mean):
    """Right/left eigenvectors of the Jacobian and a mask of usable cells."""
    J = flux_jacobian(u_mean)
    lam, R = np.linalg.eig(J)
    scale = np.maximum(1.0, np.max(np.abs(lam), axis=-1))
    real = np.all(np.abs(lam.imag) <= EIG_DISTINCT_TOL * scale[..., None], axis=-1)
    lr = np.sort(lam.real, axis=-1)
    distinct = np.all(np.diff(lr, axis=-1) > EIG_DISTINCT_TOL * scale[..., None], axis=-1)
    ok = real & distinct & np.all(np.isfinite(J), axis=(-2, -1))
    R = np.where(ok[..., None, None], R.real, np.eye(J.shape[-1]))
    cond = np.linalg.cond(R)
    ok &= cond < 1e12
    R = np.where(ok[..., None, None], R, np.eye(J.shape[-1]))
    return R, np.linalg.inv(R), ok


def characteristic_limit(U_prev, U_curr, U_next, M: float, dz: float) -> np.ndarray:
    """TVBM limiter applied to local characteristic fields of the cell mean.

    Cells whose Jacobian does not have real, distinct eigenvalues (or whose mean
    is not realizable) fall back to the componentwise limiter.
    """
    U_curr = np.asarray(U_curr, dtype=float)
    if U_curr.shape[-2] < 2 or math.isinf(M):
        return U_curr.copy()
    single = U_curr.ndim == 2
    Uc = U_curr[None] if single else U_curr
    Up = np.asarray(U_prev, dtype=float)
    Un = np.asarray(U_next, dtype=float)
    Up = Up[None] if single else Up
    Un = Un[None] if single else Un

    scalar = tvbm_slope_limit(Up, Uc, Un, M, dz)
    mean = Uc[:, 0, :]
    R, L, ok = _characteristic_basis(mean)
    ok &= is_realizable(mean)

    W = np.einsum("cab,ckb->cka", L, Uc)
    dplus = np.einsum("cab,cb->ca", L, Un[:, 0, :] - mean)
    dminus = np.einsum("cab,cb->ca", L, mean - Up[:, 0, :])
    W_lim, active = _limit_rows(W, dplus, dminus, M * dz**2)
    back = np.einsum("cab,ckb->cka", R, W_lim)
    back[:, 0, :] = Uc[:, 0, :]
    touched = np.any(active, axis=-1)
    out = np.where((ok & touched)[:, None, None], back, Uc)
    out = np.where(ok[:, None, None], out, scalar)
    return out[0] if single else out


# --- realizability limiter -----------------------------------------------------

def theta_nodes(N: int) -> np.ndarray:
    """Interpolation nodes in [0, 1] used to recover the determinant polynomials."""
    if N >= 6:
        return 0.5 - 0.5 * np.cos(np.pi * np.arange(N + 1) / N)
    return np.linspace(0.0, 1.0, N + 1)


def determinant_polynomials(u_mean, u_point) -> list[np.ndarray]:
    """Coefficients (lowest degree first) of det M(theta) for both realizability pencils.

    M(theta) = theta*M(u_mean) + (1-theta)*M(u_point).  The determinants are
    sampled at N+1 nodes and interpolated; coefficients beyond the matrix size
    (the true degree) are dropped.  Batched over leading axes.
    """
    ubar = np.asarray(u_mean, dtype=float)
    up = np.asarray(u_point, dtype=float)
    N = order_of(ubar)
    t = theta_nodes(N)
    V = np.vander(t, N + 1, increasing=True)
    polys = []
    for Mbar, Mp in zip(realizability_matrices(ubar), realizability_matrices(up)):
        m = Mbar.shape[-1]
        pencil = t[:, None, None] * Mbar[..., None, :, :] + (1 - t)[:, None, None] * Mp[..., None, :, :]
        d = np.linalg.det(pencil)  # (..., N+1)
        coef = np.linalg.solve(V, d[..., None])[..., 0]
        polys.append(coef[..., : m + 1])
    return polys


def polynomial_roots(coef) -> np.ndarray:
    """All complex roots of one polynomial (coefficients lowest degree first)."""
    c = np.asarray(coef, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(0, dtype=complex)
    c = np.polynomial.polynomial.polytrim(c, tol=1e-13 * scale)
    if c.size < 2:
        return np.zeros(0, dtype=complex)
    return np.polynomial.polynomial.polyroots(c).astype(complex)


def _max_root_in_unit(coef: np.ndarray) -> np.ndarray:
    """Largest admissible real root in [0, 1] per row of ``coef`` (nan if none)."""
    P, deg1 = coef.shape
    out = np.full(P, np.nan)
    scale = np.max(np.abs(coef), axis=1)
    lead = np.abs(coef[:, -1])
    regular = (lead > 1e-13 * scale) & (deg1 >= 2)
    roots_list = [None] * P
    idx = np.nonzero(regular)[0]
    if idx.size:
        c = coef[idx]
        m = deg1 - 1
        comp = np.zeros((idx.size, m, m))
        if m > 1:
            comp[:, np.arange(1, m), np.arange(m - 1)] = 1.0
        comp[:, :, -1] = -c[:, :m] / c[:, m:]
        roots = np.linalg.eigvals(comp)
        for r, i in zip(roots, idx):
            roots_list[i] = r
    for i in np.nonzero(~regular)[0]:
        roots_list[i] = polynomial_roots(coef[i])
    for i, r in enumerate(roots_list):
        re, im = r.real, r.imag
        keep = (np.abs(im) < ROOT_IMAG_TOL * (1 + np.abs(re))) & (re >= -ROOT_WINDOW) & (re <= 1 + ROOT_WINDOW)
        if np.any(keep):
            out[i] = np.clip(np.max(re[keep]), 0.0, 1.0)
    return out


def _bisect_theta(mb, mp, psd_tol: float, iters: int = 60) -> np.ndarray:
    """Fallback: the realizable part of the segment is an interval ending at theta=1."""
    lo = np.zeros(len(mb))
    hi = np.ones(len(mb))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = np.atleast_1d(is_realizable(mid[:, None] * mb + (1 - mid[:, None]) * mp, psd_tol))
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    return hi


def theta_batch(u_mean, u_point, psd_tol: float = PSD_TOL):
    """Vectorised limiter value for pairs (mean, point) of shape (P, N+1).

    Returns ``(theta, binding)`` where binding is 0 (none), 1 or 2.  Means must
    be realizable; the caller handles boundary means.
    """
    ubar = np.atleast_2d(np.asarray(u_mean, dtype=float))
    up = np.atleast_2d(np.asarray(u_point, dtype=float))
    P = ubar.shape[0]
    theta = np.zeros(P)
    binding = np.zeros(P, dtype=int)
    bad = ~np.atleast_1d(is_realizable(up, psd_tol))
    if not np.any(bad):
        return theta, binding
    # theta is invariant under a common positive scaling; normalise by the mean mass
    s = ubar[bad, :1]
    mb, mp = ubar[bad] / s, up[bad] / s
    polys = determinant_polynomials(mb, mp)
    r1 = _max_root_in_unit(polys[0])
    r2 = _max_root_in_unit(polys[1])
    best = np.fmax(r1, r2)
    which = np.where(np.isnan(r2) | (r1 >= np.nan_to_num(r2, nan=-1.0)), 1, 2)
    missing = np.isnan(best)
    best = np.where(missing, 1.0, best)
    probe = np.minimum(best + THETA_VERIFY_STEP, 1.0)
    ok = np.atleast_1d(is_realizable(probe[:, None] * mb + (1 - probe[:, None]) * mp, psd_tol))
    if not np.all(ok):
        best[~ok] = _bisect_theta(mb[~ok], mp[~ok], psd_tol)
    which = np.where(ok & ~missing, which, 0)
    theta[bad] = best
    binding[bad] = which
    return theta, binding


def realizability_theta(u_mean, u_point, psd_tol: float = PSD_TOL) -> ThetaResult:
    """Smallest theta in [0, 1] with theta*u_mean + (1-theta)*u_point realizable."""
    ubar = np.asarray(u_mean, dtype=float)
    up = np.asarray(u_point, dtype=float)
    margin = float(realizability_margin(ubar))
    if margin < -psd_tol:
        raise MeanNotRealizable(f"cell mean {ubar} is not realizable")
    if is_realizable(up, psd_tol):
        return ThetaResult(0.0, False, Binding.NONE)
    if margin < psd_tol:
        return ThetaResult(1.0, True, Binding.NONE)
    theta, binding = theta_batch(ubar[None], up[None], psd_tol)
    th = float(theta[0])
    return ThetaResult(th, th > 0, [Binding.NONE, Binding.FIRST, Binding.SECOND][int(binding[0])])


def limit_cells(U, basis_at_nodes, psd_tol: float = PSD_TOL, signed_density: bool = False,
                theta_eps: float = 0.0):
    """Realizability limiter on stacked cells ``U`` of shape (nz, k, N+1).

    ``basis_at_nodes`` is the (n_nodes, k) matrix of Legendre values at the
    reference nodes.  Returns ``(U_limited, theta, bypassed)``.  With
    ``signed_density`` cells whose mean or node values carry non-positive mass
    are left alone and flagged in ``bypassed`` instead of raising.  A positive
    ``theta_eps`` pushes active cells slightly past the boundary root.
    """
    U = np.asarray(U, dtype=float)
    nz = U.shape[0]
    theta = np.zeros(nz)
    bypassed = np.zeros(nz, dtype=bool)
    if U.shape[1] < 2:
        return U.copy(), theta, bypassed
    mean_tol = psd_tol
    psd_tol = LIMITER_TOL_FACTOR * psd_tol
    vals = np.einsum("qi,cin->cqn", basis_at_nodes, U)
    node_ok = is_realizable(vals, psd_tol)
    cells = np.nonzero(~np.all(node_ok, axis=1))[0]
    if cells.size == 0:
        return U.copy(), theta, bypassed
    mean = U[cells, 0, :]
    if signed_density:
        skip = (mean[:, 0] <= 0) | np.any(vals[cells, :, 0] <= 0, axis=1)
        bypassed[cells[skip]] = True
        cells, mean = cells[~skip], mean[~skip]
    margin = realizability_margin(mean)
    if np.any(margin < -mean_tol):
        j = int(cells[np.argmax(margin < -mean_tol)])
        raise MeanNotRealizable(f"cell {j}: mean {U[j, 0]} is not realizable")
    boundary = margin < mean_tol
    theta[cells[boundary]] = 1.0
    inner = cells[~boundary]
    if inner.size:
        bad_c, bad_q = np.nonzero(~node_ok[inner])
        th, _ = theta_batch(U[inner[bad_c], 0, :], vals[inner[bad_c], bad_q, :], psd_tol)
        per_cell = np.zeros(inner.size)
        np.maximum.at(per_cell, bad_c, th)
        theta[inner] = per_cell
    if theta_eps > 0:
        theta = np.where(theta > 0, np.minimum(theta + theta_eps, 1.0), theta)
    out = U.copy()
    out[:, 1:, :] *= (1.0 - theta)[:, None, None]
    # an exact boundary root can leave node values a rounding error outside
    step = THETA_VERIFY_STEP
    active = cells[theta[cells] < 1.0]
    while active.size:
        lim = np.einsum("qi,cin->cqn", basis_at_nodes, out[active])
        active = active[~np.all(is_realizable(lim, psd_tol), axis=1)]
        if active.size == 0:
            break
        theta[active] = np.minimum(theta[active] + step, 1.0)
        out[active, 1:, :] = U[active, 1:, :] * (1.0 - theta[active])[:, None, None]
        active = active[theta[active] < 1.0]
        step *= 10.0
    return out, theta, bypassed


def apply_realizability_limiter(U, nodes, psd_tol: float = PSD_TOL):
    """Damp the non-mean coefficients of one cell (k, N+1) so all node values are realizable.

    ``nodes`` are reference coordinates in [-1/2, 1/2].  Returns the limited
    coefficients and the cell's theta.
    """
    from .dg import legendre_matrix

    U = np.asarray(U, dtype=float)
    out, theta, _ = limit_cells(U[None], legendre_matrix(np.asarray(nodes, dtype=float), U.shape[0]), psd_tol)
    return out[0], float(theta[0])
