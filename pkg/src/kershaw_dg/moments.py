"""Monomial moments on [-1, 1]: realizability, boundary functions, Kershaw closure.

All array-valued functions accept a trailing moment axis of length ``N + 1`` and
broadcast over any leading axes, so a whole grid of point values can be closed
in one call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

PSD_TOL = 1e-10
PINV_RCOND = 1e-12
VACUUM_FLOOR = 1e-300
CLAMP_EPS = 1e-14


class NotRealizable(ValueError):
    """Raised when a moment vector lies outside the realizable cone."""


class MeanNotRealizable(NotRealizable):
    """Raised when a cell mean, which the limiter relies on, is not realizable."""


@dataclass(frozen=True)
class HankelTriple:
    A: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RealizabilityBounds:
    lower: float
    upper: float


def order_of(u) -> int:
    n = np.shape(u)[-1] - 1
    if n < 1:
        raise ValueError("moment vectors need at least two components (N >= 1)")
    return n


def basis_eval(mu, N: int) -> np.ndarray:
    """Monomials ``(1, mu, ..., mu**N)``; broadcasts over array ``mu``."""
    mu = np.asarray(mu, dtype=float)
    return mu[..., None] ** np.arange(N + 1)


def isotropic_moments(N: int) -> np.ndarray:
    """Half the moments of the constant density: 1/(i+1) for even i, 0 for odd i."""
    i = np.arange(N + 1)
    return np.where(i % 2 == 0, 1.0 / (i + 1), 0.0)


def atomic_moments(weights, nodes, N: int) -> np.ndarray:
    """Moments of the atomic density ``sum_a w_a delta(mu - node_a)``."""
    w = np.asarray(weights, dtype=float)
    x = np.asarray(nodes, dtype=float)
    if np.any(w <= 0) or np.any(np.abs(x) > 1):
        raise ValueError("atomic measures need positive weights and nodes in [-1, 1]")
    return np.einsum("...a,...ai->...i", w, basis_eval(x, N))


def _hankel_block(u, size: int, shift: int) -> np.ndarray:
    """Matrix ``(u[i + j + shift])`` for ``i, j < size``, batched over leading axes."""
    idx = np.add.outer(np.arange(size), np.arange(size)) + shift
    return u[..., idx]


def hankel(u) -> HankelTriple:
    """Hankel matrices entering the realizability conditions for order N.

    Odd N = 2k+1 gives A(k), B(k); even N = 2k gives A(k), C(k).
    """
    u = np.asarray(u, dtype=float)
    N = order_of(u)
    k = N // 2
    A = _hankel_block(u, k + 1, 0)
    if N % 2:
        return HankelTriple(A=A, B=_hankel_block(u, k + 1, 1))
    return HankelTriple(A=A, C=_hankel_block(u, k, 2))


def realizability_matrices(u) -> tuple[np.ndarray, np.ndarray]:
    """The two matrices that must be PSD; both are linear in ``u``.

    Odd N: A(k) - B(k) and A(k) + B(k).  Even N: A(k) and A(k-1) - C(k).
    """
    u = np.asarray(u, dtype=float)
    N = order_of(u)
    k = N // 2
    if N % 2:
        A = _hankel_block(u, k + 1, 0)
        B = _hankel_block(u, k + 1, 1)
        return A - B, A + B
    return _hankel_block(u, k + 1, 0), _hankel_block(u, k, 0) - _hankel_block(u, k, 2)


def _scale(u) -> np.ndarray:
    # |u_i| <= u0 on the cone, so u0 sets the natural magnitude of every entry
    return np.maximum(np.max(np.abs(u), axis=-1), VACUUM_FLOOR)


def realizability_margin(u) -> np.ndarray:
    """Smallest eigenvalue over both conditions, relative to the moment scale.

    Non-negative (up to roundoff) exactly on the realizable cone; negative
    whenever ``u0 <= 0``.
    """
    u = np.asarray(u, dtype=float)
    scale = _scale(u)
    lam = np.minimum(*(np.linalg.eigvalsh(m)[..., 0] for m in realizability_matrices(u)))
    margin = lam / scale
    return np.where(u[..., 0] > 0, margin, np.minimum(margin, -1.0))


def is_realizable(u, tol: float = PSD_TOL):
    """Hankel PSD test with relative tolerance; vectorised over leading axes."""
    res = realizability_margin(u) >= -tol
    return bool(res) if np.ndim(res) == 0 else res


def _pinv_quadratic(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``b^T M^+ b`` for symmetric M via eigendecomposition with relative cutoff."""
    if M.shape[-1] == 0:
        return np.zeros(M.shape[:-2])
    lam, V = np.linalg.eigh(M)
    cut = PINV_RCOND * np.max(np.abs(lam), axis=-1, keepdims=True)
    inv = np.where(lam > cut, 1.0 / np.where(lam > cut, lam, 1.0), 0.0)
    proj = np.einsum("...ji,...j->...i", V, b)
    return np.sum(inv * proj**2, axis=-1)


def _pinv_solve(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x = M^+ b with the same cutoff as ``_pinv_quadratic``."""
    lam, V = np.linalg.eigh(M)
    cut = PINV_RCOND * np.max(np.abs(lam), axis=-1, keepdims=True)
    inv = np.where(lam > cut, 1.0 / np.where(lam > cut, lam, 1.0), 0.0)
    proj = np.einsum("...ji,...j->...i", V, b)
    return np.einsum("...ij,...j->...i", V, inv * proj)


def _quadratic_gradient(matrix, vector, u: np.ndarray) -> np.ndarray:
    """Gradient of b(u)^T M(u)^+ b(u) for maps M, b that are linear in u."""
    n = u.shape[-1]
    x = _pinv_solve(matrix(u), vector(u))
    Me = matrix(np.eye(n))  # (n, m, m): M evaluated on unit vectors
    be = vector(np.eye(n))
    return 2 * np.einsum("...i,ji->...j", x, be) - np.einsum("...a,jab,...b->...j", x, Me, x)


def bounds_gradients(u) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of (flow, fup) with respect to u_0..u_N (both are homogeneous of degree one)."""
    u = np.asarray(u, dtype=float)
    N = order_of(u)
    unit = np.eye(N + 1)
    if N % 2:
        k = (N - 1) // 2
        g_lower = _quadratic_gradient(lambda v: _hankel_block(v, k + 1, 0),
                                      lambda v: v[..., k + 1:N + 1], u)
        if k == 0:
            g_upper = np.broadcast_to(unit[0], u.shape).copy()
        else:
            g_upper = unit[N - 1] - _quadratic_gradient(
                lambda v: _hankel_block(v, k, 0) - _hankel_block(v, k, 2),
                lambda v: v[..., k:N - 1] - v[..., k + 2:N + 1], u)
    else:
        k = N // 2
        g_upper = unit[N] - _quadratic_gradient(
            lambda v: _hankel_block(v, k, 0) - _hankel_block(v, k, 1),
            lambda v: v[..., k:N] - v[..., k + 1:N + 1], u)
        g_lower = -unit[N] + _quadratic_gradient(
            lambda v: _hankel_block(v, k, 0) + _hankel_block(v, k, 1),
            lambda v: v[..., k:N] + v[..., k + 1:N + 1], u)
    return g_lower, g_upper


def closure_gradient(u) -> np.ndarray:
    """Gradient of the Kershaw closure with respect to u_0..u_N."""
    u = np.asarray(u, dtype=float)
    zeta = interpolation_constant(order_of(u))
    g_lower, g_upper = bounds_gradients(u)
    return zeta * g_lower + (1.0 - zeta) * g_upper


def bounds_arrays(u) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (flow, fup): admissible range for u_{N+1} given u_0..u_N."""
    u = np.asarray(u, dtype=float)
    N = order_of(u)
    if N % 2:
        k = (N - 1) // 2
        b_plus = u[..., k + 1:N + 1]
        lower = _pinv_quadratic(_hankel_block(u, k + 1, 0), b_plus)
        if k == 0:
            upper = u[..., 0].copy()
        else:
            M = _hankel_block(u, k, 0) - _hankel_block(u, k, 2)
            b_minus = u[..., k:N - 1] - u[..., k + 2:N + 1]
            upper = u[..., N - 1] - _pinv_quadratic(M, b_minus)
    else:
        k = N // 2
        A = _hankel_block(u, k, 0)
        B = _hankel_block(u, k, 1)
        b_minus = u[..., k:N] - u[..., k + 1:N + 1]
        b_plus = u[..., k:N] + u[..., k + 1:N + 1]
        upper = u[..., N] - _pinv_quadratic(A - B, b_minus)
        lower = -u[..., N] + _pinv_quadratic(A + B, b_plus)
    return lower, upper


def realizability_bounds(u_head, tol: float = PSD_TOL) -> RealizabilityBounds:
    u = np.asarray(u_head, dtype=float)
    if not is_realizable(u, tol):
        raise NotRealizable(f"moment vector {u} is not realizable")
    lower, upper = bounds_arrays(u)
    return RealizabilityBounds(float(lower), float(upper))


def interpolation_constant(N: int) -> float:
    """Weight of the lower bound in the Kershaw closure of order N."""
    if N % 2:
        k = (N - 1) // 2
        return (k + 2) / (2 * k + 3)
    return 0.5


def _closure_normalized(phi: np.ndarray) -> np.ndarray:
    lower, upper = bounds_arrays(phi)
    zeta = interpolation_constant(order_of(phi))
    value = zeta * lower + (1.0 - zeta) * upper
    gap = CLAMP_EPS * (upper - lower)
    return np.where(gap > 0, np.clip(value, lower + gap, upper - gap), value)


def kershaw_closure(u, check: bool = True, tol: float = PSD_TOL):
    """Kershaw closure u_{N+1} = u0 * (zeta*flow(phi) + (1-zeta)*fup(phi)).

    With ``check=False`` the formula is evaluated without a realizability test;
    the solver uses this for states it has already verified, and for signed
    densities on the Dirac ray where the closure stays well defined by
    homogeneity.
    """
    u = np.asarray(u, dtype=float)
    if check:
        if not np.all(is_realizable(u, tol)):
            raise NotRealizable("closure requested for non-realizable moments")
    u0 = u[..., 0]
    s = np.where(np.abs(u0) < VACUUM_FLOOR, np.where(u0 < 0, -VACUUM_FLOOR, VACUUM_FLOOR), u0)
    phi = u / s[..., None]
    out = s * _closure_normalized(phi)
    return float(out) if out.ndim == 0 else out


def flux(u, check: bool = True) -> np.ndarray:
    """Physical flux (u1, ..., uN, u_{N+1}) with the Kershaw closure for the last entry."""
    u = np.asarray(u, dtype=float)
    last = np.asarray(kershaw_closure(u, check=check))
    return np.concatenate([u[..., 1:], last[..., None]], axis=-1)


def source(u, sigma_s, sigma_a, q_moments) -> np.ndarray:
    """Isotropic scattering, absorption and emission: s(u) = ss*(u0*n_iso - u) + q - sa*u.

    The scattering part has zero mass component (u0*n_iso[0] = u0).
    """
    u = np.asarray(u, dtype=float)
    n_iso = isotropic_moments(order_of(u))
    ss = np.asarray(sigma_s, dtype=float)[..., None]
    sa = np.asarray(sigma_a, dtype=float)[..., None]
    return ss * (u[..., :1] * n_iso - u) + np.asarray(q_moments, dtype=float) - sa * u
