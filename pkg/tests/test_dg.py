import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kershaw_dg.benchmarks import F_VAC, plane_source, source_beam, source_beam_inflow_moments
from kershaw_dg.dg import (
    Dirichlet,
    Discretization,
    Grid1D,
    Periodic,
    PhysicsFields,
    cfl_dt,
    evaluate,
    extend,
    gauss_legendre,
    gauss_lobatto,
    ghost_cells,
    legendre_derivative_matrix,
    legendre_matrix,
    legendre_ref,
    lf_flux,
    project,
    realizability_nodes,
    semidiscrete_rhs,
    total_mass,
)
from kershaw_dg.moments import NotRealizable, basis_eval, flux, isotropic_moments


def test_grid_geometry():
    g = Grid1D(0.0, 3.0, 6)
    assert g.dz == 0.5
    np.testing.assert_allclose(g.centers, [0.25, 0.75, 1.25, 1.75, 2.25, 2.75])
    np.testing.assert_allclose(g.edges[[0, -1]], [0.0, 3.0])
    with pytest.raises(ValueError):
        Grid1D(1.0, 0.0, 4)
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 0)


@pytest.mark.parametrize("n, nodes, weights", [
    (2, [-0.5, 0.5], [0.5, 0.5]),
    (3, [-0.5, 0.0, 0.5], [1 / 6, 2 / 3, 1 / 6]),
])
def test_gauss_lobatto_small(n, nodes, weights):
    r = gauss_lobatto(n)
    np.testing.assert_allclose(r.nodes, nodes, atol=1e-15)
    np.testing.assert_allclose(r.weights, weights, atol=1e-15)


@pytest.mark.parametrize("n", range(2, 12))
def test_gauss_lobatto_properties(n):
    r = gauss_lobatto(n)
    assert r.nodes[0] == -0.5 and r.nodes[-1] == 0.5
    assert sum(r.weights) == pytest.approx(1.0, abs=1e-14)
    assert r.w1_hat == pytest.approx(1 / (n * (n - 1)), rel=1e-14)
    # exact for degree 2n - 3: compare against the monomial integrals on (-1/2, 1/2)
    for d in range(2 * n - 2):
        exact = 0.0 if d % 2 else 0.5**d / (d + 1)
        assert r.weights @ r.nodes**d == pytest.approx(exact, abs=1e-14)
    if n >= 3:
        assert r.weights @ r.nodes**2 == pytest.approx(1 / 12, abs=1e-15)


def test_gauss_lobatto_needs_two_points():
    with pytest.raises(ValueError):
        gauss_lobatto(1)


@pytest.mark.parametrize("k, n_q", [(1, 2), (2, 2), (3, 3), (4, 3), (5, 4)])
def test_realizability_node_count(k, n_q):
    assert realizability_nodes(k).n == n_q


def test_legendre_examples():
    assert legendre_ref(1, 0.5) == 1.0
    assert legendre_ref(2, 0.0) == pytest.approx(-0.5, abs=1e-15)
    np.testing.assert_allclose(legendre_ref(2, np.array([0.5, -0.5])), [1.0, 1.0])


def test_legendre_orthogonality():
    rule = gauss_legendre(12)
    P = legendre_matrix(rule.nodes, 8)
    np.testing.assert_allclose(P.T @ (rule.weights[:, None] * P), np.diag(1 / (2 * np.arange(8) + 1)), atol=1e-15)


def test_legendre_matrix_matches_scipy():
    x = np.linspace(-0.5, 0.5, 11)
    P = legendre_matrix(x, 7)
    for i in range(7):
        np.testing.assert_allclose(P[:, i], legendre_ref(i, x), atol=1e-14)


def test_legendre_derivative():
    x = np.linspace(-0.5, 0.5, 7)
    D = legendre_derivative_matrix(x, 3)
    np.testing.assert_allclose(D[:, 0], 0.0)
    np.testing.assert_allclose(D[:, 1], 2.0)
    np.testing.assert_allclose(D[:, 2], 12 * x, atol=1e-14)


def _vec(f):
    return lambda z: np.stack([f(z), 0 * z], axis=-1)


def test_project_constant():
    U = project(lambda z: np.broadcast_to([2.0, 0.5], z.shape + (2,)), Grid1D(0, 1, 4), 3)
    np.testing.assert_allclose(U[:, 0], [[2.0, 0.5]] * 4, atol=1e-15)
    np.testing.assert_allclose(U[:, 1:], 0.0, atol=1e-13)


def test_project_linear_slope():
    U = project(_vec(lambda z: z), Grid1D(-0.5, 0.5, 1), 2)
    assert U[0, 1, 0] == pytest.approx(0.5, abs=1e-15)
    assert U[0, 0, 0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_project_reproduces_polynomials(k):
    rng = np.random.default_rng(k)
    c = rng.normal(size=k)
    f = lambda z: np.polynomial.polynomial.polyval(z, c)
    grid = Grid1D(-1.0, 2.0, 5)
    U = project(_vec(f), grid, k)
    xs = np.linspace(-0.5, 0.5, 9)
    np.testing.assert_allclose(evaluate(U, xs)[..., 0], f(grid.points(xs)), atol=1e-13)


def test_total_mass():
    U = np.zeros((4, 2, 2))
    U[:, 0, 0] = [1, 2, 3, 4]
    U[:, 1, 0] = 9.0  # slopes carry no mass
    assert total_mass(U, Grid1D(0, 2, 4)) == 5.0


@pytest.mark.parametrize("uL, uR, expected", [
    ([1, 1], [1, 1], [1, 1]),
    ([1, 0], [3, 0], [-1, 2 / 3]),
])
def test_lf_flux_examples(uL, uR, expected):
    np.testing.assert_allclose(lf_flux(np.array(uL, float), np.array(uR, float)), expected, atol=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_lf_flux_consistency(N):
    u = 0.4 * isotropic_moments(N) + 0.6 * basis_eval(0.3, N)
    np.testing.assert_allclose(lf_flux(u, u), flux(u), atol=1e-15)


def test_ghost_cells_periodic():
    U = np.arange(24.0).reshape(4, 3, 2)
    left, right = ghost_cells(U, Periodic())
    np.testing.assert_array_equal(left, U[-1])
    np.testing.assert_array_equal(right, U[0])
    assert extend(U, Periodic()).shape == (6, 3, 2)


def test_ghost_cells_vacuum():
    p = plane_source(nz=10, N=3)
    left, right = ghost_cells(np.zeros((10, 4, 4)), p.bc)
    for g in (left, right):
        np.testing.assert_allclose(g[0], 2 * F_VAC * isotropic_moments(3))
        np.testing.assert_array_equal(g[1:], 0.0)


def test_ghost_cells_beam_inflow():
    p = source_beam(nz=12, N=2)
    left, _ = ghost_cells(np.zeros((12, 2, 3)), p.bc)
    np.testing.assert_array_equal(left[0], source_beam_inflow_moments(2))


def test_cfl_dt_examples():
    assert cfl_dt(0.024, 0.5, 1.0) == pytest.approx(0.95 * 0.012 / 1.012, rel=1e-14)
    assert cfl_dt(0.024, 0.5, 1.0) == pytest.approx(0.011265, abs=1e-6)
    assert cfl_dt(0.1, 0.25, 0.0) == pytest.approx(0.95 * 0.025)
    assert cfl_dt(0.1, 0.25, 1e12) < 1e-11


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 1.0), st.sampled_from([0.5, 1 / 6, 1 / 12]), st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_cfl_dt_monotone_in_sigma(dz, w1, s1, s2):
    lo, hi = sorted((s1, s2))
    assert cfl_dt(dz, w1, hi) <= cfl_dt(dz, w1, lo) + 1e-15


def _random_state(rng, nz, k, N, amp=0.05):
    U = np.zeros((nz, k, N + 1))
    for j in range(nz):
        U[j, 0] = rng.uniform(0.5, 2.0) * (0.7 * isotropic_moments(N) + 0.3 * basis_eval(rng.uniform(-1, 1), N))
    U[:, 1:] = amp * rng.normal(size=(nz, k - 1, N + 1)) * U[:, :1, :1]
    return U


@pytest.mark.parametrize("k", [1, 2, 3, 4])
@pytest.mark.parametrize("N", [1, 2, 3])
def test_equilibrium_has_zero_rhs(k, N):
    nz = 8
    disc = Discretization(Grid1D(0, 1, nz), k)
    U = np.zeros((nz, k, N + 1))
    U[:, 0] = 1.7 * isotropic_moments(N)
    physics = PhysicsFields(np.zeros(nz), np.full(nz, 3.0), np.zeros((nz, N + 1)))
    np.testing.assert_allclose(semidiscrete_rhs(U, disc, Periodic(), physics), 0.0, atol=1e-13)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_k1_is_lax_friedrichs_finite_volume(N):
    rng = np.random.default_rng(N)
    nz = 16
    grid = Grid1D(0, 2, nz)
    U = _random_state(rng, nz, 1, N)
    ss, sa = rng.uniform(0, 2, nz), rng.uniform(0, 1, nz)
    q = rng.uniform(0, 1, (nz, 1)) * isotropic_moments(N)
    rhs = semidiscrete_rhs(U, Discretization(grid, 1), Periodic(), PhysicsFields(sa, ss, q))
    u = U[:, 0]
    F = lf_flux(np.roll(u, 1, 0), u)  # interface j-1/2
    Fr = np.roll(F, -1, 0)
    n_iso = isotropic_moments(N)
    src = ss[:, None] * (u[:, :1] * n_iso - u) + q - sa[:, None] * u
    fv = (F - Fr) / grid.dz + src
    np.testing.assert_array_equal(rhs[:, 0], fv)


@pytest.mark.parametrize("k", [2, 3, 4])
@pytest.mark.parametrize("N", [1, 2, 3])
def test_rhs_telescopes(k, N):
    rng = np.random.default_rng(10 * k + N)
    nz = 12
    grid = Grid1D(0, 1, nz)
    disc = Discretization(grid, k)
    U = _random_state(rng, nz, k, N)
    left, right = 1.3 * isotropic_moments(N), 0.2 * basis_eval(-0.5, N) + 0.1 * isotropic_moments(N)
    bc = Dirichlet(left, right)
    # the identity is algebraic, so random (possibly non-realizable) traces are fine
    rhs = semidiscrete_rhs(U, disc, bc, PhysicsFields.zero(nz, N), check=False)
    Ue = extend(U, bc)
    tr_right = np.einsum("i,cin->cn", disc.phi_right, Ue)
    tr_left = np.einsum("i,cin->cn", disc.phi_left, Ue)
    inflow = lf_flux(tr_right[0], tr_left[1], check=False)
    outflow = lf_flux(tr_right[-2], tr_left[-1], check=False)
    np.testing.assert_allclose(grid.dz * rhs[:, 0].sum(axis=0), inflow - outflow, atol=1e-12)


def test_rhs_periodic_conserves_mass():
    rng = np.random.default_rng(7)
    nz, k, N = 20, 3, 2
    disc = Discretization(Grid1D(-1, 1, nz), k)
    U = _random_state(rng, nz, k, N)
    physics = PhysicsFields(np.zeros(nz), rng.uniform(0, 5, nz), np.zeros((nz, N + 1)))
    rhs = semidiscrete_rhs(U, disc, Periodic(), physics)
    assert abs(rhs[:, 0, 0].sum()) < 1e-12 * np.abs(rhs[:, 0, 0]).sum()


def test_rhs_reports_bad_nodes():
    nz, k, N = 4, 2, 1
    U = np.zeros((nz, k, N + 1))
    U[:, 0] = [1.0, 0.0]
    U[2, 1] = [0.0, 3.0]  # trace (1, +-3) leaves the cone
    with pytest.raises(NotRealizable, match="cell"):
        semidiscrete_rhs(U, Discretization(Grid1D(0, 1, nz), k), Periodic(), PhysicsFields.zero(nz, N))


def test_check_nodes_include_quadrature_and_trace_nodes():
    disc = Discretization(Grid1D(0, 1, 3), 4)
    for x in np.concatenate([disc.realizability_rule.nodes, disc.volume_rule.nodes, [-0.5, 0.5]]):
        assert np.min(np.abs(disc.check_nodes - x)) < 1e-14
