import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistedpde.grid import (
    ConvexDomain,
    DiscretizationError,
    DomainGrid,
    GridField,
    discrete_hessian,
    hessian_field,
)
from twistedpde.linsolve import linear_solve, solve_scaled
from twistedpde.algebra import ConvergenceError
from twistedpde.solver import krylov_reduce, krylov_unreduce


@pytest.fixture(scope="module")
def disk32():
    return DomainGrid.build(ConvexDomain.disk(), 1 / 32)


@pytest.fixture(scope="module")
def ellipse16():
    return DomainGrid.build(ConvexDomain.ellipse(1.0, 0.7), 1 / 16)


def quadratic(M, c=(0.0, 0.0), d=0.0):
    M = np.asarray(M, dtype=float)

    def q(x, y):
        return 0.5 * (M[0, 0] * x * x + 2 * M[0, 1] * x * y + M[1, 1] * y * y) \
            + c[0] * x + c[1] * y + d
    return q


# --- domains -----------------------------------------------------------------


def test_domain_defining_function():
    D = ConvexDomain.ellipse(2.0, 1.0)
    assert D.rho(0.0, 0.0) == -1.0
    assert D.rho(2.0, 0.0) == 0.0
    assert D.rho(0.0, 1.5) > 0
    assert D.convexity_modulus == pytest.approx(0.5)
    assert np.all(np.linalg.eigvalsh(D.hess_rho()) >= D.convexity_modulus)
    D.check()


def test_domain_rejects_bad_shapes():
    with pytest.raises(ValueError):
        ConvexDomain.disk(-1.0)
    with pytest.raises(ValueError):
        ConvexDomain.from_dict({"kind": "square", "a": 1})


def test_domain_round_trip():
    for D in (ConvexDomain.disk(0.75), ConvexDomain.ellipse(1.0, 0.7)):
        assert ConvexDomain.from_dict(D.to_dict()) == D


# --- grid --------------------------------------------------------------------


def test_cut_points_lie_on_the_boundary(disk32, ellipse16):
    for g in (disk32, ellipse16):
        rho = g.domain.rho(g.cut_xy[:, 0], g.cut_xy[:, 1])
        assert np.max(np.abs(rho)) <= 1e-12
        assert np.all((g.cut_theta > 0) & (g.cut_theta <= 1))


def test_every_node_has_classified_neighbours(disk32):
    # every row of every stencil carries exactly three points
    for key in ("xx", "yy"):
        per_row = np.diff(disk32.D[key].indptr) + np.diff(disk32.B[key].indptr)
        assert np.all(per_row == 3)


def test_too_coarse_grid():
    with pytest.raises(DiscretizationError):
        DomainGrid.build(ConvexDomain.disk(0.1), 0.1)


def test_region_mask(disk32):
    mask = disk32.region(0.5)
    r = np.hypot(disk32.xy[:, 0], disk32.xy[:, 1])
    assert np.array_equal(mask, r < 0.5)


# --- discrete Hessian --------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 3), st.floats(-1, 1), st.floats(0.1, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_quadratic_exactness(a, b, c, p, q):
    g = DomainGrid.build(ConvexDomain.ellipse(1.0, 0.7), 1 / 16)
    M = np.array([[a, b], [b, c]])
    u = GridField.from_function(g, quadratic(M, (p, q), 0.3))
    H = hessian_field(u)
    assert np.max(np.abs(H - M)) <= 1e-9 * (1 + np.max(np.abs(M)) + abs(p) + abs(q))


def test_quadratic_exact_at_full_interior(disk32):
    M = np.array([[1.3, -0.4], [-0.4, 0.8]])
    u = GridField.from_function(disk32, quadratic(M))
    H = u.hessians()[disk32.full_interior]
    assert np.max(np.abs(H - M)) <= 1e-11


def test_quartic_taylor_term():
    g = DomainGrid.build(ConvexDomain.disk(), 0.1)
    u = GridField.from_function(g, lambda x, y: x**4)
    H = discrete_hessian(u, (0, 0))
    assert H[0, 0] == pytest.approx(0.02, abs=1e-12)
    assert H[1, 1] == 0.0


def test_constant_field_has_zero_hessian(disk32):
    u = GridField.from_function(disk32, 4.2)
    assert np.max(np.abs(u.hessians())) <= 1e-9


def test_discrete_hessian_rejects_exterior(disk32):
    u = GridField.from_function(disk32, 0.0)
    with pytest.raises(KeyError):
        discrete_hessian(u, (40, 0))


def test_extension_field_is_same_function(disk32):
    fn = lambda x, y: np.exp(x) * np.cos(y)  # noqa: E731
    a = GridField.from_function(disk32, fn)
    b = GridField.from_function(disk32, fn, with_extension=True)
    assert np.array_equal(b.values, np.zeros(disk32.size))
    assert np.allclose(a.nodal(), b.nodal(), atol=0)
    assert np.allclose(a.hessians(), b.hessians(), atol=1e-10)


# --- Krylov shift ------------------------------------------------------------


def test_reduce_of_zero(disk32):
    u = GridField.from_function(disk32, 0.0)
    v = krylov_reduce(u)
    assert np.array_equal(v.nodal(), 0.5 * np.sum(disk32.xy**2, -1))


def test_reduce_round_trip_bits(disk32):
    rng = np.random.default_rng(0)
    u = GridField(disk32, rng.standard_normal(disk32.size), rng.standard_normal(disk32.n_cut))
    back = krylov_unreduce(krylov_reduce(u))
    assert np.array_equal(back.nodal(), u.nodal())
    assert np.array_equal(back.boundary_nodal(), u.boundary_nodal())
    assert np.array_equal(back.values, u.values)


def test_reduce_shifts_hessian_by_identity(disk32):
    rng = np.random.default_rng(1)
    u = GridField(disk32, rng.standard_normal(disk32.size), rng.standard_normal(disk32.n_cut))
    diff = krylov_reduce(u).hessians() - u.hessians()
    assert np.max(np.abs(diff - np.eye(2))) <= 1e-12


# --- linear solver -----------------------------------------------------------


def test_laplace_recovers_harmonic_quadratic(disk32):
    w = lambda x, y: x * x - y * y  # noqa: E731
    bnd = w(disk32.cut_xy[:, 0], disk32.cut_xy[:, 1])
    sol = linear_solve(disk32, np.eye(2), 0.0, bnd)
    exact = w(disk32.xy[:, 0], disk32.xy[:, 1])
    assert np.max(np.abs(sol - exact)) <= 1e-10


def test_constant_spd_operator_manufactured(ellipse16):
    L = np.array([[2.0, 0.6], [0.6, 1.0]])
    rng = np.random.default_rng(2)
    w = rng.standard_normal(ellipse16.size)
    J = ellipse16.linear_operator(np.broadcast_to(L, (ellipse16.size, 2, 2)))
    sol = linear_solve(ellipse16, L, J @ w)
    assert np.linalg.norm(sol - w) / np.linalg.norm(w) <= 1e-10


def test_zero_problem(disk32):
    assert np.array_equal(linear_solve(disk32, np.eye(2), 0.0), np.zeros(disk32.size))


def test_iteration_cap_reports_residual(disk32):
    J = disk32.linear_operator(np.broadcast_to(np.eye(2), (disk32.size, 2, 2)))
    with pytest.raises(ConvergenceError) as err:
        solve_scaled(J, np.ones(disk32.size), maxiter=2)
    assert err.value.residual > 1e-12
