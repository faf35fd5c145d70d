import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twistedpde.grid import ConvexDomain, DomainGrid
from twistedpde.oracle import (
    PreconditionError,
    RadialProfile,
    binomial_sum,
    counterexample_roots,
    existence_transition,
    radial_coefficient,
    radial_field,
    radial_polynomial,
    reduction_identity_check,
)


# --- radial coefficient ------------------------------------------------------


def test_radial_coefficient_examples():
    assert radial_coefficient(2, 4.0) == pytest.approx(2.0, abs=1e-13)
    assert radial_coefficient(2, 3.0) == pytest.approx(math.sqrt(3), abs=1e-13)


@pytest.mark.parametrize("n", range(2, 9))
def test_radial_polynomial_matches_big_integers(n):
    for A in range(0, 5):
        assert radial_polynomial(n, float(A)) == binomial_sum(n, A)
        assert binomial_sum(n, A) == (1 + A) ** n - 1 - n * A


def test_unit_coefficient_from_integer_sum():
    f = binomial_sum(3, 1)
    assert f == 4
    assert radial_coefficient(3, float(f)) == pytest.approx(1.0, abs=1e-13)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.floats(0.1, 10))
def test_radial_round_trip(n, A):
    assert abs(radial_coefficient(n, radial_polynomial(n, A)) - A) <= 1e-12


@pytest.mark.parametrize("n", range(2, 7))
def test_radial_solvable_below_threshold(n):
    for f in np.linspace(1e-3, n - 1, 7):
        A = radial_coefficient(n, f)
        assert A > 0
        assert radial_polynomial(n, A) == pytest.approx(f, rel=1e-12)


def test_radial_coefficient_rejects_nonpositive():
    with pytest.raises(PreconditionError):
        radial_coefficient(2, 0.0)


# --- radial field ------------------------------------------------------------


def test_radial_field_values():
    g = DomainGrid.build(ConvexDomain.disk(), 1 / 16)
    u = radial_field(RadialProfile(2, 2.0), g)
    assert u.nodal()[g.node(0, 0)] == -1.0
    assert np.max(np.abs(u.boundary_nodal())) <= 1e-15
    assert np.array_equal(u.hessians(), np.broadcast_to(2 * np.eye(2), (g.size, 2, 2)))
    assert np.allclose(u.hessians(), 2 * np.eye(2), atol=1e-9)


def test_radial_profile_hessian():
    assert np.array_equal(RadialProfile(4, 1.5).hessian(), 1.5 * np.eye(4))
    with pytest.raises(ValueError):
        RadialProfile(2, -1.0)


def test_radial_field_needs_unit_disk():
    g = DomainGrid.build(ConvexDomain.ellipse(1.0, 0.5), 1 / 16)
    with pytest.raises(PreconditionError):
        radial_field(RadialProfile(2, 1.0), g)


# --- reduction identity ------------------------------------------------------


@pytest.mark.parametrize("n", range(2, 9))
def test_identity_at_zero(n):
    assert reduction_identity_check(np.zeros(n)) == 0.0


def test_identity_hand_example():
    assert reduction_identity_check([1.0, 1.0]) == 0.0


@pytest.mark.parametrize("n", range(2, 9))
def test_identity_sweep(n):
    lam = np.random.default_rng(n).uniform(-2, 2, (10_000, n))
    err = reduction_identity_check(lam)
    bound = 1e-12 * (1 + np.max(np.abs(lam), axis=-1) ** n)
    assert np.all(err <= bound)
    assert np.max(err) <= 1e-10


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8))
def test_identity_contract(lam):
    lam = np.array(lam)
    n = len(lam)
    assert reduction_identity_check(lam) <= 1e-12 * (1 + np.max(np.abs(lam)) ** n)


# --- counterexample ----------------------------------------------------------


def test_counterexample_no_real_roots():
    rep = counterexample_roots(2, 2.0)
    assert rep.roots == []
    assert not rep.existence


def test_counterexample_quadratic_formula():
    rep = counterexample_roots(2, 0.5)
    assert rep.roots == pytest.approx([1 - math.sqrt(0.5), 1 + math.sqrt(0.5)], abs=1e-12)
    assert rep.admissible == pytest.approx([1 + math.sqrt(0.5)], abs=1e-12)
    assert rep.existence


@pytest.mark.parametrize("n", range(2, 7))
def test_tangent_double_root(n):
    rep = counterexample_roots(n, float(n - 1))
    assert rep.tangent
    assert rep.roots == [1.0]
    assert not rep.existence


@pytest.mark.parametrize("n", range(2, 7))
def test_no_existence_above_threshold(n):
    for k in range(7):
        assert not counterexample_roots(n, (n - 1) + 10.0**-k).existence
        assert not counterexample_roots(n, (n - 1) * (1 + 10.0**-k)).existence


@pytest.mark.parametrize("n", range(2, 7))
def test_existence_below_threshold(n):
    for c in np.linspace(0.05, 0.95, 7) * (n - 1):
        rep = counterexample_roots(n, float(c))
        assert rep.existence
        assert all(r > 1 for r in rep.admissible)


@pytest.mark.parametrize("n", range(2, 7))
def test_roots_satisfy_polynomial(n):
    for c in (0.1, 0.5 * (n - 1), n - 1, 2.0 * n):
        rep = counterexample_roots(n, c)
        scale = 1 + sum(abs(a) for a in rep.coefficients)
        for r in rep.roots:
            assert abs(r**n - n * r + c) <= 1e-12 * scale
        assert set(rep.admissible) <= set(rep.roots)


@pytest.mark.parametrize("n", range(2, 7))
def test_existence_monotone_in_c(n):
    cs = np.linspace(0.01, 3 * (n - 1), 200)
    flags = [counterexample_roots(n, float(c)).existence for c in cs]
    assert all(a >= b for a, b in zip(flags, flags[1:]))


@pytest.mark.parametrize("n", range(2, 7))
def test_transition_at_n_minus_one(n):
    assert abs(existence_transition(n) - (n - 1)) <= 1e-9


def test_counterexample_json():
    doc = counterexample_roots(3, 1.0).to_json()
    assert doc["existence"] is True
    assert doc["coefficients"] == [1.0, 0.0, -3.0, 1.0]
    with pytest.raises(PreconditionError):
        counterexample_roots(3, 0.0)
