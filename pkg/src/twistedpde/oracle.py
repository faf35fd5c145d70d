"""Radial exact solutions on the ball and the non-existence criterion.

For ``u = A (|x|**2 - 1) / 2`` the Hessian is ``A I``, so the equation
``sum_{k=2}^n S_k(D^2 u) = f`` collapses to the scalar
``P(A) = sum_{k>=2} C(n, k) A**k = f``.  The counterexample equation
``det(D^2 v) - Laplace v = -c`` collapses to ``A**n - n A + c = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import elem_sym_all
from .grid import DomainGrid, GridField

BISECT_TOL = 1e-13
ROOT_TOL = 1e-12
TANGENT_TOL = 1e-9


class PreconditionError(ValueError):
    pass


def radial_polynomial(n: int, A) -> np.ndarray | float:
    """``P(A) = sum_{k=2}^n S_k(A, ..., A)``, via the elementary symmetric polynomials."""
    A = np.asarray(A, dtype=float)
    lam = np.repeat(A[..., None], n, axis=-1)
    out = np.sum(elem_sym_all(lam)[..., 2:], axis=-1)
    return float(out) if out.ndim == 0 else out


def radial_coefficient(n: int, f: float) -> float:
    """Positive ``A`` with ``P(A) = f`` by bisection on ``[0, 1 + f]``."""
    if not f > 0:
        raise PreconditionError(f"radial coefficient needs f > 0, got {f!r}")
    lo, hi = 0.0, 1.0 + f
    # run to adjacent floats; BISECT_TOL is the contract, not the stop rule
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if radial_polynomial(n, mid) < f:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class RadialProfile:
    """``u(x) = A (|x|**2 - 1) / 2`` on the unit ball of R^n."""

    n: int
    A: float

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("radial profile needs A > 0")

    def __call__(self, x, y):
        return 0.5 * self.A * (np.asarray(x) ** 2 + np.asarray(y) ** 2 - 1.0)

    def hessian(self) -> np.ndarray:
        return self.A * np.eye(self.n)


def radial_field(profile: RadialProfile, grid: DomainGrid) -> GridField:
    """The profile on the grid, boundary trace 0 at the cut points.

    The quadratic part is kept symbolic (``quad = A`` on top of the constant
    ``-A/2``), so the discrete Hessian is exactly ``A I`` at every node.
    """
    if profile.n != 2:
        raise PreconditionError("grid fields are two-dimensional")
    if grid.domain.kind != "disk" or grid.domain.a != 1.0:
        raise PreconditionError("radial profile lives on the unit disk")
    base = np.full(grid.size, -0.5 * profile.A)
    # r = 1 at the cut points, so -A/2 + A/2 = 0 there
    return GridField(grid, base, np.full(grid.n_cut, -0.5 * profile.A), profile.A)


def reduction_identity_check(lam) -> np.ndarray | float:
    """``|prod(mu) - sum(mu) - (sum_{k>=2} S_k(lam) - (n-1))|`` with ``mu = lam + 1``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    mu = lam + 1.0
    lhs = np.prod(mu, axis=-1) - np.sum(mu, axis=-1)
    rhs = np.sum(elem_sym_all(lam)[..., 2:], axis=-1) - (n - 1)
    out = np.abs(lhs - rhs)
    return float(out) if out.ndim == 0 else out


@dataclass
class RootReport:
    n: int
    c: float
    coefficients: list
    roots: list = field(default_factory=list)
    admissible: list = field(default_factory=list)
    tangent: bool = False

    @property
    def existence(self) -> bool:
        return bool(self.admissible)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "c": self.c,
            "coefficients": self.coefficients,
            "positive_roots": self.roots,
            "cone_admissible_roots": self.admissible,
            "tangent": self.tangent,
            "existence": self.existence,
        }


def _poly(n, c):
    def p(A):
        return A**n - n * A + c
    return p


def counterexample_roots(n: int, c: float, brackets: int = 2000) -> RootReport:
    """Positive roots of ``A**n - n A + c`` and those with ``A**(n-1) > 1``.

    Roots are bracketed by sign changes on a log-spaced grid over
    ``(0, 1 + n + c]`` (which also contains the critical point ``A = 1``)
    and refined by bisection.  A double root at ``A = 1`` produces no sign
    change; it is detected directly and flagged as ``tangent``.
    """
    if not c > 0:
        raise PreconditionError("counterexample needs c > 0")
    coeffs = [1.0] + [0.0] * (n - 2) + [-float(n), float(c)]
    p = _poly(n, c)
    scale = 1.0 + sum(abs(a) for a in coeffs)
    lo = min(1e-12, c / (10 * n))
    grid = np.unique(np.concatenate([np.geomspace(lo, 1.0 + n + c, brackets), [1.0]]))
    vals = p(grid)
    report = RootReport(n, float(c), coeffs)
    roots = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        a, b = grid[i], grid[i + 1]
        fa = vals[i]
        for _ in range(200):
            m = 0.5 * (a + b)
            if m in (a, b):
                break
            fm = p(m)
            if fm == 0:
                a = b = m
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        roots.append(float(0.5 * (a + b)))
    roots += [float(g) for g, v in zip(grid, vals) if v == 0]
    # A = 1 is the only positive critical point, so a root there is double
    if abs(p(1.0)) <= ROOT_TOL * scale:
        report.tangent = True
        roots = [r for r in roots if abs(r - 1.0) > TANGENT_TOL] + [1.0]
    report.roots = sorted(r for r in roots if abs(p(r)) <= ROOT_TOL * scale)
    report.admissible = [r for r in report.roots if r ** (n - 1) > 1.0 and r > 1.0]
    return report


def existence_transition(n: int, lo: float | None = None, hi: float | None = None,
                         tol: float = 1e-11) -> float:
    """Bisect on ``c`` for the switch of ``counterexample_roots(n, c).existence``."""
    lo = 0.5 * (n - 1) if lo is None else lo
    hi = 2.0 * (n - 1) if hi is None else hi
    if not counterexample_roots(n, lo).existence or counterexample_roots(n, hi).existence:
        raise ValueError("bracket does not straddle the existence transition")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if counterexample_roots(n, mid).existence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def binomial_sum(n: int, A: int) -> int:
    """Exact integer ``sum_{k=2}^n C(n, k) A**k`` for integer ``A``."""
    return sum(math.comb(n, k) * A**k for k in range(2, n + 1))
