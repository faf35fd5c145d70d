"""Symmetric-function and matrix-derivative calculus.

All operations broadcast over leading axes: a "matrix" argument has shape
``(..., n, n)`` and results carry the same leading shape.  Symmetric
matrices are plain ndarrays; :func:`as_sym` rebuilds one from its upper
triangle so that symmetry holds exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .transforms import PowerRoot, ScalarTransform, transform_from_dict

MAX_DIM = 8
JACOBI_MAX_SWEEPS = 50
GRAD_STEP = 1e-6
HESS_STEP = 1e-4


class ConvergenceError(ArithmeticError):
    """Iteration failed to converge; ``residual`` holds the last measure."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def as_sym(M) -> np.ndarray:
    """Symmetric matrix built from the upper triangle of ``M``."""
    M = np.array(M, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError(f"expected (..., n, n) array, got shape {M.shape}")
    n = M.shape[-1]
    if not 1 <= n <= MAX_DIM:
        raise ValueError(f"dimension {n} outside supported range 1..{MAX_DIM}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    upper = np.triu(M)
    return upper + np.swapaxes(np.triu(M, 1), -1, -2)


def inf_norm(M) -> np.ndarray:
    """Entrywise max-abs norm over the last two axes."""
    return np.max(np.abs(M), axis=(-2, -1))


# ---------------------------------------------------------------------------
# elementary symmetric polynomials


def elem_sym_all(lam) -> np.ndarray:
    """All of ``S_0 .. S_n`` of the last axis of ``lam``, shape ``(..., n+1)``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    e = np.zeros(lam.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    # coefficients of prod_i (1 + lam_i t), one factor at a time
    for i in range(n):
        li = lam[..., i : i + 1]
        e[..., 1 : i + 2] = e[..., 1 : i + 2] + li * e[..., 0 : i + 1]
    return e


def elem_sym(k: int, lam) -> np.ndarray | float:
    """k-th elementary symmetric polynomial of the last axis of ``lam``."""
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"order k={k} outside 0..{n}")
    out = elem_sym_all(lam)[..., k]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# sigma_{k,B}


@lru_cache(maxsize=None)
def _interp_inverse(n: int) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(n + 1)
    nodes = np.cos((2 * j + 1) * np.pi / (2 * (n + 1)))
    if np.unique(nodes).size != nodes.size:
        raise ArithmeticError("duplicate interpolation nodes")
    vander = np.vander(nodes, n + 1, increasing=True)
    return nodes, np.linalg.inv(vander)


def sigma_coefficients(B, M) -> np.ndarray:
    """Coefficients of ``t**0 .. t**n`` in ``det(B + t M)``, shape ``(..., n+1)``.

    The polynomial is sampled at n+1 Chebyshev nodes and interpolated.  ``M``
    is first rescaled to the size of ``B`` so the nodes see a well balanced
    pencil; the coefficients are scaled back afterwards.
    """
    B = np.asarray(B, dtype=float)
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    nodes, vinv = _interp_inverse(n)
    scale = inf_norm(M) / inf_norm(B)
    scale = np.where(scale > 0, scale, 1.0)
    Ms = M / scale[..., None, None]
    pencil = B[..., None, :, :] + nodes[:, None, None] * Ms[..., None, :, :]
    vals = np.linalg.det(pencil)
    coef = vals @ vinv.T
    coef = coef * scale[..., None] ** np.arange(n + 1)
    # the end coefficients are det(B) and det(M) exactly
    coef[..., 0] = np.linalg.det(B)
    coef[..., n] = np.linalg.det(M)
    return coef


def sigma_kB(k: int, B, M):
    """Coefficient of ``t**k`` in ``det(B + t M)``."""
    n = np.shape(M)[-1]
    if not 0 <= k <= n:
        raise ValueError(f"order k={k} outside 0..{n}")
    out = sigma_coefficients(B, M)[..., k]
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# eigen-decomposition


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def eigen_sym(M, tol: float = 1e-15, max_sweeps: int = JACOBI_MAX_SWEEPS) -> Spectrum:
    """Cyclic Jacobi diagonalisation, vectorised over leading axes.

    Eigenvalues come back ascending with matching eigenvector columns.
    Raises :class:`ConvergenceError` if the off-diagonal mass has not dropped
    below ``tol * ||M||_F`` after ``max_sweeps`` sweeps.
    """
    A = as_sym(M)
    n = A.shape[-1]
    batch = A.shape[:-2]
    A = A.reshape((-1, n, n)).copy()
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    scale = np.sqrt(np.sum(A * A, axis=(-2, -1)))
    off_mask = ~np.eye(n, dtype=bool)

    def off(a):
        return np.sqrt(np.sum(a[:, off_mask] ** 2, axis=-1))

    for _ in range(max_sweeps):
        if np.all(off(A) <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = np.abs(apq) > 0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (A[:, q, q] - A[:, p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta == 0, 1.0, t)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)
                s = np.where(active, s, 0.0)
                cc, ss = c[:, None], s[:, None]
                colp, colq = A[:, :, p].copy(), A[:, :, q].copy()
                A[:, :, p] = cc * colp - ss * colq
                A[:, :, q] = ss * colp + cc * colq
                rowp, rowq = A[:, p, :].copy(), A[:, q, :].copy()
                A[:, p, :] = cc * rowp - ss * rowq
                A[:, q, :] = ss * rowp + cc * rowq
                vp, vq = V[:, :, p].copy(), V[:, :, q].copy()
                V[:, :, p] = cc * vp - ss * vq
                V[:, :, q] = ss * vp + cc * vq
    else:
        resid = float(np.max(off(A) / np.where(scale > 0, scale, 1.0)))
        if resid > tol:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps", resid
            )

    w = np.diagonal(A, axis1=-2, axis2=-1)
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    return Spectrum(w.reshape(batch + (n,)), V.reshape(batch + (n, n)))


# ---------------------------------------------------------------------------
# operator terms


@dataclass(frozen=True, eq=False)
class TraceTerm:
    """Linear part ``tr(A M)``."""

    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", as_sym(self.A))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def value(self, M):
        return np.einsum("...ij,ij->...", np.asarray(M, dtype=float), self.A)

    def analytic_gradient(self, M):
        return np.broadcast_to(self.A, np.shape(M)).copy()


@dataclass(frozen=True, eq=False)
class SigmaTerm:
    """``weight * sigma_{k,B}(M)``."""

    k: int
    weight: float
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "B", as_sym(self.B))
        object.__setattr__(self, "weight", float(self.weight))
        if not 1 <= self.k <= self.B.shape[0]:
            raise ValueError(f"term order k={self.k} outside 1..{self.B.shape[0]}")

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def value(self, M):
        return self.weight * sigma_kB(self.k, self.B, M)

    def analytic_gradient(self, M):
        """Closed form for ``k == n`` (weighted cofactor matrix of M)."""
        if self.k != self.n:
            raise NotImplementedError("analytic gradient only for the determinant")
        M = np.asarray(M, dtype=float)
        return self.weight * adjugate(M)


def adjugate(M) -> np.ndarray:
    """Transposed cofactor matrix, vectorised; valid for singular M too."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    out = np.empty_like(M)
    idx = np.arange(n)
    for i in range(n):
        for j in range(n):
            minor = M[..., idx != i, :][..., :, idx != j]
            out[..., j, i] = (-1) ** (i + j) * np.linalg.det(minor) if n > 1 else 1.0
    return out


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """``F = F_cup + sum_alpha F_cap_alpha`` with a common transform ``G``.

    ``A`` is the matrix of the linear part (``None`` for no linear part).
    The twisted-type requirements (A and every B SPD, weights >= 0) are
    checked by :meth:`require_twisted`; the container itself also admits the
    sign-indefinite linear parts of the reduced and counterexample equations.
    """

    n: int
    A: np.ndarray | None
    terms: tuple = ()
    transform: ScalarTransform | None = None
    name: str = ""

    def __post_init__(self):
        if not 2 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension n={self.n} outside 2..{MAX_DIM}")
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if self.A is not None:
            object.__setattr__(self, "A", as_sym(self.A))
            if self.A.shape != (self.n, self.n):
                raise ValueError("linear part has wrong shape")
        for t in terms:
            if t.n != self.n:
                raise ValueError("term dimension does not match operator")
        if self.A is None and not terms:
            raise ValueError("operator has neither linear part nor terms")

    @property
    def convex(self) -> TraceTerm | None:
        return None if self.A is None else TraceTerm(self.A)

    def convex_value(self, M):
        M = np.asarray(M, dtype=float)
        if self.A is None:
            return np.zeros(M.shape[:-2])
        return TraceTerm(self.A).value(M)

    def term_values(self, M) -> np.ndarray:
        """Values of each concave term, shape ``(..., m)``."""
        M = np.asarray(M, dtype=float)
        if not self.terms:
            return np.zeros(M.shape[:-2] + (0,))
        return np.stack([t.value(M) for t in self.terms], axis=-1)

    def value(self, M):
        M = np.asarray(M, dtype=float)
        out = self.convex_value(M)
        for t in self.terms:
            out = out + t.value(M)
        return out

    def ellipticity_constants(self) -> tuple[float, float]:
        if self.A is None:
            return (0.0, 0.0)
        w = eigen_sym(self.A).eigenvalues
        return float(w[0]), float(w[-1])

    def require_twisted(self) -> None:
        """Raise ``ValueError`` unless this operator has the twisted-type structure."""
        if self.A is None:
            raise ValueError("twisted type needs a linear part tr(A M)")
        if not self.terms:
            raise ValueError("twisted type needs at least one concave term")
        if self.ellipticity_constants()[0] <= 0:
            raise ValueError("linear part matrix A must be positive definite")
        for i, t in enumerate(self.terms):
            if isinstance(t, SigmaTerm):
                if t.weight < 0:
                    raise ValueError(f"term {i}: negative weight")
                if eigen_sym(t.B).eigenvalues[0] <= 0:
                    raise ValueError(f"term {i}: B must be positive definite")

    # serialisation ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "convex": None if self.A is None else {"A": self.A.ravel().tolist()},
            "terms": [
                {"k": t.k, "weight": t.weight, "B": t.B.ravel().tolist()} for t in self.terms
            ],
            "transform": None if self.transform is None else self.transform.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OperatorSpec":
        allowed = {"name", "n", "convex", "terms", "transform"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown operator keys: {sorted(unknown)}")
        n = int(doc["n"])
        convex = doc.get("convex")
        A = None
        if convex is not None:
            if set(convex) != {"A"}:
                raise ValueError("convex block must contain exactly key 'A'")
            A = np.array(convex["A"], dtype=float).reshape(n, n)
        terms = []
        for t in doc.get("terms", []):
            if set(t) != {"k", "weight", "B"}:
                raise ValueError("each term needs exactly keys k, weight, B")
            terms.append(SigmaTerm(int(t["k"]), float(t["weight"]),
                                   np.array(t["B"], dtype=float).reshape(n, n)))
        tr = doc.get("transform")
        return cls(n, A, tuple(terms), None if tr is None else transform_from_dict(tr),
                   doc.get("name", ""))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "OperatorSpec":
        return cls.from_dict(json.loads(text))


# presets -------------------------------------------------------------------


def preset_eq12(n: int = 2) -> OperatorSpec:
    """``det(M) + tr(M)`` with ``G = x**(1/n)``."""
    eye = np.eye(n)
    return OperatorSpec(n, eye, (SigmaTerm(n, 1.0, eye),), PowerRoot(n), "eq12")


def preset_prop13(n: int = 2) -> OperatorSpec:
    """``sum_{k=2}^n S_k(M)``, the determinant counted once (as ``S_n``)."""
    eye = np.eye(n)
    terms = tuple(SigmaTerm(k, 1.0, eye) for k in range(2, n + 1))
    return OperatorSpec(n, None, terms, PowerRoot(n), "prop13")


def preset_prop24(A, Bs: Sequence, weights: Sequence[float]) -> OperatorSpec:
    """``tr(A M) + sum_{k=2}^n f_k sigma_{k,B_k}(M)`` with ``G = x**(1/n)``."""
    A = as_sym(A)
    n = A.shape[0]
    if len(Bs) != n - 1 or len(weights) != n - 1:
        raise ValueError("need one B_k and one weight per k = 2..n")
    terms = tuple(SigmaTerm(k, w, B) for k, w, B in zip(range(2, n + 1), weights, Bs))
    return OperatorSpec(n, A, terms, PowerRoot(n), "prop24")


def preset_reduced(n: int = 2) -> OperatorSpec:
    """``det(N) - tr(N)``: the operator acting on ``D^2 v = D^2 u + I``."""
    eye = np.eye(n)
    return OperatorSpec(n, -eye, (SigmaTerm(n, 1.0, eye),), None, "reduced")


def preset_sigma(n: int, k: int, p: float | None = None) -> OperatorSpec:
    """Single term ``sigma_{k,I}`` with ``G = x**(1/p)`` (default ``p = k``)."""
    eye = np.eye(n)
    return OperatorSpec(n, None, (SigmaTerm(k, 1.0, eye),), PowerRoot(p or k), f"sigma{k}")


PRESETS = {
    "eq12": preset_eq12,
    "prop13": preset_prop13,
    "reduced": preset_reduced,
}


# ---------------------------------------------------------------------------
# derivatives


def _evaluator(F):
    return F.value if hasattr(F, "value") else F


@lru_cache(maxsize=None)
def _basis(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    iu, ju = np.triu_indices(n)
    E = np.zeros((iu.size, n, n))
    E[np.arange(iu.size), iu, ju] = 1.0
    E[np.arange(iu.size), ju, iu] = 1.0
    return iu, ju, E


def _is_linear(F) -> bool:
    if isinstance(F, TraceTerm):
        return True
    if isinstance(F, SigmaTerm):
        return F.k == 1
    if isinstance(F, OperatorSpec):
        return all(t.k == 1 for t in F.terms)
    return False


def op_gradient(F, M, step: float = GRAD_STEP) -> np.ndarray:
    """Matrix of partials ``dF/dM_ij`` by central differences.

    Off-diagonal entries are perturbed symmetrically and the difference
    quotient is halved, so for ``F = det`` the result is the cofactor matrix.
    ``F`` is an operator spec, a single term, or a callable on matrices.
    """
    f = _evaluator(F)
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    iu, ju, E = _basis(n)
    h = step * (1.0 + inf_norm(M))
    dM = h[..., None, None, None] * E
    Mb = M[..., None, :, :]
    d = (f(Mb + dM) - f(Mb - dM)) / (2.0 * h[..., None])
    d = np.where(iu == ju, d, 0.5 * d)
    G = np.zeros(M.shape)
    G[..., iu, ju] = d
    G[..., ju, iu] = d
    return G


def op_hessian_form(F, M, P, step: float = HESS_STEP) -> np.ndarray:
    """``d^2/ds^2 F(M + s P)`` at ``s = 0`` by the 5-point central formula.

    Terms that are linear in ``M`` (trace forms, ``sigma_1``) return exact zeros.
    """
    f = _evaluator(F)
    M = np.asarray(M, dtype=float)
    P = np.asarray(P, dtype=float)
    M, P = np.broadcast_arrays(M, P)
    if _is_linear(F):
        return np.zeros(M.shape[:-2])
    h = step * (1.0 + inf_norm(M))
    hP = h[..., None, None] * P
    num = (
        -f(M + 2 * hP) + 16 * f(M + hP) - 30 * f(M) + 16 * f(M - hP) - f(M - 2 * hP)
    )
    return num / (12.0 * h * h)


def op_hessian_bilinear(F, M, P, Q, step: float = HESS_STEP) -> np.ndarray:
    """Polarised second derivative ``D^2F(M)[P, Q]``."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    return 0.25 * (op_hessian_form(F, M, P + Q, step) - op_hessian_form(F, M, P - Q, step))


# ---------------------------------------------------------------------------
# ellipticity cone


class ConeResult(NamedTuple):
    inside: np.ndarray | bool
    margin_attained: np.ndarray | float


def cone_check(spec, M, margin: float = 0.0, eig_floor: float = -1.0) -> ConeResult:
    """Test ``M > eig_floor * I`` and positivity of ``dF/dlambda_i``.

    The eigen-derivatives are the diagonal of the gradient expressed in the
    eigenbasis of ``M``.  ``margin_attained`` is the smaller of the two
    slacks ``lambda_min - eig_floor`` and ``min_i dF/dlambda_i``.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    M = as_sym(M)
    lam, Q = eigen_sym(M)
    G = op_gradient(spec, M)
    dlam = np.einsum("...ai,...ab,...bi->...i", Q, G, Q)
    slack_eig = lam[..., 0] - eig_floor
    slack_grad = np.min(dlam, axis=-1)
    inside = (slack_eig > margin) & (slack_grad > margin)
    attained = np.minimum(slack_eig, slack_grad)
    if inside.ndim == 0:
        return ConeResult(bool(inside), float(attained))
    return ConeResult(inside, attained)


def binomial(n: int, k: int) -> int:
    return math.comb(n, k)
