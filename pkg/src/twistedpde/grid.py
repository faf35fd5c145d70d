"""Cartesian grids on strictly convex planar domains with cut-cell stencils.

Each interior node (``rho < 0``) looks along four lines: the two axes and
the two diagonals.  When the neighbouring node on a line lies outside, the
boundary crossing on that segment (found exactly, ``rho`` is quadratic)
replaces it.  Second directional derivatives use the three-point formula on
the possibly uneven spacing, which is exact on quadratics; ``u_xy`` is half
the difference of the two diagonal second derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

# (dx, dy) pairs: (+ direction, - direction) for each stencil line
LINES = {
    "x": ((1, 0), (-1, 0)),
    "y": ((0, 1), (0, -1)),
    "d": ((1, 1), (-1, -1)),
    "e": ((1, -1), (-1, 1)),
}
MIN_INTERIOR = 9


class DiscretizationError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexDomain:
    """Centred ellipse ``rho = (x/a)**2 + (y/b)**2 - 1`` (disk when a == b)."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in ("disk", "ellipse"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("semi-axes must be positive")
        if self.kind == "disk" and self.a != self.b:
            raise ValueError("disk needs equal semi-axes")

    @classmethod
    def disk(cls, radius: float = 1.0) -> "ConvexDomain":
        return cls("disk", float(radius), float(radius))

    @classmethod
    def ellipse(cls, a: float, b: float) -> "ConvexDomain":
        return cls("ellipse", float(a), float(b))

    def rho(self, x, y):
        return (np.asarray(x) / self.a) ** 2 + (np.asarray(y) / self.b) ** 2 - 1.0

    def grad_rho(self, x, y):
        return np.stack([2 * np.asarray(x) / self.a**2, 2 * np.asarray(y) / self.b**2], -1)

    def hess_rho(self) -> np.ndarray:
        return np.diag([2 / self.a**2, 2 / self.b**2])

    @property
    def convexity_modulus(self) -> float:
        return 2.0 / max(self.a, self.b) ** 2

    @property
    def extent(self) -> float:
        return max(self.a, self.b)

    def check(self, samples: int = 720) -> None:
        """Sampled checks of a nonvanishing gradient on the boundary and D^2 rho >= C I."""
        th = np.linspace(0, 2 * np.pi, samples, endpoint=False)
        g = self.grad_rho(self.a * np.cos(th), self.b * np.sin(th))
        if np.min(np.linalg.norm(g, axis=-1)) <= 0:
            raise DiscretizationError("grad rho vanishes on the boundary")
        if np.min(np.linalg.eigvalsh(self.hess_rho())) < self.convexity_modulus * (1 - 1e-12):
            raise DiscretizationError("D^2 rho below the convexity modulus")

    def cut_fraction(self, px, py, dx, dy):
        """Positive root ``theta`` of ``rho(p + theta d) = 0`` for interior ``p``."""
        al = (dx / self.a) ** 2 + (dy / self.b) ** 2
        be = 2 * (px * dx / self.a**2 + py * dy / self.b**2)
        ga = self.rho(px, py)
        disc = np.sqrt(be * be - 4 * al * ga)
        # cancellation-free branch for each sign of beta
        return np.where(be >= 0, -2 * ga / (be + disc), (disc - be) / (2 * al))

    def scaled(self, ratio: float) -> "ConvexDomain":
        return ConvexDomain(self.kind, self.a * ratio, self.b * ratio)

    def to_dict(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "radius": self.a}
        return {"kind": "ellipse", "a": self.a, "b": self.b}

    @classmethod
    def from_dict(cls, doc: dict) -> "ConvexDomain":
        kind = doc.get("kind")
        if kind == "disk":
            if set(doc) - {"kind", "radius"}:
                raise ValueError(f"unknown disk keys: {sorted(set(doc) - {'kind', 'radius'})}")
            return cls.disk(float(doc.get("radius", 1.0)))
        if kind == "ellipse":
            if set(doc) != {"kind", "a", "b"}:
                raise ValueError("ellipse needs exactly keys kind, a, b")
            return cls.ellipse(float(doc["a"]), float(doc["b"]))
        raise ValueError(f"unknown domain kind {kind!r}")


@dataclass(eq=False)
class DomainGrid:
    """Interior nodes of ``domain`` on the lattice ``h * Z^2`` plus stencil operators.

    ``Dxx``, ``Dyy``, ``Dxy`` act on interior values; ``Bxx``, ``Byy``,
    ``Bxy`` act on the boundary values at the cut points, so that
    ``u_xx = Dxx @ u + Bxx @ u_cut`` and likewise for the other entries.
    """

    domain: ConvexDomain
    h: float
    ij: np.ndarray
    xy: np.ndarray
    cut_xy: np.ndarray
    cut_theta: np.ndarray
    full_interior: np.ndarray
    D: dict
    B: dict
    index: dict = field(repr=False)
    stencil: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, domain: ConvexDomain, h: float) -> "DomainGrid":
        domain.check()
        h = float(h)
        N = int(math.ceil(domain.extent / h)) + 1
        r = np.arange(-N, N + 1)
        I, J = np.meshgrid(r, r, indexing="ij")
        X, Y = I * h, J * h
        inside = domain.rho(X, Y) < 0
        ij = np.stack([I[inside], J[inside]], -1)
        if len(ij) < MIN_INTERIOR:
            raise DiscretizationError(
                f"grid spacing {h} too coarse: {len(ij)} interior nodes")
        xy = ij * h
        lookup = -np.ones(I.shape, dtype=np.int64)
        lookup[inside] = np.arange(len(ij))
        count = len(ij)

        cut_xy, cut_theta = [], []
        n_cut = 0
        rows = {k: [] for k in LINES}
        cols = {k: [] for k in LINES}
        vals = {k: [] for k in LINES}
        brows = {k: [] for k in LINES}
        bcols = {k: [] for k in LINES}
        bvals = {k: [] for k in LINES}
        full = np.ones(count, dtype=bool)
        node = np.arange(count)
        stencil = {}
        for key, dirs in LINES.items():
            length = h * math.hypot(*dirs[0])
            spans, targets, sources = [], [], []
            for dx, dy in dirs:
                ni, nj = ij[:, 0] + dx + N, ij[:, 1] + dy + N
                nb = lookup[ni, nj]
                out = nb < 0
                full &= ~out
                theta = np.ones(count)
                theta[out] = domain.cut_fraction(xy[out, 0], xy[out, 1], dx * h, dy * h)
                if np.any(theta[out] <= 0) or np.any(theta[out] > 1 + 1e-12):
                    raise DiscretizationError("cut point not on the stencil segment")
                theta = np.minimum(theta, 1.0)
                cid = -np.ones(count, dtype=np.int64)
                cid[out] = n_cut + np.arange(np.count_nonzero(out))
                n_cut += int(np.count_nonzero(out))
                cut_xy.append(xy[out] + theta[out, None] * np.array([dx, dy]) * h)
                cut_theta.append(theta[out])
                spans.append(theta * length)
                targets.append((nb, cid, out))
                # position in the stacked vector [interior values, cut values]
                sources.append(np.where(out, count + cid, nb))
            sp_, sm = spans
            cp = 2.0 / (sp_ * (sp_ + sm))
            cm = 2.0 / (sm * (sp_ + sm))
            stencil[key] = (sources[0], sources[1], cp, cm)
            rows[key] += [node]
            cols[key] += [node]
            vals[key] += [-(cp + cm)]
            for coef, (nb, cid, out) in zip((cp, cm), targets):
                rows[key].append(node[~out])
                cols[key].append(nb[~out])
                vals[key].append(coef[~out])
                brows[key].append(node[out])
                bcols[key].append(cid[out])
                bvals[key].append(coef[out])

        def assemble(r, c, v, ncols):
            return sp.csr_matrix(
                (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                shape=(count, ncols))

        lines_D = {k: assemble(rows[k], cols[k], vals[k], count) for k in LINES}
        lines_B = {k: assemble(brows[k], bcols[k], bvals[k], n_cut) for k in LINES}
        D = {"xx": lines_D["x"], "yy": lines_D["y"],
             "xy": ((lines_D["d"] - lines_D["e"]) * 0.5).tocsr()}
        B = {"xx": lines_B["x"], "yy": lines_B["y"],
             "xy": ((lines_B["d"] - lines_B["e"]) * 0.5).tocsr()}
        index = {(int(a), int(b)): k for k, (a, b) in enumerate(ij)}
        return cls(domain, h, ij, xy, np.concatenate(cut_xy), np.concatenate(cut_theta),
                   full, D, B, index, stencil)

    @property
    def size(self) -> int:
        return len(self.ij)

    @property
    def n_cut(self) -> int:
        return len(self.cut_xy)

    def node(self, i: int, j: int) -> int:
        """Interior index of lattice node ``(i, j)``."""
        try:
            return self.index[(int(i), int(j))]
        except KeyError:
            raise KeyError(f"lattice node ({i}, {j}) is not interior") from None

    def region(self, ratio: float = 0.5) -> np.ndarray:
        """Mask of nodes inside the concentric domain scaled by ``ratio``."""
        return self.domain.scaled(ratio).rho(self.xy[:, 0], self.xy[:, 1]) < 0

    def apply(self, values, boundary) -> np.ndarray:
        """Hessians ``(size, 2, 2)`` of the field with given interior/cut values."""
        u = np.asarray(values, dtype=float)
        b = np.broadcast_to(np.asarray(boundary, dtype=float), (self.n_cut,))
        w = np.concatenate([u, b])
        # difference form: cp (u+ - u0) + cm (u- - u0) annihilates constants exactly
        line = {}
        for key, (plus, minus, cp, cm) in self.stencil.items():
            line[key] = cp * (w[plus] - u) + cm * (w[minus] - u)
        hxx, hyy = line["x"], line["y"]
        hxy = 0.5 * (line["d"] - line["e"])
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def linear_operator(self, L) -> sp.csr_matrix:
        """Sparse matrix of ``w -> L^{ab} d_ab w`` with zero boundary values.

        ``L`` is the symmetric-convention gradient, so the mixed entry
        contributes ``2 L^{12} w_xy``.
        """
        L = np.asarray(L, dtype=float)
        return (sp.diags(L[:, 0, 0]) @ self.D["xx"] + sp.diags(L[:, 1, 1]) @ self.D["yy"]
                + sp.diags(2 * L[:, 0, 1]) @ self.D["xy"]).tocsr()

    def boundary_operator(self, L) -> sp.csr_matrix:
        L = np.asarray(L, dtype=float)
        return (sp.diags(L[:, 0, 0]) @ self.B["xx"] + sp.diags(L[:, 1, 1]) @ self.B["yy"]
                + sp.diags(2 * L[:, 0, 1]) @ self.B["xy"]).tocsr()


@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field on a :class:`DomainGrid`.

    The represented function is ``base + quad * |x|**2 / 2`` where ``base``
    is ``values`` at interior nodes and ``boundary`` at the cut points.  When
    ``extension`` (a smooth extension of the boundary data sampled at the
    interior nodes) is present, ``values`` holds the deviation from it and
    ``base = extension + values``; Hessians are then ``D values + D^2_h ext``,
    which keeps roundoff small next to short cut segments.  Keeping the
    quadratic shift symbolic makes ``v = u + |x|**2 / 2`` and its inverse exact.
    """

    grid: DomainGrid
    values: np.ndarray
    boundary: np.ndarray
    quad: float = 0.0
    extension: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        b = np.asarray(self.boundary, dtype=float)
        if v.shape != (self.grid.size,) or b.shape != (self.grid.n_cut,):
            raise ValueError("field shape does not match grid")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(b))):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "boundary", b)

    @classmethod
    def from_function(cls, grid: DomainGrid, fn, boundary_fn=None,
                      with_extension: bool = False) -> "GridField":
        bfn = boundary_fn or fn
        vals = _evaluate(fn, grid.xy)
        bnd = _evaluate(bfn, grid.cut_xy)
        if not with_extension:
            return cls(grid, vals, bnd)
        ext = _evaluate(bfn, grid.xy)
        dev = np.zeros_like(ext) if bfn is fn else vals - ext
        return cls(grid, dev, bnd, 0.0, ext)

    def nodal(self) -> np.ndarray:
        base = self.values if self.extension is None else self.extension + self.values
        if self.quad == 0:
            return base
        return base + self.quad * 0.5 * np.sum(self.grid.xy**2, -1)

    def boundary_nodal(self) -> np.ndarray:
        if self.quad == 0:
            return self.boundary
        return self.boundary + self.quad * 0.5 * np.sum(self.grid.cut_xy**2, -1)

    @cached_property
    def _extension_hessian(self):
        return self.grid.apply(self.extension, self.boundary)

    def hessians(self) -> np.ndarray:
        if self.extension is None:
            H = self.grid.apply(self.values, self.boundary)
        else:
            zero = np.zeros(self.grid.n_cut)
            H = self.grid.apply(self.values, zero) + self._extension_hessian
        if self.quad != 0:
            H = H + self.quad * np.eye(2)
        return H

    def with_values(self, values) -> "GridField":
        return replace(self, values=np.asarray(values, dtype=float))


def _evaluate(fn, pts: np.ndarray) -> np.ndarray:
    if callable(fn):
        out = np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float)
    else:
        out = np.asarray(fn, dtype=float)
    return np.broadcast_to(out, pts.shape[:1]).astype(float)


def discrete_hessian(u: GridField, node) -> np.ndarray:
    """Discrete Hessian at one interior node (index or lattice pair ``(i, j)``)."""
    k = u.grid.node(*node) if isinstance(node, tuple) else int(node)
    if not 0 <= k < u.grid.size:
        raise DiscretizationError(f"node {node} is not interior")
    return u.hessians()[k]


def hessian_field(u: GridField) -> np.ndarray:
    return u.hessians()
