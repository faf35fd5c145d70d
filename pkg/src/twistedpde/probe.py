"""Discrete Hölder seminorms of Hessian fields and their behaviour under refinement."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .algebra import ConvergenceError, OperatorSpec
from .concavity import PreconditionError as ConstantsError
from .concavity import estimate_constants
from .grid import ConvexDomain, DiscretizationError, GridField
from .solver import PreconditionError, SolveError, solve_dirichlet

log = logging.getLogger(__name__)

MAX_EXHAUSTIVE = 10**6
CHUNK = 2_000_000


@dataclass
class HolderReport:
    alpha: float
    region: dict
    seminorm: float
    pair: tuple | None
    pair_points: list | None
    h: float | None
    mode: dict
    pairs: int
    nodes: int

    def to_json(self) -> dict:
        return {
            "alpha": self.alpha,
            "region": self.region,
            "seminorm": self.seminorm,
            "argmax_pair": list(self.pair) if self.pair is not None else None,
            "argmax_points": self.pair_points,
            "h": self.h,
            "mode": self.mode,
            "pairs": self.pairs,
            "nodes": self.nodes,
        }


def _quotient(Hi, Hj, Pi, Pj, alpha):
    """``max |H_i - H_j| / |P_i - P_j|**alpha`` entrywise over the last two axes."""
    num = np.max(np.abs(Hi - Hj), axis=(-2, -1))
    d = Pi - Pj
    dist = np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])
    return num / dist**alpha


def _best(q, I, J, best):
    """Fold a block of quotients into ``best = (value, i, j)``; ties go to the smaller pair."""
    if q.size == 0:
        return best
    top = np.max(q)
    hit = np.flatnonzero(q == top)
    order = np.lexsort((J[hit], I[hit]))
    k = hit[order[0]]
    cand = (float(top), int(I[k]), int(J[k]))
    if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1:] < best[1:]):
        return cand
    return best


def holder_seminorm(
    hessians,
    alpha: float,
    region=0.5,
    *,
    points=None,
    max_exhaustive: int = MAX_EXHAUSTIVE,
    pairs: int | None = None,
    seed: int = 0,
) -> HolderReport:
    """Discrete ``[H]_{C^alpha}`` of a Hessian field over a subset of nodes.

    ``hessians`` is a :class:`GridField` (Hessians and node positions are
    taken from it, ``region`` is the ratio of the concentric sub-domain) or
    an array ``(N, n, n)`` together with ``points`` ``(N, 2)``; then
    ``region`` may also be a boolean mask or ``None`` for all nodes.

    All pairs are visited when there are at most ``max_exhaustive`` of them,
    otherwise ``pairs`` (default ``max_exhaustive``) uniform random pairs
    drawn with ``seed``.  The reported value is recomputed from the argmax
    pair, so that pair attains it exactly.
    """
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha!r}")
    h = None
    if isinstance(hessians, GridField):
        grid = hessians.grid
        H, P, h = hessians.hessians(), grid.xy, grid.h
        ratio = 0.5 if region is None else region
        if isinstance(ratio, np.ndarray):
            mask, region_doc = ratio.astype(bool), {"kind": "mask"}
        else:
            mask = grid.region(float(ratio))
            region_doc = {"kind": "scaled", "ratio": float(ratio), "domain": grid.domain.to_dict()}
    else:
        H = np.asarray(hessians, dtype=float)
        if points is None:
            raise PreconditionError("node positions are required for a bare Hessian array")
        P = np.asarray(points, dtype=float)
        if region is None:
            mask, region_doc = np.ones(len(H), dtype=bool), {"kind": "all"}
        elif isinstance(region, np.ndarray):
            mask, region_doc = region.astype(bool), {"kind": "mask"}
        else:
            r = float(region)
            mask = np.hypot(P[:, 0], P[:, 1]) < r
            region_doc = {"kind": "ball", "radius": r}
    if H.ndim == 2:
        H = H[:, None, None]
    nodes = np.flatnonzero(mask)
    m = len(nodes)
    if m == 0:
        raise PreconditionError("empty region")
    total = m * (m - 1) // 2
    best = None
    if total <= max_exhaustive:
        mode = {"kind": "exhaustive"}
        rows = max(1, CHUNK // max(m, 1))
        for a in range(0, m, rows):
            ia = np.arange(a, min(a + rows, m))
            I, J = np.meshgrid(ia, np.arange(m), indexing="ij")
            keep = J > I
            I, J = nodes[I[keep]], nodes[J[keep]]
            best = _best(_quotient(H[I], H[J], P[I], P[J], alpha), I, J, best)
        evaluated = total
    else:
        count = max_exhaustive if pairs is None else int(pairs)
        mode = {"kind": "random", "count": count, "seed": int(seed)}
        rng = np.random.default_rng(seed)
        a = rng.integers(0, m, size=count)
        b = (a + rng.integers(1, m, size=count)) % m
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        for s in range(0, count, CHUNK):
            I, J = nodes[lo[s:s + CHUNK]], nodes[hi[s:s + CHUNK]]
            best = _best(_quotient(H[I], H[J], P[I], P[J], alpha), I, J, best)
        evaluated = count
    if best is None:
        value, pair, pts = 0.0, None, None
    else:
        i, j = best[1], best[2]
        value = float(_quotient(H[i], H[j], P[i], P[j], alpha))
        pair, pts = (i, j), [P[i].tolist(), P[j].tolist()]
    return HolderReport(float(alpha), region_doc, value, pair, pts,
                        None if h is None else float(h), mode, int(evaluated), int(m))


@dataclass
class RefinementTable:
    rows: list = field(default_factory=list)

    COLUMNS = ("h", "alpha", "seminorm", "gamma", "Gamma", "G_sup", "hess_sup", "status")

    def to_json(self) -> dict:
        return {"columns": list(self.COLUMNS), "rows": self.rows}

    def format(self) -> str:
        def cell(v):
            if v is None:
                return "nan"
            if isinstance(v, float):
                return f"{v:.10e}"
            return str(v)
        lines = [" ".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(" ".join(cell(r[c]) for c in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def seminorms(self, alpha: float) -> list:
        return [r["seminorm"] for r in self.rows if r["alpha"] == alpha]


def refinement_study(
    spec: OperatorSpec,
    domain: ConvexDomain,
    f,
    phi,
    alphas,
    hs,
    *,
    ratio: float = 0.5,
    solve=None,
    seed: int = 0,
    max_exhaustive: int = MAX_EXHAUSTIVE,
    **solve_kw,
) -> RefinementTable:
    """Seminorms of ``D^2_h u`` on the concentric sub-domain for a list of grids.

    ``solve(h) -> GridField`` replaces the Dirichlet solve, for instance to
    inject an exact field.  A failed solve produces rows with status
    ``failed: <reason>`` and the study carries on.
    """
    hs = [float(h) for h in hs]
    if len(hs) < 3 or any(b >= a for a, b in zip(hs, hs[1:])):
        raise PreconditionError("h-list must be strictly descending with at least 3 entries")
    if solve is None:
        def solve(h):
            u, _ = solve_dirichlet(spec, domain, f, phi, h, **solve_kw)
            return u
    table = RefinementTable()
    for h in hs:
        try:
            u = solve(h)
        except (SolveError, ConvergenceError, DiscretizationError) as exc:
            log.warning("solve at h=%g failed: %s", h, exc)
            for a in alphas:
                table.rows.append({"h": h, "alpha": float(a), "seminorm": None, "gamma": None,
                                   "Gamma": None, "G_sup": None, "hess_sup": None,
                                   "status": f"failed: {type(exc).__name__}"})
            continue
        H = u.hessians()
        try:
            const = estimate_constants(spec, H)
            gamma, Gamma, G_sup = const.gamma, const.Gamma, const.G_sup
        except ConstantsError:
            gamma = Gamma = G_sup = None
        hess_sup = float(np.max(np.abs(H)))
        for a in alphas:
            rep = holder_seminorm(u, float(a), ratio, seed=seed, max_exhaustive=max_exhaustive)
            table.rows.append({"h": h, "alpha": float(a), "seminorm": rep.seminorm,
                               "gamma": gamma, "Gamma": Gamma, "G_sup": G_sup,
                               "hess_sup": hess_sup, "status": "ok"})
    return table
