"""Sampled certification of weak concavity and the subsolution inequality.

Samples are drawn up front from one seeded generator and evaluated in
chunks; violations are merged by sample index, so a certificate does not
depend on ``workers``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .algebra import (
    OperatorSpec,
    SigmaTerm,
    TraceTerm,
    preset_prop24,
    op_gradient,
    op_hessian_bilinear,
)
from .transforms import Composite, PowerRoot, ScalarTransform, TransformError

SPD_EPS = 1e-3
CONCAVITY_TOL = 1e-10
SANDWICH_TOL = 1e-12
LEMMA_TOL = 1e-10
SEGMENT_FRACTION = 0.1
MAX_WITNESSES = 20


class PreconditionError(ValueError):
    pass


@dataclass
class Certificate:
    name: str
    samples_run: int
    seed: int
    violations: list = field(default_factory=list)
    max_violation: float = -math.inf
    constant_c: float | None = None
    skipped: int = 0
    tolerance: float = 0.0
    spd_epsilon: float | None = None

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "pass": self.passed,
            "samples": self.samples_run,
            "seed": self.seed,
            "skipped": self.skipped,
            "tolerance": self.tolerance,
            "max_violation": _json_float(self.max_violation),
            "constant_c": _json_float(self.constant_c),
            "spd_epsilon": self.spd_epsilon,
            "violation_count": len(self.violations),
            "witnesses": [_jsonable(v) for v in self.violations[:MAX_WITNESSES]],
        }


def _json_float(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# sampling


def sample_spd(rng: np.random.Generator, n: int, size: int, eps: float = SPD_EPS) -> np.ndarray:
    """Wishart-style ``R R^T + eps I`` with standard Gaussian ``R``."""
    R = rng.standard_normal((size, n, n))
    return R @ np.swapaxes(R, -1, -2) + eps * np.eye(n)


def sym_tensor3(T) -> np.ndarray:
    """Fully symmetric 3-tensor from the entries ``T[a, i, j]`` with a <= i <= j.

    Every permutation of an index triple reads the same canonical entry, so
    the symmetry is exact.
    """
    T = np.asarray(T, dtype=float)
    n = T.shape[-1]
    idx = np.indices((n, n, n)).reshape(3, -1)
    s = np.sort(idx, axis=0)
    canon = T[..., s[0], s[1], s[2]]
    return canon.reshape(T.shape[:-3] + (n, n, n))


def random_tensor3(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    return sym_tensor3(rng.standard_normal((size, n, n, n)))


def _chunks(count: int, workers: int):
    size = max(1, -(-count // max(1, workers)))
    return [slice(i, min(i + size, count)) for i in range(0, count, size)]


def _map_chunks(fn, count: int, workers: int):
    parts = _chunks(count, workers)
    if workers <= 1:
        return [fn(s) for s in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, parts))


def _sandwich_ratio(spec: OperatorSpec, G: ScalarTransform, M: np.ndarray) -> float | None:
    """Empirical min of ``G(sum y) / sum G(y)`` over the sampled matrices."""
    y = spec.term_values(M)
    if y.shape[-1] == 0:
        return None
    ok = np.all(y >= G.value_domain_lo(), axis=-1)
    if not np.any(ok):
        return None
    y = y[ok]
    den = np.sum(G.value(y), axis=-1)
    num = G.value(np.sum(y, axis=-1))
    good = den > 0
    return float(np.min(num[good] / den[good])) if np.any(good) else None


# ---------------------------------------------------------------------------
# concavity of G o F_alpha


def _term(spec: OperatorSpec, term_index):
    if term_index == "convex":
        if spec.A is None:
            raise PreconditionError("operator has no linear part")
        return TraceTerm(spec.A)
    return spec.terms[term_index]


def check_transform_concavity(
    spec: OperatorSpec,
    term_index,
    samples: int = 10_000,
    seed: int = 0,
    *,
    transform: ScalarTransform | None = None,
    eps: float = SPD_EPS,
    workers: int = 1,
    name: str | None = None,
) -> Certificate:
    """Sample midpoint concavity of ``G(F(M))`` over SPD pairs.

    A tenth of the samples use a uniform segment parameter instead of 1/2.
    Samples whose term values leave the transform's domain are skipped.
    ``term_index`` indexes ``spec.terms`` or is ``"convex"`` for the linear
    part.
    """
    G = transform or spec.transform
    if G is None:
        raise PreconditionError("no transform to certify")
    term = _term(spec, term_index)
    rng = np.random.default_rng(seed)
    M1 = sample_spd(rng, spec.n, samples, eps)
    M2 = sample_spd(rng, spec.n, samples, eps)
    seg = rng.random(samples) < SEGMENT_FRACTION
    t = np.where(seg, rng.random(samples), 0.5)
    lo = G.value_domain_lo()

    def run(s: slice):
        a, b, ts = M1[s], M2[s], t[s]
        mid = ts[:, None, None] * a + (1 - ts)[:, None, None] * b
        fa, fb, fm = term.value(a), term.value(b), term.value(mid)
        ok = (fa >= lo) & (fb >= lo) & (fm >= lo) & G.in_domain(np.maximum(fa, fb))
        lhs = np.full(fa.shape, np.nan)
        rhs = np.full(fa.shape, np.nan)
        lhs[ok] = G.value(fm[ok])
        rhs[ok] = ts[ok] * G.value(fa[ok]) + (1 - ts[ok]) * G.value(fb[ok])
        return ok, rhs - lhs

    results = _map_chunks(run, samples, workers)
    ok = np.concatenate([r[0] for r in results])
    gap = np.concatenate([r[1] for r in results])
    cert = Certificate(
        name or f"concavity[{spec.name}:{term_index}]",
        samples,
        seed,
        tolerance=CONCAVITY_TOL,
        spd_epsilon=eps,
        skipped=int(np.count_nonzero(~ok)),
    )
    if np.any(ok):
        cert.max_violation = float(np.max(gap[ok]))
    for i in np.flatnonzero(ok & (gap > CONCAVITY_TOL)):
        cert.violations.append(
            {"index": int(i), "t": float(t[i]), "M1": M1[i], "M2": M2[i],
             "value": float(gap[i]), "tolerance": CONCAVITY_TOL}
        )
    cert.constant_c = _sandwich_ratio(spec, G, M1)
    return cert


# ---------------------------------------------------------------------------
# sandwich bound


class SandwichResult(NamedTuple):
    lhs: np.ndarray | float
    mid: np.ndarray | float
    rhs: np.ndarray | float
    ok: np.ndarray | bool


def check_sandwich(values, G: ScalarTransform, tol: float = SANDWICH_TOL) -> SandwichResult:
    """``sum G(y) >= G(sum y) >= 2**-m sum G(y)`` over the last axis of ``values``."""
    y = np.asarray(values, dtype=float)
    if y.ndim == 0:
        y = y[None]
    if np.any(y < 0):
        raise PreconditionError("sandwich bound needs nonnegative values")
    if np.any(y < G.value_domain_lo()):
        raise PreconditionError("values below the transform's domain")
    m = y.shape[-1]
    gsum = np.sum(G.value(y), axis=-1)
    mid = G.value(np.sum(y, axis=-1))
    rhs = gsum / 2.0**m
    ok = (gsum + tol >= mid) & (mid >= rhs - tol)
    if np.ndim(ok) == 0:
        return SandwichResult(float(gsum), float(mid), float(rhs), bool(ok))
    return SandwichResult(gsum, mid, rhs, ok)


def sandwich_sweep(
    samples: int = 10_000,
    seed: int = 0,
    m_values: Sequence[int] = (1, 2, 3, 4, 5),
    p_values: Sequence[int] = (2, 3, 4, 5, 6, 7, 8),
) -> Certificate:
    """Random nonnegative tuples against power roots ``x**(1/p)``."""
    from .transforms import PowerRoot

    rng = np.random.default_rng(seed)
    cert = Certificate("sandwich", 0, seed, tolerance=SANDWICH_TOL)
    ratios = []
    for p in p_values:
        G = PowerRoot(p)
        for m in m_values:
            # log-uniform magnitudes with exact zeros mixed in
            y = 10.0 ** rng.uniform(-6, 6, size=(samples, m))
            y[rng.random((samples, m)) < 0.05] = 0.0
            res = check_sandwich(y, G)
            cert.samples_run += samples
            gap = np.maximum(res.mid - res.lhs, res.rhs - res.mid)
            cert.max_violation = max(cert.max_violation, float(np.max(gap)))
            for i in np.flatnonzero(~res.ok):
                cert.violations.append(
                    {"p": p, "m": m, "values": y[i], "value": float(gap[i]),
                     "tolerance": SANDWICH_TOL}
                )
            pos = res.lhs > 0
            ratios.append(float(np.min(res.mid[pos] / res.lhs[pos])))
    cert.constant_c = min(ratios)
    return cert


# ---------------------------------------------------------------------------
# transform chains


class ChainPremiseError(ValueError):
    def __init__(self, message: str, link: int, witness: float):
        super().__init__(f"{message} (link {link}, x={witness!r})")
        self.link = link
        self.witness = witness


@dataclass(frozen=True)
class TransformChain:
    links: tuple
    interval: tuple
    prefixes: tuple
    certificates: tuple = ()

    @property
    def composed(self) -> ScalarTransform:
        return self.prefixes[-1]


def build_chain(
    links: Sequence[ScalarTransform],
    interval: tuple[float, float],
    spec: OperatorSpec | None = None,
    samples: int = 2_000,
    seed: int = 0,
    points: int = 10_000,
) -> TransformChain:
    """Compose ``H_k = G_k o ... o G_1`` after checking the chain premises.

    On the compact ``interval`` (and its successive images) each link must
    satisfy ``G >= 0`` and ``G' >= 1`` and map into the next link's domain.
    With ``spec`` given, ``H_m o F_alpha`` is certified midpoint-concave for
    every term, using samples whose term values stay inside ``interval``.
    """
    links = tuple(links)
    if not links:
        raise ValueError("empty chain")
    lo, hi = map(float, interval)
    if lo < 0 or hi <= lo:
        raise ValueError("interval must satisfy 0 <= lo < hi")
    x = np.linspace(lo, hi, points)
    for i, g in enumerate(links):
        outside = (x < g.value_domain_lo()) | (x > g.domain_hi)
        if np.any(outside):
            raise ChainPremiseError("image escapes link domain", i, float(x[outside][0]))
        xd = x[x >= g.domain_lo]
        g1 = g.d1(xd)
        if np.any(g1 < 1):
            raise ChainPremiseError("G' < 1", i, float(xd[np.argmax(g1 < 1)]))
        gx = g.value(x)
        if np.any(gx < 0):
            raise ChainPremiseError("G < 0", i, float(x[np.argmax(gx < 0)]))
        x = gx
    prefixes = []
    for k in range(1, len(links) + 1):
        prefixes.append(links[0] if k == 1 else
                        Composite(links[:k], max(lo, links[0].domain_lo), hi))
    certs = []
    if spec is not None:
        H = prefixes[-1]
        for a, term in enumerate(spec.terms):
            certs.append(_interval_concavity(term, H, spec.n, (lo, hi), samples, seed + a,
                                             f"chain[{a}]"))
    return TransformChain(links, (lo, hi), tuple(prefixes), tuple(certs))


def _interval_concavity(term, G, n, interval, samples, seed, name) -> Certificate:
    """Midpoint concavity of ``G o term`` on samples rescaled into ``interval``."""
    lo, hi = interval
    rng = np.random.default_rng(seed)
    M1 = sample_spd(rng, n, samples)
    M2 = sample_spd(rng, n, samples)
    deg = getattr(term, "k", 1)
    # rescale so the term values land in the middle half of the interval
    for M in (M1, M2):
        target = rng.uniform(lo + 0.25 * (hi - lo), lo + 0.5 * (hi - lo), samples)
        M *= ((target / term.value(M)) ** (1.0 / deg))[:, None, None]
    mid = 0.5 * (M1 + M2)
    fa, fb, fm = term.value(M1), term.value(M2), term.value(mid)
    ok = (np.minimum(np.minimum(fa, fb), fm) >= max(lo, G.domain_lo)) & (
        np.maximum(np.maximum(fa, fb), fm) <= hi)
    cert = Certificate(name, samples, seed, tolerance=CONCAVITY_TOL,
                       skipped=int(np.count_nonzero(~ok)))
    gap = 0.5 * (G.value(fa[ok]) + G.value(fb[ok])) - G.value(fm[ok])
    if gap.size:
        cert.max_violation = float(np.max(gap))
    for i, g in zip(np.flatnonzero(ok), gap):
        if g > CONCAVITY_TOL:
            cert.violations.append({"index": int(i), "value": float(g),
                                    "tolerance": CONCAVITY_TOL})
    return cert


# ---------------------------------------------------------------------------
# linearised subsolution inequality


def _bilinear_table(F, M, T):
    """``Q[..., a, b] = D^2F(M)[T_a, T_b]`` for the slices ``T_a = T[..., a, :, :]``."""
    n = M.shape[-1]
    a_idx, b_idx = np.triu_indices(n)
    Ta = T[..., a_idx, :, :]
    Tb = T[..., b_idx, :, :]
    vals = op_hessian_bilinear(F, M[..., None, :, :], Ta, Tb)
    Q = np.zeros(M.shape)
    Q[..., a_idx, b_idx] = vals
    Q[..., b_idx, a_idx] = vals
    return Q


def lemma31_form(spec: OperatorSpec, M, T) -> np.ndarray | float:
    """Pointwise value of ``L(sum_alpha G(F_alpha(D^2u)))`` after the cancellation.

    With ``v_a = F_alpha^{ij} T_aij`` and ``Q_alpha[a, b] = F_alpha^{ijrs}
    T_aij T_brs`` the expression is, summed over alpha,

        F_cup^{ab} (G'' v_a v_b + G' Q_alpha[a, b])
        + sum_beta F_beta^{ab} G'' v_a v_b
        - G' F_alpha^{ab} Q_cup[a, b]

    with ``G', G''`` taken at ``F_alpha(M)``.  All derivatives of the
    operator come from :func:`op_gradient` and :func:`op_hessian_bilinear`.
    """
    G = spec.transform
    if G is None:
        raise PreconditionError("spec has no transform")
    M = np.asarray(M, dtype=float)
    T = np.asarray(T, dtype=float)
    M, _ = np.broadcast_arrays(M, T[..., 0, :, :])
    M = np.ascontiguousarray(M)
    y = spec.term_values(M)
    if np.any(y < G.domain_lo):
        raise PreconditionError("term value below the transform's domain")

    if spec.A is not None:
        cup = TraceTerm(spec.A)
        L_cup = op_gradient(cup, M)
        Q_cup = _bilinear_table(cup, M, T)
    else:
        L_cup = np.zeros(M.shape)
        Q_cup = np.zeros(M.shape)

    grads = [op_gradient(t, M) for t in spec.terms]
    L_cap = sum(grads) if grads else np.zeros(M.shape)
    total = np.zeros(M.shape[:-2])
    for a, (term, grad) in enumerate(zip(spec.terms, grads)):
        g1 = G.d1(y[..., a])
        g2 = G.d2(y[..., a])
        v = np.einsum("...ij,...aij->...a", grad, T)
        vv = v[..., :, None] * v[..., None, :]
        Q = _bilinear_table(term, M, T)
        first = np.einsum("...ab,...ab->...", L_cup, g2[..., None, None] * vv
                          + g1[..., None, None] * Q)
        second = g2 * np.einsum("...ab,...ab->...", L_cap, vv)
        third = -g1 * np.einsum("...ab,...ab->...", grad, Q_cup)
        total = total + first + second + third
    return float(total) if total.ndim == 0 else total


def lemma31_sweep(
    spec: OperatorSpec,
    samples: int = 10_000,
    seed: int = 0,
    *,
    eps: float = SPD_EPS,
    workers: int = 1,
    chunk: int = 500,
    name: str | None = None,
) -> Certificate:
    """Certify ``lemma31_form <= LEMMA_TOL`` on random (SPD M, symmetric T)."""
    rng = np.random.default_rng(seed)
    M = sample_spd(rng, spec.n, samples, eps)
    T = random_tensor3(rng, spec.n, samples)
    parts = [slice(i, min(i + chunk, samples)) for i in range(0, samples, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(lambda s: lemma31_form(spec, M[s], T[s]), parts))
    else:
        vals = [lemma31_form(spec, M[s], T[s]) for s in parts]
    vals = np.concatenate([np.atleast_1d(v) for v in vals])
    cert = Certificate(name or f"lemma31[{spec.name}]", samples, seed,
                       tolerance=LEMMA_TOL, spd_epsilon=eps,
                       max_violation=float(np.max(vals)))
    for i in np.flatnonzero(vals > LEMMA_TOL):
        cert.violations.append({"index": int(i), "M": M[i], "T": T[i],
                                "value": float(vals[i]), "tolerance": LEMMA_TOL})
    if spec.transform is not None:
        cert.constant_c = _sandwich_ratio(spec, spec.transform, M)
    return cert


def random_prop24(n: int, seed: int = 0) -> OperatorSpec:
    """``tr(A M) + sum_k f_k sigma_{k,B_k}(M)`` with seeded SPD ``A, B_k`` and ``f_k`` in [0.5, 2]."""
    rng = np.random.default_rng(seed)
    A = sample_spd(rng, n, 1)[0]
    Bs = list(sample_spd(rng, n, n - 1))
    weights = list(rng.uniform(0.5, 2.0, n - 1))
    return preset_prop24(A, Bs, weights)


def concavity_sweep(
    n_values: Sequence[int] = (2, 3, 4),
    samples: int = 10_000,
    seed: int = 0,
    *,
    workers: int = 1,
) -> list[Certificate]:
    """``sigma_{k,B}**(1/k)`` and ``sigma_{k,B}**(1/n)`` for every ``2 <= k <= n``.

    Each case draws its own SPD ``B`` from the seed, so the sweep is
    reproducible case by case.
    """
    certs = []
    case = 0
    for n in n_values:
        for k in range(2, n + 1):
            for p in sorted({k, n}):
                rng = np.random.default_rng([seed, case])
                B = sample_spd(rng, n, 1)[0]
                spec = OperatorSpec(n, None, (SigmaTerm(k, 1.0, B),), PowerRoot(p),
                                    f"sigma{k}B")
                certs.append(check_transform_concavity(
                    spec, 0, samples, seed + case, workers=workers,
                    name=f"concavity[n={n},k={k},p={p}]"))
                case += 1
    return certs


# ---------------------------------------------------------------------------
# structural constants on a Hessian field


@dataclass
class Constants:
    gamma: float | None
    Gamma: float | None
    W_interval: tuple[float, float]
    G_sup: float | None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "gamma": _json_float(self.gamma),
            "Gamma": _json_float(self.Gamma),
            "W_interval": [float(self.W_interval[0]), float(self.W_interval[1])],
            "G_sup": _json_float(self.G_sup),
            "notes": list(self.notes),
        }


def estimate_constants(spec: OperatorSpec, hessians, points: int = 10_000) -> Constants:
    """``gamma``, ``Gamma`` and the hull ``W`` over a field of Hessians.

    ``W`` is the hull of every term value and every partial sum of term
    values.  ``gamma = min G'`` over 10**4 points of ``W``; ``Gamma`` is the
    oscillation of ``G(-F_cup)``.  Quantities whose arguments leave the
    transform's domain are reported as ``None`` with a note.
    """
    G = spec.transform
    if G is None:
        raise PreconditionError("spec has no transform")
    H = np.asarray(hessians, dtype=float).reshape((-1, spec.n, spec.n))
    y = spec.term_values(H)
    partial = np.cumsum(y, axis=-1)
    everything = np.concatenate([y.ravel(), partial.ravel()])
    W = (float(np.min(everything)), float(np.max(everything)))
    notes = []
    gamma = G_sup = None
    if W[0] >= G.domain_lo and W[1] <= G.domain_hi:
        grid = np.linspace(W[0], W[1], points)
        gamma = float(np.min(G.d1(grid)))
        G_sup = float(np.max(np.abs(G.value(grid))))
    else:
        notes.append("W escapes the transform domain; gamma undefined")
    neg_cup = -spec.convex_value(H)
    Gamma = None
    if np.all(neg_cup >= G.value_domain_lo()) and np.all(neg_cup <= G.domain_hi):
        g = G.value(neg_cup)
        Gamma = float(np.max(g) - np.min(g))
    else:
        notes.append("-F_cup leaves the transform domain; Gamma undefined")
    return Constants(gamma, Gamma, W, G_sup, notes)
