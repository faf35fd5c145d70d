"""Continuity-path damped Newton solver for ``F(D^2 u) = f``, ``u = phi`` on the boundary.

The path starts from ``u0 = phi + R rho`` (a strictly convex lift of the
boundary data) whose own discrete image ``F(D^2_h u0)`` is the initial
right-hand side, and moves linearly to ``f``.  Each step runs Newton with
step halving until the iterate stays inside the ellipticity cone and the
sup-norm residual decreases.  This path is a numerical device; it is not an
existence argument.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .algebra import ConvergenceError, OperatorSpec, cone_check, op_gradient
from .grid import ConvexDomain, DomainGrid, GridField, _evaluate
from .linsolve import solve_scaled

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
CONE_MARGIN = 1e-8
DAMPING = 0.5
MIN_STEP = 1e-8
MAX_NEWTON = 40
CONTINUITY_STEPS = 10
MAX_BISECTION = 6
F_MARGIN = 1e-6
R_CAP = 2.0**16
PATH_RTOL = 1e-13


class PreconditionError(ValueError):
    pass


class SolveError(ArithmeticError):
    def __init__(self, message: str, report: "SolveReport", field: GridField | None = None):
        super().__init__(message)
        self.report = report
        self.field = field


@dataclass
class SolveReport:
    grid_h: float
    grid_nodes: int
    converged: bool = False
    reason: str = ""
    continuity_t: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    cone_margins: list = field(default_factory=list)
    final_residual: float = float("nan")
    min_eig_plus_one: float = float("nan")
    lift_factor: float = 1.0
    damping: float = DAMPING
    cone_margin: float = CONE_MARGIN
    tolerance: float = RESIDUAL_TOL
    linear_iterations: int = 0
    wall_time: float = 0.0

    def to_json(self) -> dict:
        doc = asdict(self)
        for k, v in doc.items():
            if isinstance(v, float) and not np.isfinite(v):
                doc[k] = None
        return doc


def residual(spec: OperatorSpec, u: GridField, rhs) -> np.ndarray:
    """Node-wise ``F(D^2_h u) - rhs``."""
    return spec.value(u.hessians()) - rhs_values(u.grid, rhs)


def rhs_values(grid: DomainGrid, rhs) -> np.ndarray:
    if isinstance(rhs, GridField):
        return rhs.nodal()
    return _evaluate(rhs, grid.xy)


def krylov_reduce(u: GridField) -> GridField:
    """``v = u + |x|**2 / 2``, so that ``D^2 v = D^2 u + I``."""
    return GridField(u.grid, u.values, u.boundary, u.quad + 1.0, u.extension)


def krylov_unreduce(v: GridField) -> GridField:
    """Inverse of :func:`krylov_reduce`."""
    return GridField(v.grid, v.values, v.boundary, v.quad - 1.0, v.extension)


def _cone(spec, H, eig_floor):
    res = cone_check(spec, H, CONE_MARGIN, eig_floor)
    return np.all(res.inside), float(np.min(res.margin_attained))


def _lift(spec, grid, base: GridField, rho, fmax, eig_floor):
    """Smallest ``R = 2**j`` with ``F(D^2(phi + R rho)) >= max f`` inside the cone."""
    R = 1.0
    while R <= R_CAP:
        w = base.with_values(R * rho)
        H = w.hessians()
        inside, _ = _cone(spec, H, eig_floor)
        if inside and np.all(spec.value(H) >= fmax):
            return R, w
        R *= 2.0
    raise PreconditionError(f"no cone-interior supersolution lift up to R = {R_CAP:g}")


def _newton(spec, u: GridField, rhs, report: SolveReport, eig_floor, tol=RESIDUAL_TOL):
    """Damped Newton at fixed right-hand side; returns the converged field."""
    grid = u.grid
    H = u.hessians()
    R = spec.value(H) - rhs
    norm = float(np.max(np.abs(R)))
    history, margins = [norm], []
    its = 0
    while norm > tol:
        if its >= MAX_NEWTON:
            raise ConvergenceError(f"Newton exceeded {MAX_NEWTON} iterations", norm)
        L = op_gradient(spec, H)
        J = grid.linear_operator(L)
        # linear residual well below the Newton tolerance in F units
        atol = 1e-2 * RESIDUAL_TOL / np.max(np.abs(J.diagonal()))
        dw, _, lin = solve_scaled(J, -R, atol=atol)
        report.linear_iterations += lin
        s = 1.0
        while True:
            trial = u.with_values(u.values + s * dw)
            Ht = trial.hessians()
            inside, margin = _cone(spec, Ht, eig_floor)
            if inside:
                Rt = spec.value(Ht) - rhs
                nt = float(np.max(np.abs(Rt)))
                if nt < norm:
                    break
            s *= DAMPING
            if s < MIN_STEP:
                raise ConvergenceError("Newton stagnated: damping below minimum step", norm)
        u, H, R, norm = trial, Ht, Rt, nt
        history.append(norm)
        margins.append(margin)
        its += 1
    return u, its, history, margins


def solve_dirichlet(
    spec: OperatorSpec,
    domain: ConvexDomain,
    f,
    phi,
    h: float,
    continuity_steps: int = CONTINUITY_STEPS,
    *,
    allow_below_threshold: bool = False,
    eig_floor: float = -1.0,
    lift: float | None = None,
) -> tuple[GridField, SolveReport]:
    """Solve ``F(D^2 u) = f`` in ``domain`` with ``u = phi`` on the boundary.

    ``f`` and ``phi`` are constants or vectorised callables ``(x, y)``; ``phi``
    is evaluated at the cut points and, as a smooth extension, at interior
    nodes.  Requires ``f > n - 1`` on the closed domain unless
    ``allow_below_threshold``.  ``lift`` fixes the factor ``R`` of the
    starting guess instead of searching for it.
    """
    if spec.n != 2:
        raise PreconditionError("grid solves are two-dimensional")
    start = time.perf_counter()
    grid = DomainGrid.build(domain, h)
    f_nodes = _evaluate(f, grid.xy)
    f_cut = _evaluate(f, grid.cut_xy)
    fmin = float(min(f_nodes.min(), f_cut.min()))
    threshold = spec.n - 1 + F_MARGIN
    if fmin <= threshold and not allow_below_threshold:
        raise PreconditionError(
            f"f must exceed n-1={spec.n - 1} on the closed domain (min f = {fmin:.6g})")

    base = GridField.from_function(grid, phi, with_extension=True)
    rho = domain.rho(grid.xy[:, 0], grid.xy[:, 1])
    report = SolveReport(grid_h=float(h), grid_nodes=grid.size)
    fmax = float(max(f_nodes.max(), f_cut.max()))
    if lift is None:
        R, u = _lift(spec, grid, base, rho, fmax, eig_floor)
    else:
        R = float(lift)
        u = base.with_values(R * rho)
        if not _cone(spec, u.hessians(), eig_floor)[0]:
            raise PreconditionError("starting guess is outside the ellipticity cone")
    report.lift_factor = R
    rhs0 = spec.value(u.hessians())

    ts = list(np.linspace(0.0, 1.0, continuity_steps + 1)[1:])
    t_done = 0.0
    depth = {t: 0 for t in ts}
    while ts:
        t = ts[0]
        rhs = t * f_nodes + (1 - t) * rhs0
        # intermediate targets may be large (big lifts); only t = 1 needs the absolute tolerance
        tol = RESIDUAL_TOL if t == 1.0 else max(RESIDUAL_TOL, PATH_RTOL * float(np.max(np.abs(rhs))))
        try:
            u_new, its, hist, margins = _newton(spec, u, rhs, report, eig_floor, tol)
        except ConvergenceError as exc:
            d = depth[t]
            if d >= MAX_BISECTION:
                report.reason = f"continuity step to t={t:.6g} failed: {exc}"
                report.final_residual = exc.residual
                report.wall_time = time.perf_counter() - start
                raise SolveError(report.reason, report, u) from exc
            mid = 0.5 * (t_done + t)
            log.debug("bisecting continuity step %.6g -> %.6g", t_done, mid)
            depth[mid] = d + 1
            depth[t] = d + 1
            ts.insert(0, mid)
            continue
        ts.pop(0)
        u, t_done = u_new, t
        report.continuity_t.append(float(t))
        report.iterations.append(its)
        report.residual_history.append(hist)
        report.cone_margins.append(margins)

    H = u.hessians()
    final = residual(spec, u, f_nodes)
    report.final_residual = float(np.max(np.abs(final)))
    report.min_eig_plus_one = float(np.min(np.linalg.eigvalsh(H)[:, 0]) + 1.0)
    report.converged = report.final_residual <= RESIDUAL_TOL
    report.reason = "converged" if report.converged else "residual above tolerance"
    report.wall_time = time.perf_counter() - start
    return u, report


def solve_reduced(spec_reduced: OperatorSpec, domain, f, phi, h, **kw):
    """Solve the shifted problem for ``v = u + |x|**2/2`` and map back to ``u``.

    ``spec_reduced`` acts on ``D^2 v`` (for instance ``det - tr``) and ``f``
    is its right-hand side; the cone floor moves from ``-1`` to ``0``.
    """
    def phi_v(x, y):
        return _evaluate(phi, np.stack([x, y], -1)) + 0.5 * (x * x + y * y)

    kw.setdefault("allow_below_threshold", True)
    v, report = solve_dirichlet(spec_reduced, domain, f, phi_v, h, eig_floor=0.0, **kw)
    return krylov_unreduce(v), v, report
