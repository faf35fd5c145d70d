"""Krylov solve of the linearised 9-point operator ``L^{ab} d_ab w = r``."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .algebra import ConvergenceError
from .grid import DomainGrid

LINEAR_TOL = 1e-12
LINEAR_MAXITER = 10_000


def bicgstab(S, b, x0, tol: float, atol: float, maxiter: int, seed: int = 0):
    """BiCGSTAB on ``S x = b`` (van der Vorst), restarted on breakdown.

    The shadow residual is a fixed pseudo-random vector rather than the
    initial residual, which avoids the early ``rho = 0`` breakdowns seen on
    symmetric right-hand sides.  Returns ``(x, iterations)``.
    """
    rng = np.random.default_rng(seed)
    bnorm = np.linalg.norm(b)
    stop = max(tol * bnorm, atol)
    x = x0.copy()
    r = b - S @ x
    its = 0
    while its < maxiter and np.linalg.norm(r) > stop:
        shadow = rng.standard_normal(b.shape)
        rho_old = alpha = omega = 1.0
        v = np.zeros_like(b)
        p = np.zeros_like(b)
        while its < maxiter:
            rho = shadow @ r
            if abs(rho) < 1e-300 or omega == 0:
                break
            beta = (rho / rho_old) * (alpha / omega)
            p = r + beta * (p - omega * v)
            v = S @ p
            sv = shadow @ v
            if sv == 0:
                break
            alpha = rho / sv
            s = r - alpha * v
            its += 1
            if np.linalg.norm(s) <= stop:
                x += alpha * p
                r = s
                break
            t = S @ s
            tt = t @ t
            omega = (t @ s) / tt if tt > 0 else 0.0
            x += alpha * p + omega * s
            r = s - omega * t
            rho_old = rho
            if np.linalg.norm(r) <= stop:
                break
        # refresh the recursively updated residual before testing or restarting
        r = b - S @ x
    return x, its


def solve_scaled(J: sp.spmatrix, rhs, tol: float = LINEAR_TOL,
                 maxiter: int = LINEAR_MAXITER, x0=None,
                 atol: float = 0.0) -> tuple[np.ndarray, float, int]:
    """Jacobi-preconditioned BiCGSTAB: solve ``diag(J)^-1 J x = diag(J)^-1 rhs``.

    Returns ``(x, relative_residual, iterations)`` where the residual is the
    true residual of the scaled system.  ``atol`` (scaled units) accepts
    right-hand sides that are already at roundoff level.
    """
    J = sp.csr_matrix(J)
    d = J.diagonal()
    if np.any(d == 0):
        raise ConvergenceError("zero diagonal in linear operator", float("inf"))
    S = (sp.diags(1.0 / d) @ J).tocsr()
    b = np.asarray(rhs, dtype=float) / d
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0.0, 0
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).copy()
    x, used = bicgstab(S, b, x, tol, atol, maxiter)
    res = np.linalg.norm(b - S @ x)
    rel = res / bnorm
    if not (rel <= tol or res <= atol):
        raise ConvergenceError(
            f"BiCGSTAB reached relative residual {rel:.3e} after {used} iterations", float(rel))
    return x, float(rel), used


def linear_solve(grid: DomainGrid, L, rhs, boundary=None, tol: float = LINEAR_TOL,
                 maxiter: int = LINEAR_MAXITER) -> np.ndarray:
    """Solve ``L^{ab} d_ab w = rhs`` at interior nodes with ``w = boundary`` at cuts.

    ``L`` has shape ``(grid.size, 2, 2)`` (symmetric-convention gradient);
    ``boundary`` defaults to zero.
    """
    L = np.asarray(L, dtype=float)
    if L.shape == (2, 2):
        L = np.broadcast_to(L, (grid.size, 2, 2))
    r = np.broadcast_to(np.asarray(rhs, dtype=float), (grid.size,)).copy()
    if boundary is not None:
        r -= grid.boundary_operator(L) @ np.broadcast_to(boundary, (grid.n_cut,))
    x, _, _ = solve_scaled(grid.linear_operator(L), r, tol, maxiter)
    return x
