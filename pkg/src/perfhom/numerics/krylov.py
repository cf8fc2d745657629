"""Conjugate-gradient kernels for semidefinite and saddle-point systems."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from ..errors import NonConvergence, RangeError

log = logging.getLogger(__name__)

Projector = Union[bool, Callable[[np.ndarray], np.ndarray], None]


@dataclass(frozen=True)
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual: float


@dataclass(frozen=True)
class SaddleResult:
    velocity: np.ndarray
    pressure: np.ndarray
    iterations: int
    div_residual: float
    momentum_residual: float


def _mean_projector(v):
    return v - v.mean()


def _resolve_projector(projector: Projector):
    if projector is True:
        return _mean_projector
    if projector in (False, None):
        return None
    return projector


def _default_cap(rhs: np.ndarray) -> int:
    n = rhs.shape[0] if rhs.ndim > 1 else int(np.ceil(np.sqrt(rhs.size)))
    return 50 * max(n, 1)


def solve_spd(
    apply: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-10,
    maxiter: Optional[int] = None,
    precond: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    projector: Projector = False,
    x0: Optional[np.ndarray] = None,
    range_rtol: float = 1e-10,
    atol: float = 0.0,
) -> KrylovResult:
    """Preconditioned CG for a symmetric positive semidefinite operator.

    Parameters
    ----------
    apply : callable
        Operator action; maps arrays of ``rhs.shape`` to the same shape.
    rhs : ndarray
        Right-hand side.
    tol : float
        Target relative residual ``||b - A x|| / ||b||``.
    maxiter : int, optional
        Iteration cap, ``50 * N`` by default where ``N`` is the grid side.
    precond : callable, optional
        SPD preconditioner action.
    projector : bool or callable
        Orthogonal projector onto the admissible subspace.  ``True`` removes
        the mean, which is the right choice for periodic Laplacians.
    x0 : ndarray, optional
        Initial guess.
    range_rtol : float
        Relative size of the rhs component outside the projector's range
        that triggers :class:`RangeError`.
    atol : float
        Absolute residual floor; iteration also stops once ``||r|| <= atol``.

    Returns
    -------
    KrylovResult
    """
    b = np.asarray(rhs, dtype=float)
    P = _resolve_projector(projector)
    if P is not None:
        pb = P(b)
        bn = np.linalg.norm(b)
        if np.linalg.norm(b - pb) > range_rtol * max(bn, np.finfo(float).tiny):
            raise RangeError("right-hand side is not in the range of the operator")
        b = pb
    bnorm = np.linalg.norm(b)
    if bnorm <= atol:
        return KrylovResult(np.zeros_like(b), 0, 0.0)
    cap = maxiter if maxiter is not None else _default_cap(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply(x) if x0 is not None else b.copy()
    if P is not None:
        r = P(r)
    z = precond(r) if precond is not None else r
    if P is not None and precond is not None:
        z = P(z)
    p = z.copy()
    rz = float(np.vdot(r, z))
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol and res * bnorm > atol:
        if it >= cap:
            raise NonConvergence(f"CG stalled at relative residual {res:.3e}", it, res)
        Ap = apply(p)
        if P is not None:
            Ap = P(Ap)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0.0:
            raise NonConvergence("operator is not positive on the search direction", it, res)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        z = precond(r) if precond is not None else r
        if P is not None and precond is not None:
            z = P(z)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovResult(x, it, float(res))


def solve_saddle(
    visc_op: Callable[[np.ndarray], np.ndarray],
    div_op: Callable[[np.ndarray], np.ndarray],
    grad_op: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-10,
    visc_solve: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    velocity_projector: Projector = None,
    maxiter: Optional[int] = None,
    inner_tol: Optional[float] = None,
) -> SaddleResult:
    """Schur-complement (Uzawa) CG for ``A v + G p = f``, ``D v = 0``.

    ``D`` must equal ``-G^T`` so that the pressure Schur complement
    ``-D A^{-1} G`` is symmetric positive semidefinite; its constant null
    space is removed by projecting onto zero-mean pressures.

    Parameters
    ----------
    visc_op, div_op, grad_op : callable
        Actions of ``A``, ``D`` and ``G`` on flat or shaped arrays.
    rhs : ndarray
        Momentum right-hand side ``f``.
    tol : float
        Outer relative residual target.
    visc_solve : callable, optional
        Exact or accurate action of ``A^{-1}``; CG on ``A`` otherwise.
    velocity_projector : bool or callable, optional
        Projector passed to the inner CG when ``A`` is only semidefinite.
    maxiter : int, optional
        Cap on outer iterations.
    inner_tol : float, optional
        Inner CG tolerance, ``tol * 1e-3`` by default.

    Returns
    -------
    SaddleResult
        Velocity, zero-mean pressure, iteration count and the achieved
        divergence and momentum residuals (relative).
    """
    f = np.asarray(rhs, dtype=float)
    itol = inner_tol if inner_tol is not None else max(tol * 1e-3, 1e-14)
    if visc_solve is None:
        def visc_solve(b):
            return solve_spd(visc_op, b, tol=itol, projector=velocity_projector).x

    npress = np.asarray(div_op(np.zeros_like(f))).shape
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return SaddleResult(np.zeros_like(f), np.zeros(npress), 0, 0.0, 0.0)

    def schur(p):
        return -div_op(visc_solve(grad_op(p)))

    b = -div_op(visc_solve(f))
    b = b - b.mean()
    if np.linalg.norm(b) <= 1e-15 * fnorm:
        p = np.zeros(npress)
        outer_its = 0
    else:
        cap = maxiter if maxiter is not None else max(200, _default_cap(b))
        out = solve_spd(schur, b, tol=tol * 1e-3, maxiter=cap, projector=True)
        p, outer_its = out.x, out.iterations
    p = p - p.mean()
    v = visc_solve(f - grad_op(p))
    vnorm = np.linalg.norm(v)
    div_res = float(np.linalg.norm(div_op(v)) / vnorm) if vnorm > 0 else 0.0
    mom = visc_op(v) + grad_op(p) - f
    mom_res = float(np.linalg.norm(mom) / fnorm)
    if div_res > tol or mom_res > tol:
        log.warning("saddle residuals above tolerance: div %.2e, momentum %.2e", div_res, mom_res)
    return SaddleResult(v, p, outer_its, div_res, mom_res)
