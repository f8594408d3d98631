"""Periodic Stokes cell problem and the permeability matrix.

MAC staggered grid on the voxel mask: pressure in voxels, velocity
component ``d`` on the lower ``d``-face of each voxel. A face touching a
solid voxel is pinned to zero. For the viscous term, a pinned neighbour
along the component's own axis sits on the wall (weight 1); a pinned
neighbour across the axis is the mirror point of a wall half a voxel
away (weight 2), which places the no-slip surface on the voxel faces.

For divergence-free fields ``-div(mu1 D(W)) = -(mu1/2) lap W``, so the
momentum operator is the vector Laplacian with viscosity ``mu1/2``. The
saddle-point system is reduced to the pressure Schur complement and
solved by CG; every Schur product needs three component solves.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, InputError, NumericalError
from ..geometry import UnitCellMask, periodic_components
from ..numerics import StencilOperator, cg_solve

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class StokesCellSolution:
    W: np.ndarray  # (forcing i, component d, n, n, n) face velocities
    Pi: np.ndarray  # (forcing i, n, n, n) cell pressures, zero mean over fluid
    B_w: np.ndarray  # (3, 3)
    max_divergence: float
    outer_iterations: tuple[int, int, int]


def _pinned(solid: np.ndarray, d: int) -> np.ndarray:
    return solid | np.roll(solid, 1, axis=d)


def velocity_operator(mask: UnitCellMask, d: int, viscosity: float) -> StencilOperator:
    """Viscous operator for velocity component ``d`` (pinned rows decoupled)."""
    h = mask.h
    c = viscosity / h**2
    free = ~_pinned(mask.solid, d)
    diag = np.zeros(free.shape)
    faces = []
    for e in range(3):
        lower_nb_free = np.roll(free, 1, axis=e)
        upper_nb_free = np.roll(free, -1, axis=e)
        faces.append(np.where(free & lower_nb_free, c, 0.0))
        weight = c if e == d else 2.0 * c
        diag += weight * (free & ~lower_nb_free)
        diag += weight * (free & ~upper_nb_free)
    diag = np.where(free, diag, 6.0 * c)
    return StencilOperator(tuple(faces), diag)


def solve_stokes_cell(
    mask: UnitCellMask,
    mu1: float = 1.0,
    tol: float = 1e-10,
    inner_tol: float | None = None,
    max_iter: int = 500,
) -> StokesCellSolution:
    """Solve the three Stokes cell problems with unit body forces ``e^i``.

    ``b_ij`` is the quadrature of ``W^(i) . e^j`` over the fluid faces.

    Raises:
        InputError: ``mu1 <= 0`` or the fluid region is not connected.
        ConvergenceError: the pressure iteration or an inner solve stalls.
    """
    if not mu1 > 0:
        raise InputError(f"mu1 must be positive, got {mu1}")
    if not mask.solid.any():
        raise InputError("mask has no solid voxel; the Stokes cell problem is singular")
    if periodic_components(mask.fluid) != 1:
        raise InputError("fluid region of the cell is disconnected")
    inner_tol = min(1e-12, tol * 1e-2) if inner_tol is None else inner_tol
    h = mask.h
    n = mask.n
    fluid = mask.fluid
    nfluid = int(fluid.sum())
    pinned = [_pinned(mask.solid, d) for d in range(3)]
    ops = [velocity_operator(mask, d, 0.5 * mu1) for d in range(3)]

    def grad(p):
        return [np.where(pinned[d], 0.0, (p - np.roll(p, 1, axis=d)) / h) for d in range(3)]

    def neg_div(u):
        # adjoint of grad: sum_f (grad p)_f u_f = -sum_c p_c (div u)_c
        out = np.zeros((n, n, n))
        for d in range(3):
            out -= (np.roll(u[d], -1, axis=d) - u[d]) / h
        return np.where(fluid, out, 0.0)

    def project(p):
        p = np.where(fluid, p, 0.0)
        return p - fluid * (p.sum() / nfluid)

    def solve_velocity(f):
        out = []
        for d in range(3):
            try:
                out.append(cg_solve(ops[d], f[d], tol=inner_tol))
            except ConvergenceError as exc:
                raise ConvergenceError(
                    f"velocity solve (component {d}) failed: {exc}", residual=exc.residual
                ) from exc
        return out

    W = np.zeros((3, 3, n, n, n))
    Pi = np.zeros((3, n, n, n))
    iterations = []
    for i in range(3):
        force = [np.where(pinned[d], 0.0, 1.0 if d == i else 0.0) for d in range(3)]
        u0 = solve_velocity(force)
        g = project(neg_div(u0))
        p = np.zeros((n, n, n))
        r = g.copy()
        s = r.copy()
        rr = float(np.vdot(r, r))
        gnorm = np.sqrt(rr)
        it = 0
        while gnorm > 0 and np.sqrt(rr) > tol * gnorm:
            if it >= max_iter:
                raise ConvergenceError(
                    f"pressure iteration for forcing e{i + 1} did not converge",
                    residual=np.sqrt(rr) / gnorm,
                    iterations=it,
                )
            it += 1
            Ss = project(neg_div(solve_velocity(grad(s))))
            sSs = float(np.vdot(s, Ss))
            if not sSs > 0:
                raise NumericalError("pressure Schur complement lost positivity")
            alpha = rr / sSs
            p += alpha * s
            r -= alpha * Ss
            rr_new = float(np.vdot(r, r))
            s = r + (rr_new / rr) * s
            rr = rr_new
        correction = solve_velocity(grad(p))
        for d in range(3):
            W[i, d] = np.where(pinned[d], 0.0, u0[d] - correction[d])
        Pi[i] = project(p)
        iterations.append(it)
        logger.debug("stokes r=%.4f n=%d forcing %d: %d pressure iterations", mask.r, n, i, it)

    div = np.zeros((3, n, n, n))
    for i in range(3):
        for d in range(3):
            div[i] += (np.roll(W[i, d], -1, axis=d) - W[i, d]) / h
    max_div = float(np.abs(div).max())
    if max_div > 1e-8:
        raise ConvergenceError(f"discrete divergence {max_div:.2e} exceeds 1e-8", residual=max_div)
    B = W.sum(axis=(2, 3, 4)) * h**3
    return StokesCellSolution(W, Pi, B, max_div, tuple(iterations))
