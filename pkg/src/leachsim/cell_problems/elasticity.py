"""Elastic cell problem on the grain and the effective stiffness tensor.

Trilinear finite elements on the solid voxels (a voxel is one element).
For the symmetric diad ``J^{ij} = (e_i e_j + e_j e_i)/2`` the corrector
``W^{ij}`` satisfies, for every test field ``phi`` on the grain,

    int D(W):D(phi) + c_s^2 div W div phi = -int J^{ij}:D(phi),

which is the weak form of the traction-free grain problem. The operator
is singular on rigid motions; CG runs in their orthogonal complement and
a final 6x6 correction sets the mean displacement and the mean rotation
of each corrector to zero.

Two tensors are assembled. ``N_paper`` is the sum over ordered pairs of
``int D(W^{ij}) (x) D(W^{ij})`` scaled by ``lambda0``. ``N_energy`` is the
quadratic form of the cell response,

    lambda0 [ m(r) J^{ab}:J^{cd}
              + int_{Y_s} (J^{ab} + D W^{ab}):(J^{cd} + D W^{cd})
              + c_s^2 div W^{ab} div W^{cd} ],

where the pore phase carries the macroscopic strain without a corrector.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, InputError, NumericalError
from ..fem import (
    MANDEL_IDENTITY,
    VOIGT_PAIRS,
    Q1ElasticityOperator,
    isotropic_material,
    mandel_to_tensor,
    sym_to_mandel,
)
from ..geometry import UnitCellMask, porosity
from ..numerics import cg_solve, orthonormalize

logger = logging.getLogger(__name__)


def basis_diad(i: int, j: int) -> np.ndarray:
    J = np.zeros((3, 3))
    J[i, j] += 0.5
    J[j, i] += 0.5
    return J


@dataclass(eq=False)
class ElasticCellSolution:
    W_s: np.ndarray  # (6 Voigt pairs, 3, n+1, n+1, n+1) nodal displacements
    node_coordinates: np.ndarray  # (n+1,) node positions along each axis
    N_energy: np.ndarray  # (3, 3, 3, 3)
    N_paper: np.ndarray  # (3, 3, 3, 3)
    solid_volume: float
    mean_displacement: np.ndarray  # (6, 3) residual constraint values
    mean_rotation: np.ndarray  # (6, 3)

    def corrector(self, i: int, j: int) -> np.ndarray:
        """Nodal field of ``W^{ij}`` (equal to ``W^{ji}``)."""
        key = (min(i, j), max(i, j))
        for k, (a, b) in enumerate(VOIGT_PAIRS):
            if (min(a, b), max(a, b)) == key:
                return self.W_s[k]
        raise InputError(f"no corrector for indices {(i, j)}")


def _rigid_modes(coords: np.ndarray, free: np.ndarray) -> list[np.ndarray]:
    X = np.meshgrid(coords, coords, coords, indexing="ij")
    modes = []
    for c in range(3):
        u = np.zeros(free.shape)
        u[c] = 1.0
        modes.append(u)
    for k in range(3):
        # u = e_k x X
        u = np.zeros(free.shape)
        a, b = (k + 1) % 3, (k + 2) % 3
        u[b] = X[a]
        u[a] = -X[b]
        modes.append(u)
    return [np.where(free, u, 0.0) for u in modes]


def _constraints(op: Q1ElasticityOperator, u: np.ndarray) -> np.ndarray:
    """Integrals of the displacement and of the skew gradient over the grain."""
    vol = op.element.h**3
    mean_u = (op.element_means(u) * op.elements).sum(axis=(1, 2, 3)) * vol
    G = (op.element_gradients(u) * op.elements).sum(axis=(2, 3, 4)) * vol
    rot = np.array([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]]) * 0.5
    return np.concatenate([mean_u, rot])


def solve_elasticity_cell(
    mask: UnitCellMask,
    lambda0: float = 1.0,
    c_s: float = 1.0,
    tol: float = 1e-10,
    forcing_scale: float = 1.0,
) -> ElasticCellSolution:
    """Solve the six symmetric elastic correctors and assemble both tensors.

    ``forcing_scale`` multiplies every ``J^{ij}``; zero gives the trivial
    problem and exactly zero tensors.

    Raises:
        InputError: ``lambda0 <= 0`` or ``c_s <= 0``.
        ConvergenceError: CG failed for one of the correctors.
        NumericalError: the forcing is not orthogonal to the rigid motions.
    """
    if not lambda0 > 0:
        raise InputError(f"lambda0 must be positive, got {lambda0}")
    if not c_s > 0:
        raise InputError(f"c_s must be positive, got {c_s}")
    n, h = mask.n, mask.h
    shift = n // 2
    # grain-centred, non-wrapping element layout
    solid = np.roll(mask.solid, (shift, shift, shift), axis=(0, 1, 2))
    coords = (np.arange(n + 1) - shift) / n - 0.5 * h
    c2 = c_s**2
    op = Q1ElasticityOperator(n, h, isotropic_material(c2), elements=solid)
    rigid = _rigid_modes(coords, op.free)
    op.nullspace = orthonormalize(rigid)
    if len(op.nullspace) != 6:
        raise NumericalError("grain too small to support six rigid motions")
    R = np.array([_constraints(op, u) for u in rigid]).T  # (6 constraints, 6 modes)

    W = np.zeros((6,) + op.shape)
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        J = forcing_scale * basis_diad(i, j)
        b = op.load(sym_to_mandel(J))
        defect = max(abs(float(np.vdot(q, b))) for q in op.nullspace)
        if defect > 1e-10 * max(1.0, float(np.abs(b).max()) * np.sqrt(b.size)):
            raise NumericalError(f"forcing J{i + 1}{j + 1} not orthogonal to rigid motions ({defect:.2e})")
        try:
            u = cg_solve(op, b, tol=tol, max_iter=50000)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"elastic corrector W{i + 1}{j + 1} failed: {exc}", residual=exc.residual
            ) from exc
        u = u.reshape(op.shape)
        coef = np.linalg.solve(R, _constraints(op, u))
        for a in range(6):
            u = u - coef[a] * rigid[a]
        W[k] = u

    cons = np.array([_constraints(op, W[k]) for k in range(6)])
    wq = op.element.weight
    strains = np.stack([op.strains(W[k]) for k in range(6)])  # (6, 8 qp, 6, n, n, n)
    strains = (strains * solid).reshape(6, 8, 6, -1)
    Jm = np.array([sym_to_mandel(forcing_scale * basis_diad(i, j)) for i, j in VOIGT_PAIRS])
    div = np.einsum("i,kqiv->kqv", MANDEL_IDENTITY, strains)
    nsolid = float(np.count_nonzero(solid))
    solid_volume = nsolid * h**3
    # int_{Y_s} (J+DW):(J+DW') = |Y_s| J:J' + int DW:J' + int J:DW' + int DW:DW'
    sum_strain = strains.sum(axis=(1, 3)) * wq  # (6, 6 mandel)
    G = (
        solid_volume * Jm @ Jm.T
        + sum_strain @ Jm.T
        + Jm @ sum_strain.T
        + wq * np.einsum("kqiv,lqiv->kl", strains, strains)
        + c2 * wq * np.einsum("kqv,lqv->kl", div, div)
    )
    G = lambda0 * (porosity(mask.r) * Jm @ Jm.T + G)
    G = 0.5 * (G + G.T)
    N_energy = _pairs_to_tensor(G)
    mult = np.array([1.0 if i == j else 2.0 for i, j in VOIGT_PAIRS])
    P = lambda0 * wq * np.einsum("k,kqiv,kqjv->ij", mult, strains, strains)
    N_paper = mandel_to_tensor(0.5 * (P + P.T))
    logger.debug("elasticity r=%.4f n=%d: |Y_s|=%.5f", mask.r, n, solid_volume)
    return ElasticCellSolution(W, coords, N_energy, N_paper, solid_volume, cons[:, :3], cons[:, 3:])


def _pairs_to_tensor(G: np.ndarray) -> np.ndarray:
    """Bilinear form on the basis diads -> fourth-rank tensor."""
    N = np.zeros((3, 3, 3, 3))
    for P, (a, b) in enumerate(VOIGT_PAIRS):
        for Q, (c, d) in enumerate(VOIGT_PAIRS):
            for p, q in {(a, b), (b, a)}:
                for s, t in {(c, d), (d, c)}:
                    N[p, q, s, t] = G[P, Q]
    return N
