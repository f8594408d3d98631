"""Periodic diffusion cell problem and the effective diffusivity.

Cell-centred finite volumes on the fluid voxels; faces between a fluid and
a solid voxel carry no flux, which is the discrete form of the Neumann
condition on the grain. The corrector ``C^i`` minimizes the face energy
``sum_faces |e^i . n + grad C^i|^2``, so the discrete weak form
``sum grad C^i . grad C^j = -sum e^j . grad C^i`` holds on fluid faces.

``B_c_energy`` integrates the constant ``e^i . e^j`` exactly (``m(r)``)
and the corrector terms by face quadrature. Together with the weak form
this gives ``B_c_energy + B_c_quadratic = m(r) I`` up to solver tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError, InputError
from ..geometry import UnitCellMask, periodic_components, porosity
from ..numerics import assemble_elliptic, cg_solve

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class DiffusionCellSolution:
    C: np.ndarray  # (i, n, n, n), zero mean over the fluid voxels, zero on solid
    B_c_energy: np.ndarray
    B_c_quadratic: np.ndarray
    face_measure: np.ndarray  # h^3 * number of fluid-fluid faces per direction

    @property
    def diffusivity(self) -> float:
        return float(np.trace(self.B_c_energy) / 3.0)


def _face_gradients(C: np.ndarray, open_faces, h: float) -> np.ndarray:
    """Gradient of a cell field on the lower faces; zero on closed faces."""
    return np.stack(
        [np.where(open_faces[d], (C - np.roll(C, 1, axis=d)) / h, 0.0) for d in range(3)]
    )


def solve_diffusion_cell(mask: UnitCellMask, tol: float = 1e-10) -> DiffusionCellSolution:
    """Solve the three periodic Neumann correctors with background gradients ``e^i``.

    Raises:
        InputError: the fluid region is disconnected.
        ConvergenceError: CG failed for one of the correctors.
    """
    if periodic_components(mask.fluid) != 1:
        raise InputError("fluid region of the cell is disconnected")
    h = mask.h
    fluid = mask.fluid
    op = assemble_elliptic(mask.grid, 1.0, active=fluid)
    # faces[d][c] = 1/h^2 exactly when both c - e_d and c are fluid
    open_faces = [w > 0 for w in op.faces]
    n = mask.n
    C = np.zeros((3, n, n, n))
    for i in range(3):
        w = op.faces[i]
        rhs = h * (np.roll(w, -1, axis=i) - w)
        try:
            C[i] = cg_solve(op, rhs, tol=tol)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"diffusion corrector {i + 1} failed: {exc}", residual=exc.residual
            ) from exc
        C[i] = np.where(fluid, C[i], 0.0)
        C[i] -= fluid * (C[i].sum() / fluid.sum())
    grads = np.stack([_face_gradients(C[i], open_faces, h) for i in range(3)])  # (i, d, ...)
    vol = h**3
    quad = vol * np.einsum("iduvw,jduvw->ij", grads, grads)
    quad = 0.5 * (quad + quad.T)
    # cross term sum_faces (e^i . e_d) dC^j_d = sum over i-faces of dC^j_i
    cross = vol * np.array([[grads[j, i].sum() for j in range(3)] for i in range(3)])
    m = porosity(mask.r)
    energy = m * np.eye(3) + cross + cross.T + quad
    energy = 0.5 * (energy + energy.T)
    measure = vol * np.array([np.count_nonzero(f) for f in open_faces], dtype=np.float64)
    logger.debug("diffusion r=%.4f n=%d: d=%.6f", mask.r, n, np.trace(energy) / 3)
    return DiffusionCellSolution(C, energy, quad, measure)
