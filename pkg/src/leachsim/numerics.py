"""Structured grids, symmetric elliptic operators and conjugate gradients.

Cell-centred finite volumes on a tensor grid. Face coefficients are
harmonic means of the adjacent cell values, Dirichlet faces are eliminated
through a ghost value so the assembled operator stays symmetric.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, InputError, NumericalError

logger = logging.getLogger(__name__)

if os.environ.get("LEACHSIM_PURE_PYTHON") == "1":
    from . import _kernels_py as _kern
    BACKEND = "python"
else:
    try:
        from . import _kernels as _kern
        BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _kernels_py as _kern
        BACKEND = "python"

AXES = ("x", "y", "z")
FACES = ("x-", "x+", "y-", "y+", "z-", "z+")


class BC(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class GridSpec:
    """Tensor-product cell grid; ``n`` cells and spacing ``h`` per axis."""

    n: tuple[int, int, int]
    h: tuple[float, float, float]
    periodic: tuple[bool, bool, bool] = (False, False, False)

    def __post_init__(self):
        if len(self.n) != 3 or len(self.h) != 3 or len(self.periodic) != 3:
            raise InputError("GridSpec needs three entries per field")
        if any(int(k) != k or k < 2 for k in self.n):
            raise InputError(f"cells per axis must be integers >= 2, got {self.n}")
        if any(not (s > 0) for s in self.h):
            raise InputError(f"spacings must be positive, got {self.h}")

    @classmethod
    def unit_cube(cls, n: int, periodic: bool = False) -> "GridSpec":
        return cls((n, n, n), (1.0 / n,) * 3, (periodic,) * 3)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(int(k) for k in self.n)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def centers(self, axis: int, lower: float = -0.5) -> np.ndarray:
        """Cell-centre coordinates along ``axis`` for a box starting at ``lower``."""
        return lower + (np.arange(self.n[axis]) + 0.5) * self.h[axis]

    def mesh(self, lower: float = -0.5) -> list[np.ndarray]:
        return np.meshgrid(*(self.centers(a, lower) for a in range(3)), indexing="ij")


def check_field(grid: GridSpec, values: np.ndarray, components: int = 1) -> np.ndarray:
    """Validate a scalar (``components=1``) or vector field against ``grid``."""
    values = np.asarray(values, dtype=np.float64)
    expected = grid.shape if components == 1 else (components,) + grid.shape
    if values.shape != expected:
        raise InputError(f"field shape {values.shape} does not match grid {expected}")
    if not np.all(np.isfinite(values)):
        raise InputError("field contains non-finite entries")
    return values


class LinearOperator:
    """Symmetric operator with an optional orthonormal nullspace basis."""

    nullspace: list[np.ndarray]
    shape: tuple[int, ...]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def dimension(self) -> int:
        return int(np.prod(self.shape))

    def __matmul__(self, x):
        return self.matvec(x)


@dataclass
class StencilOperator(LinearOperator):
    """Seven-point operator ``diag*x + sum_edges w*(x_c - x_nb)`` on a periodic index grid.

    ``faces[d][c]`` weights the edge between ``c - e_d`` and ``c``; a zero
    weight cuts it. Non-periodic axes carry zero weight on the wrap edge.
    """

    faces: tuple[np.ndarray, np.ndarray, np.ndarray]
    diag: np.ndarray
    nullspace: list = field(default_factory=list)
    boundary_weights: dict = field(default_factory=dict)

    def __post_init__(self):
        self.faces = tuple(np.ascontiguousarray(f, dtype=np.float64) for f in self.faces)
        self.diag = np.ascontiguousarray(self.diag, dtype=np.float64)
        self.shape = self.diag.shape

    def matvec(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64).reshape(self.shape)
        return _kern.stencil_apply(*self.faces, self.diag, x)

    def diagonal(self):
        d = self.diag.copy()
        for axis, f in enumerate(self.faces):
            d += f + np.roll(f, -1, axis=axis)
        return d

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit matrix, for tests and small direct checks."""
        n = self.diag.size
        idx = np.arange(n).reshape(self.shape)
        rows, cols, vals = [idx.ravel()], [idx.ravel()], [self.diagonal().ravel()]
        for axis, f in enumerate(self.faces):
            nb = np.roll(idx, 1, axis=axis)
            w = f.ravel()
            keep = w != 0
            a, b, w = idx.ravel()[keep], nb.ravel()[keep], w[keep]
            rows += [a, b]
            cols += [b, a]
            vals += [-w, -w]
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )


@dataclass
class SparseOperator(LinearOperator):
    matrix: sp.csr_matrix
    nullspace: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.shape = (self.matrix.shape[0],)

    def matvec(self, x):
        return self.matrix @ np.asarray(x, dtype=np.float64).ravel()

    def diagonal(self):
        return self.matrix.diagonal()


def orthonormalize(vectors: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Gram-Schmidt (twice) on flattened copies; drops dependent vectors."""
    basis: list[np.ndarray] = []
    for v in vectors:
        shape = np.shape(v)
        w = np.asarray(v, dtype=np.float64).ravel().copy()
        for _ in range(2):
            for q in basis:
                w -= np.dot(q.ravel(), w) * q.ravel()
        norm = np.linalg.norm(w)
        if norm > 1e-12 * max(1.0, np.linalg.norm(np.ravel(v))):
            basis.append((w / norm).reshape(shape))
    return basis


def project_out(x: np.ndarray, basis: Sequence[np.ndarray]) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    for q in basis:
        flat -= np.dot(q.ravel(), flat) * q.ravel()
    return x


def _normalize_coeff(grid: GridSpec, coeff) -> np.ndarray:
    """Return per-axis conductances, shape ``(3,) + grid.shape``."""
    c = np.asarray(coeff, dtype=np.float64)
    shape = grid.shape
    if c.ndim == 0:
        c = np.full((3, 3) + shape, 0.0) + np.eye(3)[:, :, None, None, None] * c
    elif c.shape == shape:
        c = np.eye(3)[:, :, None, None, None] * c[None, None]
    elif c.shape == (3, 3):
        c = np.broadcast_to(c[:, :, None, None, None], (3, 3) + shape)
    elif c.shape == shape + (3, 3):
        c = np.moveaxis(c, (-2, -1), (0, 1))
    elif c.shape == (3, 3) + shape:
        pass
    else:
        raise InputError(f"coefficient shape {c.shape} not understood for grid {shape}")
    if not np.all(np.isfinite(c)):
        raise InputError("coefficient field contains non-finite entries")
    mats = np.moveaxis(c, (0, 1), (-2, -1)).reshape(-1, 3, 3)
    asym = np.abs(mats - mats.transpose(0, 2, 1)).max(initial=0.0)
    if asym > 1e-12 * max(1.0, np.abs(mats).max()):
        raise InputError("coefficient is not symmetric cellwise")
    if np.linalg.eigvalsh(mats).min() <= 0.0:
        raise InputError("coefficient is not positive definite in every cell")
    # the seven-point flux only sees the principal entries
    return np.stack([c[0, 0], c[1, 1], c[2, 2]])


def _harmonic(a, b):
    s = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s > 0, 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)


def assemble_elliptic(
    grid: GridSpec,
    coeff,
    bc: dict | None = None,
    *,
    active: np.ndarray | None = None,
    shift: np.ndarray | float | None = None,
) -> StencilOperator:
    """Assemble ``-div(K grad u) + shift*u`` with cell-centred finite volumes.

    Args:
        grid: the cell grid.
        coeff: SPD conductivity; scalar, cell scalar field, constant 3x3 or
            a cellwise 3x3 field. Off-diagonal entries are validated but the
            seven-point flux uses the principal components only.
        bc: face tag -> BC for each of ``x-, x+, y-, y+, z-, z+``. Defaults to
            periodic on periodic axes and Neumann elsewhere.
        active: optional boolean mask; edges touching inactive cells are cut
            (zero-flux wall) and inactive rows become identity rows.
        shift: optional non-negative reaction/mass term added to the diagonal.

    The returned operator's ``boundary_weights[face]`` holds the ghost
    elimination weight ``2K/h^2`` of each Dirichlet face; the right-hand side
    contribution of boundary data ``g`` is ``boundary_weights[face] * g``.
    """
    bc = _resolve_bc(grid, bc)
    K = _normalize_coeff(grid, coeff)
    shape = grid.shape
    if active is None:
        active = np.ones(shape, dtype=bool)
    else:
        active = np.asarray(active, dtype=bool)
        if active.shape != shape:
            raise InputError("active mask does not match grid")
    diag = np.zeros(shape)
    faces = []
    boundary_weights = {}
    for d in range(3):
        k = np.where(active, K[d], 0.0)
        w = _harmonic(k, np.roll(k, 1, axis=d)) / grid.h[d] ** 2
        if not grid.periodic[d]:
            lo = [slice(None)] * 3
            lo[d] = 0
            w[tuple(lo)] = 0.0
            for side, index in (("-", 0), ("+", shape[d] - 1)):
                if bc[AXES[d] + side] is BC.DIRICHLET:
                    sl = [slice(None)] * 3
                    sl[d] = index
                    bw = 2.0 * k[tuple(sl)] / grid.h[d] ** 2
                    diag[tuple(sl)] += bw
                    boundary_weights[AXES[d] + side] = bw
        faces.append(w)
    if shift is not None:
        s = np.broadcast_to(np.asarray(shift, dtype=np.float64), shape)
        if np.any(s < 0):
            raise InputError("shift must be non-negative")
        diag = diag + np.where(active, s, 0.0)
    diag = np.where(active, diag, 1.0)
    nullspace = []
    has_shift = shift is not None and np.any(np.asarray(shift) > 0)
    if not boundary_weights and not has_shift:
        nullspace = orthonormalize([active.astype(np.float64)])
    return StencilOperator(tuple(faces), diag, nullspace, boundary_weights)


def _resolve_bc(grid: GridSpec, bc: dict | None) -> dict:
    resolved = {}
    for d, ax in enumerate(AXES):
        for side in "-+":
            tag = (bc or {}).get(ax + side)
            if tag is None:
                tag = BC.PERIODIC if grid.periodic[d] else BC.NEUMANN
            tag = BC(tag)
            if (tag is BC.PERIODIC) != grid.periodic[d]:
                raise InputError(
                    f"face {ax + side}: tag {tag.value} inconsistent with periodic={grid.periodic[d]}"
                )
            resolved[ax + side] = tag
    unknown = set(bc or {}) - set(FACES)
    if unknown:
        raise InputError(f"unknown boundary faces {sorted(unknown)}")
    return resolved


def cg_solve(
    A: LinearOperator,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 20000,
    x0: np.ndarray | None = None,
    preconditioner: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients with nullspace projection.

    Returns ``x`` with ``||A x - b|| <= tol ||b||`` (b taken after removing
    its nullspace component); on singular operators ``x`` is orthogonal to
    ``A.nullspace``.

    Raises:
        ConvergenceError: ``max_iter`` reached; carries the final residual.
        NumericalError: NaN or loss of positivity encountered.
    """
    b = np.asarray(b, dtype=np.float64)
    null = A.nullspace
    if null:
        b = project_out(b, null)
    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains non-finite entries")
    if isinstance(A, StencilOperator) and preconditioner is None and len(null) <= 1:
        return _cg_stencil(A, b.reshape(A.shape), tol, max_iter, x0)
    return _cg_generic(A, b, tol, max_iter, x0, preconditioner)


def _cg_stencil(A: StencilOperator, b, tol, max_iter, x0):
    x = np.zeros(A.shape) if x0 is None else np.array(x0, dtype=np.float64).reshape(A.shape)
    x = np.ascontiguousarray(x)
    b = np.ascontiguousarray(b)
    null = A.nullspace[0] if A.nullspace else None
    bnorm = float(np.sqrt(np.vdot(b, b)))
    used = 0
    # a few restarts guard against drift between recursive and true residual
    for _ in range(4):
        it, rel, status = _kern.stencil_pcg(*A.faces, A.diag, b, x, tol, max_iter - used, null)
        used += it
        if status == 2:
            raise NumericalError(f"CG breakdown (NaN or indefinite) after {used} iterations")
        if bnorm == 0.0:
            return x
        r = b - A.matvec(x)
        true_rel = float(np.sqrt(np.vdot(r, r))) / bnorm
        if true_rel <= tol:
            return x
        if used >= max_iter:
            raise ConvergenceError(
                f"CG did not converge in {max_iter} iterations (residual {true_rel:.3e})",
                residual=true_rel,
                iterations=used,
            )
    raise ConvergenceError(
        f"CG stagnated at residual {true_rel:.3e}", residual=true_rel, iterations=used
    )


def _cg_generic(A, b, tol, max_iter, x0, preconditioner):
    shape = b.shape
    b = b.ravel()
    null = [q.ravel() for q in A.nullspace]
    if preconditioner is None:
        d = np.asarray(A.diagonal(), dtype=np.float64).ravel()
        if np.any(d <= 0):
            raise NumericalError("non-positive diagonal; operator is not SPD")
        dinv = 1.0 / d
        preconditioner = lambda r: dinv * r  # noqa: E731
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64).ravel()
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(shape)

    def proj(v):
        for q in null:
            v -= np.dot(q, v) * q
        return v

    r = proj(b - np.asarray(A.matvec(x)).ravel())
    z = preconditioner(r)
    p = z.copy()
    rz = float(np.dot(r, z))
    rnorm = float(np.linalg.norm(r))
    it = 0
    while rnorm > tol * bnorm:
        if it >= max_iter:
            raise ConvergenceError(
                f"CG did not converge in {max_iter} iterations (residual {rnorm / bnorm:.3e})",
                residual=rnorm / bnorm,
                iterations=it,
            )
        it += 1
        q = np.asarray(A.matvec(p)).ravel()
        pq = float(np.dot(p, q))
        if not pq > 0.0:
            raise NumericalError(f"CG breakdown (NaN or indefinite) at iteration {it}")
        alpha = rz / pq
        x += alpha * p
        r = proj(r - alpha * q)
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm):
            raise NumericalError(f"NaN residual at iteration {it}")
        z = preconditioner(r)
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    x = proj(x)
    return x.reshape(shape)


def symmetry_defect(A: LinearOperator, probes: int = 20, seed: int = 0) -> float:
    """Largest ``|<Ax,y> - <x,Ay>| / (|x||y|)`` over random probes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(A.shape)
        y = rng.standard_normal(A.shape)
        lhs = float(np.vdot(np.ravel(A.matvec(x)), y.ravel()))
        rhs = float(np.vdot(x.ravel(), np.ravel(A.matvec(y))))
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst
