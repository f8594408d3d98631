"""Trilinear (Q1) elasticity on a box of cubic elements, matrix-free.

Nodes live on an ``(n+1)^3`` lattice and element ``(i, j, k)`` owns the
nodes ``(i+a, j+b, k+c)`` for ``a, b, c`` in {0, 1}. Strains and stresses
use Mandel notation, ``(11, 22, 33, sqrt2*23, sqrt2*13, sqrt2*12)``, so
that ``A:B`` is a plain dot product and fourth-rank tensors with minor
symmetries become symmetric 6x6 matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import InputError
from .numerics import LinearOperator

VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
_SQ2 = np.sqrt(2.0)
MANDEL_WEIGHTS = np.array([1.0, 1.0, 1.0, _SQ2, _SQ2, _SQ2])
MANDEL_IDENTITY = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
LOCAL_NODES = tuple(product((0, 1), repeat=3))


def sym_to_mandel(A: np.ndarray) -> np.ndarray:
    """Symmetric (..., 3, 3) -> (..., 6)."""
    A = np.asarray(A, dtype=np.float64)
    return np.stack([A[..., i, j] for i, j in VOIGT_PAIRS], axis=-1) * MANDEL_WEIGHTS


def mandel_to_sym(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64) / MANDEL_WEIGHTS
    out = np.zeros(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


def tensor_to_mandel(N: np.ndarray) -> np.ndarray:
    """Fourth-rank (..., 3, 3, 3, 3) with minor symmetries -> (..., 6, 6)."""
    N = np.asarray(N, dtype=np.float64)
    out = np.empty(N.shape[:-4] + (6, 6))
    for I, (a, b) in enumerate(VOIGT_PAIRS):
        for J, (c, d) in enumerate(VOIGT_PAIRS):
            out[..., I, J] = N[..., a, b, c, d] * MANDEL_WEIGHTS[I] * MANDEL_WEIGHTS[J]
    return out


def mandel_to_tensor(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    out = np.empty(M.shape[:-2] + (3, 3, 3, 3))
    for I, (a, b) in enumerate(VOIGT_PAIRS):
        for J, (c, d) in enumerate(VOIGT_PAIRS):
            v = M[..., I, J] / (MANDEL_WEIGHTS[I] * MANDEL_WEIGHTS[J])
            for p, q in {(a, b), (b, a)}:
                for s, t in {(c, d), (d, c)}:
                    out[..., p, q, s, t] = v
    return out


def isotropic_material(c2: float, shear: float = 1.0) -> np.ndarray:
    """Mandel matrix of ``eps -> shear*eps + c2*tr(eps) I``."""
    return shear * np.eye(6) + c2 * np.outer(MANDEL_IDENTITY, MANDEL_IDENTITY)


@dataclass(frozen=True)
class Q1Element:
    """Reference data for a cube of side ``h`` with 2x2x2 Gauss quadrature."""

    h: float
    B: np.ndarray = field(init=False, repr=False)  # (8 qp, 6, 24) Mandel strain
    div: np.ndarray = field(init=False, repr=False)  # (8 qp, 24)
    N: np.ndarray = field(init=False, repr=False)  # (8 qp, 8 nodes)
    grad: np.ndarray = field(init=False, repr=False)  # (8 qp, 8 nodes, 3)
    weight: float = field(init=False)

    def __post_init__(self):
        g = 0.5 / np.sqrt(3.0)
        pts = [(0.5 + s1 * g, 0.5 + s2 * g, 0.5 + s3 * g) for s1, s2, s3 in product((-1, 1), repeat=3)]
        B = np.zeros((8, 6, 24))
        div = np.zeros((8, 24))
        N = np.zeros((8, 8))
        grads = np.zeros((8, 8, 3))
        for q, xi in enumerate(pts):
            for a, node in enumerate(LOCAL_NODES):
                f = [xi[k] if node[k] else 1.0 - xi[k] for k in range(3)]
                df = [1.0 if node[k] else -1.0 for k in range(3)]
                N[q, a] = f[0] * f[1] * f[2]
                grad = np.array(
                    [
                        df[0] * f[1] * f[2],
                        f[0] * df[1] * f[2],
                        f[0] * f[1] * df[2],
                    ]
                ) / self.h
                grads[q, a] = grad
                for c in range(3):
                    G = np.zeros((3, 3))
                    G[c] = grad
                    B[q, :, 3 * a + c] = sym_to_mandel(0.5 * (G + G.T))
                    div[q, 3 * a + c] = grad[c]
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "div", div)
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "grad", grads)
        object.__setattr__(self, "weight", self.h**3 / 8.0)

    def stiffness(self, material: np.ndarray) -> np.ndarray:
        """24x24 element matrix for a constant Mandel material matrix."""
        return self.weight * np.einsum("qia,ij,qjb->ab", self.B, material, self.B)


def gather(u: np.ndarray, n: int) -> np.ndarray:
    """Nodal field (3, n+1, n+1, n+1) -> element dofs (24, n, n, n)."""
    out = np.empty((24, n, n, n))
    for a, (i, j, k) in enumerate(LOCAL_NODES):
        out[3 * a : 3 * a + 3] = u[:, i : i + n, j : j + n, k : k + n]
    return out


def scatter(fe: np.ndarray, n: int) -> np.ndarray:
    """Element dofs (24, n, n, n) -> summed nodal field (3, n+1, n+1, n+1)."""
    out = np.zeros((3, n + 1, n + 1, n + 1))
    for a, (i, j, k) in enumerate(LOCAL_NODES):
        out[:, i : i + n, j : j + n, k : k + n] += fe[3 * a : 3 * a + 3]
    return out


def element_node_mask(elements: np.ndarray) -> np.ndarray:
    """Nodes touched by at least one active element."""
    n = elements.shape[0]
    nodes = np.zeros((n + 1,) * 3, dtype=bool)
    for i, j, k in LOCAL_NODES:
        nodes[i : i + n, j : j + n, k : k + n] |= elements
    return nodes


class Q1ElasticityOperator(LinearOperator):
    """``u -> sum_e int sigma_e(u) : D(phi)`` restricted to a set of free dofs.

    Args:
        n: elements per axis.
        h: element size.
        material: Mandel matrix (6, 6) or per element (n, n, n, 6, 6).
        elements: active element mask; inactive elements contribute nothing.
        free: boolean (3, n+1, n+1, n+1) mask of unknowns; other dofs are
            held at zero (Dirichlet) and get identity rows.
        nullspace: orthonormal vectors in the full nodal layout.
    """

    def __init__(self, n, h, material, elements=None, free=None, nullspace=None):
        self.n = int(n)
        self.element = Q1Element(h)
        shape = (self.n,) * 3
        self.elements = np.ones(shape, dtype=bool) if elements is None else np.asarray(elements, bool)
        if self.elements.shape != shape:
            raise InputError("element mask does not match n")
        material = np.asarray(material, dtype=np.float64)
        if material.shape == (6, 6):
            self.material = material
            self._uniform = True
        elif material.shape == shape + (6, 6):
            self.material = material
            self._uniform = False
        else:
            raise InputError(f"material shape {material.shape} not understood")
        nodes = element_node_mask(self.elements)
        default_free = np.broadcast_to(nodes, (3,) + nodes.shape)
        self.free = default_free.copy() if free is None else (np.asarray(free, bool) & default_free)
        self._Ke = self.element.stiffness(self.material) if self._uniform else None
        self.shape = (3,) + (self.n + 1,) * 3
        self.nullspace = list(nullspace or [])

    def _element_forces(self, ue: np.ndarray) -> np.ndarray:
        el = self.element
        if self._uniform:
            fe = np.tensordot(self._Ke, ue, axes=(1, 0))
            return np.where(self.elements, fe, 0.0)
        fe = np.zeros_like(ue)
        for q in range(8):
            eps = np.tensordot(el.B[q], ue, axes=(1, 0))  # (6, n, n, n)
            sig = np.einsum("uvwij,juvw->iuvw", self.material, eps)
            fe += el.weight * np.tensordot(el.B[q].T, sig, axes=(1, 0))
        return np.where(self.elements, fe, 0.0)

    def matvec(self, x):
        u = np.where(self.free, np.asarray(x, dtype=np.float64).reshape(self.shape), 0.0)
        out = scatter(self._element_forces(gather(u, self.n)), self.n)
        return np.where(self.free, out, np.asarray(x).reshape(self.shape))

    def diagonal(self):
        el = self.element
        if self._uniform:
            de = np.einsum("qia,ij,qja->a", el.B, self.material, el.B) * el.weight
            de = de[:, None, None, None] * np.ones((1,) + (self.n,) * 3)
        else:
            de = np.einsum("qia,uvwij,qja->auvw", el.B, self.material, el.B) * el.weight
        d = scatter(np.where(self.elements, de, 0.0), self.n)
        return np.where(self.free, d, 1.0)

    def load(self, stress: np.ndarray) -> np.ndarray:
        """``-int S : D(phi)`` for a constant Mandel stress ``S`` (6,) on the active elements."""
        el = self.element
        fe_local = -el.weight * np.einsum("qia,i->a", el.B, stress)
        fe = fe_local[:, None, None, None] * self.elements[None]
        return np.where(self.free, scatter(fe, self.n), 0.0)

    def strains(self, u: np.ndarray) -> np.ndarray:
        """Mandel strain at the quadrature points, (8, 6, n, n, n)."""
        ue = gather(u, self.n)
        return np.stack([np.tensordot(self.element.B[q], ue, axes=(1, 0)) for q in range(8)])

    def element_gradients(self, u: np.ndarray) -> np.ndarray:
        """Element-average displacement gradient ``du_c/dx_k``, (3, 3, n, n, n)."""
        ue = gather(u, self.n)
        g = self.element.grad.mean(axis=0)  # exact average for Q1
        return sum(ue[3 * a : 3 * a + 3, None] * g[a][None, :, None, None, None] for a in range(8))

    def element_means(self, u: np.ndarray) -> np.ndarray:
        """Element-average of a nodal field, (3, n, n, n)."""
        ue = gather(u, self.n)
        return sum(ue[3 * a : 3 * a + 3] for a in range(8)) / 8.0
