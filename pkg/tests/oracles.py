"""Independent reference values used by several test modules."""

import numpy as np


def dilute_permeability(r: float, mu1: float = 1.0) -> float:
    """Scalar permeability of a simple cubic array of spheres at low volume fraction.

    Drag on a sphere in a periodic array (unit cell, volume fraction c):
    F = 6 pi mu a U K(c) with 1/K = 1 - 1.7601 c^(1/3) + c - 1.5593 c^2.
    With the symmetric-gradient stress used here the viscosity is mu1/2,
    and a unit mean pressure gradient carries drag 1 per cell, so
    k = <w> = 1/(6 pi (mu1/2) r K).
    """
    c = 4.0 * np.pi / 3.0 * r**3
    inv_K = 1.0 - 1.7601 * c ** (1 / 3) + c - 1.5593 * c**2
    return inv_K / (6.0 * np.pi * 0.5 * mu1 * r)


def isotropic_identity4():
    d = np.eye(3)
    return 0.5 * (np.einsum("ac,bd->abcd", d, d) + np.einsum("ad,bc->abcd", d, d))


def random_symmetric(rng, count):
    A = rng.standard_normal((count, 3, 3))
    return 0.5 * (A + np.swapaxes(A, 1, 2))
