"""Periodicity cell with one spherical grain.

The cell is Y = (-1/2, 1/2)^3 with the grain {|y| < r} at its centre. The
voxel grid is laid out so that one voxel is centred on the grain centre:
voxel ``k`` along an axis has centre ``k*h`` wrapped into [-1/2, 1/2).
This keeps the mask invariant under all 48 cube symmetries for any ``n``
and guarantees at least one solid voxel for every ``r > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import InputError
from .numerics import GridSpec

GRAIN_VOLUME = 4.0 * np.pi / 3.0
DEFAULT_R_MIN = 0.05
DEFAULT_R_MAX = 0.45


@dataclass(frozen=True)
class RadiusBounds:
    r_min: float = DEFAULT_R_MIN
    r_max: float = DEFAULT_R_MAX
    theta: float = 0.1
    M0: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.r_min < self.r_max < 0.5):
            raise InputError(
                f"need 0 < r_min < r_max < 1/2, got r_min={self.r_min}, r_max={self.r_max}"
            )
        if not self.theta > 0:
            raise InputError(f"theta must be positive, got {self.theta}")
        if not self.M0 > 0:
            raise InputError(f"M0 must be positive, got {self.M0}")


def _check_radius(r):
    r = np.asarray(r, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 0.5):
        raise InputError(f"grain radius must lie in [0, 1/2], got {r}")
    return r


def chi(r: float, y) -> int:
    """Pore indicator: 1 in the fluid (``|y| > r``), 0 in the grain; ``|y| = r`` counts as solid."""
    _check_radius(r)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (3,) or np.any(np.abs(y) > 0.5):
        raise InputError(f"y must be a point of [-1/2, 1/2]^3, got {y}")
    return int(np.dot(y, y) > r * r)


def porosity(r):
    """Fluid volume fraction ``1 - (4 pi / 3) r^3``; works elementwise on arrays."""
    r = _check_radius(r)
    m = 1.0 - GRAIN_VOLUME * r**3
    return float(m) if m.ndim == 0 else m


def cell_coordinates(n: int) -> np.ndarray:
    """Voxel-centre coordinates along one axis (grain-centred layout)."""
    k = np.arange(n)
    return np.where(k < (n + 1) // 2, k, k - n) / n


@dataclass(frozen=True, eq=False)
class UnitCellMask:
    r: float
    grid: GridSpec
    solid: np.ndarray
    fluid_volume_fraction: float

    @property
    def n(self) -> int:
        return self.grid.n[0]

    @property
    def h(self) -> float:
        return self.grid.h[0]

    @cached_property
    def fluid(self) -> np.ndarray:
        return ~self.solid

    @property
    def voxel_fluid_fraction(self) -> float:
        """Fraction of fluid voxels (centre sampling)."""
        return float(self.fluid.mean())

    def __eq__(self, other):
        return (
            isinstance(other, UnitCellMask)
            and self.r == other.r
            and self.grid == other.grid
            and np.array_equal(self.solid, other.solid)
        )

    __hash__ = None


def build_cell_mask(r: float, n: int) -> UnitCellMask:
    """Voxelize the grain of radius ``r`` on an ``n^3`` periodic grid.

    Solid flags come from ``chi`` at voxel centres; the reported fluid
    fraction uses 2x2x2 sub-samples per voxel.

    Raises:
        InputError: ``r`` outside (0, 1/2), ``n < 8``, or the grain is
            smaller than half a voxel (``r*n < 0.5``).
    """
    _check_radius(r)
    if int(n) != n or n < 8:
        raise InputError(f"cell resolution must be an integer >= 8, got {n}")
    n = int(n)
    if r <= 0.0 or r >= 0.5:
        raise InputError(f"grain radius must lie strictly inside (0, 1/2), got {r}")
    if r * n < 0.5:
        raise InputError(f"n={n} cannot resolve r={r}: grain smaller than half a voxel")
    c = cell_coordinates(n)
    y2 = c[:, None, None] ** 2 + c[None, :, None] ** 2 + c[None, None, :] ** 2
    solid = y2 <= r * r
    h = 1.0 / n
    fluid_samples = 0
    for o1 in (-0.25, 0.25):
        for o2 in (-0.25, 0.25):
            for o3 in (-0.25, 0.25):
                s2 = (
                    (c[:, None, None] + o1 * h) ** 2
                    + (c[None, :, None] + o2 * h) ** 2
                    + (c[None, None, :] + o3 * h) ** 2
                )
                fluid_samples += int(np.count_nonzero(s2 > r * r))
    fraction = fluid_samples / (8.0 * n**3)
    grid = GridSpec((n, n, n), (h, h, h), (True, True, True))
    return UnitCellMask(float(r), grid, solid, fraction)


def periodic_components(region: np.ndarray) -> int:
    """Number of 6-connected components of ``region`` on the periodic torus."""
    labels, count = ndimage.label(region)
    if count <= 1:
        return int(count)
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis in range(3):
        first = np.take(labels, 0, axis=axis)
        last = np.take(labels, -1, axis=axis)
        both = (first > 0) & (last > 0)
        for a, b in zip(first[both], last[both]):
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[ra] = rb
    return len({find(k) for k in range(1, count + 1)})


def fluid_is_connected(mask: UnitCellMask) -> bool:
    return periodic_components(mask.fluid) == 1
