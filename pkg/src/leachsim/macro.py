"""Homogenized reservoir model on the unit cube ``[-1/2, 1/2]^3``.

Boundary parts: ``S1`` is the face ``x1 = -1/2`` (injection), ``S2`` the face
``x1 = +1/2`` (production) and ``S0`` the four remaining faces (impermeable).
Scalars live at cell centres; the elastic displacement is solved on the
cell corners and reported at centres.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .coeff_table import CoefficientTable, interpolate_fields
from .errors import InputError, LeachError, MaxPrincipleError
from .fem import MANDEL_IDENTITY, Q1ElasticityOperator
from .geometry import porosity
from .numerics import BC, GridSpec, StencilOperator, assemble_elliptic, cg_solve, check_field

logger = logging.getLogger(__name__)

MAX_PRINCIPLE_TOL = 1e-10
WELL_FACES = {"x-": BC.DIRICHLET, "x+": BC.DIRICHLET}


@dataclass(frozen=True)
class Profile:
    """``lo`` at ``x_axis = -1/2`` rising linearly to ``hi`` at ``+1/2``; constant when ``axis`` is None."""

    lo: float
    hi: float | None = None
    axis: int | None = None

    def __post_init__(self):
        if self.axis is None:
            if self.hi is not None and self.hi != self.lo:
                raise InputError("a constant profile takes a single value")
            object.__setattr__(self, "hi", self.lo)
        elif self.axis not in (0, 1, 2):
            raise InputError(f"profile axis must be 0, 1 or 2, got {self.axis}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise InputError("profile values must be finite")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(float(value))

    @property
    def gradient(self) -> np.ndarray:
        g = np.zeros(3)
        if self.axis is not None:
            g[self.axis] = self.hi - self.lo
        return g

    @property
    def min(self) -> float:
        return min(self.lo, self.hi)

    @property
    def max(self) -> float:
        return max(self.lo, self.hi)

    def __call__(self, x1, x2, x3) -> np.ndarray:
        x = (x1, x2, x3)
        shape = np.broadcast(*x).shape
        if self.axis is None:
            return np.full(shape, self.lo)
        return np.broadcast_to(self.lo + (self.hi - self.lo) * (x[self.axis] + 0.5), shape).copy()


@dataclass(frozen=True)
class ReservoirSpec:
    grid: GridSpec
    p0: Profile
    c0: Profile

    def __post_init__(self):
        if any(self.grid.periodic):
            raise InputError("reservoir grid must not be periodic")
        if self.grid.n[0] != self.grid.n[1] or self.grid.n[1] != self.grid.n[2]:
            raise InputError("reservoir grid must be an n^3 cube")
        if any(abs(h * k - 1.0) > 1e-12 for h, k in zip(self.grid.h, self.grid.n)):
            raise InputError("reservoir grid must span the unit cube")
        if self.p0.axis not in (None, 0):
            raise InputError("p0 must be constant on S1 and on S2 (vary along x1 only)")
        if self.c0.axis not in (None, 0):
            raise InputError("c0 may vary along x1 only (zero flux on S0)")
        if self.c0.min < 0.0 or self.c0.max > 1.0:
            raise InputError(f"c0 must lie in [0, 1], got [{self.c0.min}, {self.c0.max}]")

    @classmethod
    def build(cls, n: int, p1: float = 1.0, p2: float = 0.0, c0: Profile | float = 1.0) -> "ReservoirSpec":
        p0 = Profile(p1, p2, 0) if p1 != p2 else Profile.constant(p1)
        c0 = c0 if isinstance(c0, Profile) else Profile.constant(c0)
        return cls(GridSpec.unit_cube(n), p0, c0)

    @property
    def n(self) -> int:
        return self.grid.n[0]

    @property
    def h(self) -> float:
        return self.grid.h[0]

    def centers(self) -> list[np.ndarray]:
        return self.grid.mesh(lower=-0.5)

    def p0_field(self) -> np.ndarray:
        return self.p0(*self.centers())

    def c0_field(self) -> np.ndarray:
        return self.c0(*self.centers())


@dataclass(eq=False)
class MacroState:
    t: float
    c: np.ndarray
    phi: np.ndarray
    w_f: np.ndarray  # (3, n, n, n)
    w_s: np.ndarray  # (3, n, n, n)
    p_f: np.ndarray
    p_s: np.ndarray

    def __post_init__(self):
        for name in ("c", "phi", "w_f", "w_s", "p_f", "p_s"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"MacroState.{name} contains non-finite values")


def _radius(spec: ReservoirSpec, r) -> np.ndarray:
    r = check_field(spec.grid, r)
    if np.any(r < 0.0) or np.any(r > 0.5):
        raise InputError("radius field must lie in [0, 1/2]")
    return r


# pressure head ---------------------------------------------------------------


def _well_data(spec: ReservoirSpec, head_bc) -> tuple[np.ndarray, np.ndarray]:
    n = spec.n
    if head_bc is None:
        return np.zeros((n, n)), np.zeros((n, n))
    out = []
    for key in ("S1", "S2"):
        g = np.asarray(head_bc.get(key, 0.0), dtype=np.float64)
        g = np.broadcast_to(g, (n, n)).astype(np.float64)
        if not np.all(np.isfinite(g)):
            raise InputError(f"head data on {key} is not finite")
        out.append(g)
    unknown = set(head_bc) - {"S1", "S2"}
    if unknown:
        raise InputError(f"head data only on S1/S2, got {sorted(unknown)}")
    return out[0], out[1]


def head_operator(r, table: CoefficientTable, spec: ReservoirSpec) -> StencilOperator:
    B = interpolate_fields(table, _radius(spec, r))["B_w"]
    return assemble_elliptic(spec.grid, B, WELL_FACES)


def darcy_face_flux(A: StencilOperator, phi, g1, g2, mu1: float, h: float) -> list[np.ndarray]:
    """Flux ``-(1/mu1) B grad(phi) . e_d`` on the ``n+1`` faces per axis."""
    out = []
    for d in range(3):
        f = np.moveaxis(-A.faces[d] * h * (phi - np.roll(phi, 1, axis=d)) / mu1, d, 0)
        full = np.concatenate([f, f[:1] * 0.0], axis=0)  # index k: face below cell k
        out.append(np.moveaxis(full, 0, d))
    F0 = out[0]
    phi_lo, phi_hi = phi[0], phi[-1]
    F0[0] = -A.boundary_weights["x-"] * h * (phi_lo - g1) / mu1
    F0[-1] = -A.boundary_weights["x+"] * h * (g2 - phi_hi) / mu1
    return out


def solve_pressure_head(
    r,
    table: CoefficientTable,
    spec: ReservoirSpec,
    mu1: float = 1.0,
    head_bc: dict | None = None,
    source: np.ndarray | None = None,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Darcy head ``phi`` and fluid displacement ``w_f`` at cell centres.

    Solves ``-div(B_w(r) grad phi) = source`` with ``phi = g`` on S1/S2 and
    zero flux on S0. ``head_bc`` maps ``"S1"``/``"S2"`` to constants or
    ``(n, n)`` face arrays; omitted data are the homogeneous well values.
    """
    if not mu1 > 0:
        raise InputError(f"mu1 must be positive, got {mu1}")
    A = head_operator(r, table, spec)
    g1, g2 = _well_data(spec, head_bc)
    b = np.zeros(spec.grid.shape)
    b[0] += A.boundary_weights["x-"] * g1
    b[-1] += A.boundary_weights["x+"] * g2
    if source is not None:
        b += check_field(spec.grid, source)
    phi = cg_solve(A, b, tol=tol).reshape(spec.grid.shape)
    flux = darcy_face_flux(A, phi, g1, g2, mu1, spec.h)
    w_f = np.stack([0.5 * (np.take(F, range(0, spec.n), axis=d) + np.take(F, range(1, spec.n + 1), axis=d))
                    for d, F in enumerate(flux)])
    return phi, w_f


# Lame system -----------------------------------------------------------------


def lame_system(
    r, table: CoefficientTable, spec: ReservoirSpec, lambda0: float, c_s: float, p0: Profile | None = None
) -> tuple[Q1ElasticityOperator, np.ndarray]:
    """Operator and load of ``div(lambda0 N:D(w) + c_s^2 div(w) I) = grad p0``, ``w = 0`` on the boundary."""
    if not lambda0 > 0 or not c_s > 0:
        raise InputError("lambda0 and c_s must be positive")
    n, h = spec.n, spec.h
    N = interpolate_fields(table, _radius(spec, r))["N_s"]
    material = lambda0 * N + c_s**2 * np.outer(MANDEL_IDENTITY, MANDEL_IDENTITY)
    free = np.zeros((3,) + (n + 1,) * 3, dtype=bool)
    free[:, 1:-1, 1:-1, 1:-1] = True
    op = Q1ElasticityOperator(n, h, material, free=free)
    grad_p = (p0 or spec.p0).gradient
    # -int grad(p0) . phi; each interior node's hat function integrates to h^3
    b = np.where(free, -grad_p[:, None, None, None] * h**3, 0.0)
    return op, b


def solve_lame(
    r,
    table: CoefficientTable,
    spec: ReservoirSpec,
    lambda0: float = 1.0,
    c_s: float = 1.0,
    p0: Profile | None = None,
    tol: float = 1e-12,
) -> tuple[np.ndarray, np.ndarray]:
    """Solid displacement ``w_s`` (cell averages) and pressure ``p_s = p0 - c_s^2 div w_s``."""
    op, b = lame_system(r, table, spec, lambda0, c_s, p0)
    w = cg_solve(op, b, tol=tol).reshape(op.shape)
    w_s = op.element_means(w)
    div = np.trace(op.element_gradients(w), axis1=0, axis2=1)
    p = (p0 or spec.p0)(*spec.centers())
    return w_s, p - c_s**2 * div


# diffusion -------------------------------------------------------------------


def diffusion_operator(r_new, dt, table, spec, alpha_c) -> StencilOperator:
    B = interpolate_fields(table, r_new)["B_c"]
    return assemble_elliptic(spec.grid, alpha_c * B, WELL_FACES, shift=porosity(r_new) / dt)


def step_diffusion(
    c_old,
    r_old,
    r_new,
    dt: float,
    table: CoefficientTable,
    spec: ReservoirSpec,
    alpha_c: float = 1.0,
    tol: float = 1e-12,
    source: np.ndarray | None = None,
    enforce_bounds: bool = True,
) -> np.ndarray:
    """One backward-Euler step of ``d(m c)/dt = div(alpha_c B_c grad(c - c0))``.

    ``c = c0`` on S1/S2 and zero flux on S0. With ``enforce_bounds`` the
    result must lie in [0, 1] up to 1e-10 and is clipped to it.

    Raises:
        InputError: bad ``dt``/``alpha_c``, ``c_old`` outside [0, 1] or a
            radius that grew.
        MaxPrincipleError: overshoot beyond 1e-10.
    """
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt}")
    if not alpha_c > 0:
        raise InputError(f"alpha_c must be positive, got {alpha_c}")
    c_old = check_field(spec.grid, c_old)
    r_old = _radius(spec, r_old)
    r_new = _radius(spec, r_new)
    if enforce_bounds and (c_old.min() < 0.0 or c_old.max() > 1.0):
        raise InputError("c_old must lie in [0, 1]")
    if np.any(r_new > r_old):
        raise InputError("radius grew during the step (r_new > r_old)")
    c0 = spec.c0_field()
    m_old, m_new = porosity(r_old), porosity(r_new)
    A = diffusion_operator(r_new, dt, table, spec, alpha_c)
    b = (m_old * c_old - m_new * c0) / dt
    if source is not None:
        b = b + check_field(spec.grid, source)
    u = cg_solve(A, b, tol=tol).reshape(spec.grid.shape)
    c_new = c0 + u
    if enforce_bounds:
        lo, hi = float(c_new.min()), float(c_new.max())
        if lo < -MAX_PRINCIPLE_TOL or hi > 1.0 + MAX_PRINCIPLE_TOL:
            raise MaxPrincipleError(f"concentration left [0, 1]: min {lo:.3e}, max {hi:.3e}")
        c_new = np.clip(c_new, 0.0, 1.0)
    return c_new


def diffusion_balance(c_old, c_new, r_old, r_new, dt, table, spec, alpha_c=1.0) -> tuple[float, float]:
    """``(storage change, boundary inflow)`` of one step, both integrated over the domain.

    The boundary inflow is the Dirichlet-face flux ``alpha_c B_c d(c - c0)/dn``
    through S1 and S2; for an exact step the two numbers agree.
    """
    h3 = spec.grid.cell_volume
    storage = float(np.sum(porosity(r_new) * c_new - porosity(r_old) * c_old)) * h3 / dt
    u = c_new - spec.c0_field()
    A = diffusion_operator(r_new, dt, table, spec, alpha_c)
    inflow = -float(np.sum(A.boundary_weights["x-"] * u[0]) + np.sum(A.boundary_weights["x+"] * u[-1])) * h3
    return storage, inflow


def run_diffusion(
    r_history,
    spec: ReservoirSpec,
    table: CoefficientTable,
    alpha_c: float,
    dt: float,
    steps: int,
    tol: float = 1e-12,
    c_init: np.ndarray | None = None,
    sources=None,
    enforce_bounds: bool = True,
) -> list[np.ndarray]:
    """March ``steps`` backward-Euler steps; ``r_history[k]`` is the radius at ``t_k``.

    Returns ``[c(t_0), ..., c(t_steps)]`` with ``c(t_0) = c0`` unless
    ``c_init`` is given. ``sources``, if given, is a callable ``k -> field``
    for the source of step ``k`` (ending at ``t_{k+1}``).
    """
    if int(steps) != steps or steps < 0:
        raise InputError(f"steps must be a non-negative integer, got {steps}")
    steps = int(steps)
    if len(r_history) != steps + 1:
        raise InputError(f"need {steps + 1} radius levels, got {len(r_history)}")
    c = spec.c0_field() if c_init is None else check_field(spec.grid, c_init).copy()
    history = [c]
    for k in range(steps):
        try:
            c = step_diffusion(
                c, r_history[k], r_history[k + 1], dt, table, spec, alpha_c, tol,
                source=None if sources is None else sources(k),
                enforce_bounds=enforce_bounds,
            )
        except LeachError as exc:
            err = type(exc)(f"diffusion step {k}: {exc}")
            err.step = k
            raise err from exc
        history.append(c)
    return history
