"""Effective coefficients over a grid of grain radii.

Each knot runs the three cell problems. Between knots every independent
tensor entry is interpolated with a monotone piecewise-cubic (PCHIP)
spline; outside ``[r_min, r_max]`` the radius is clamped to the nearest
knot.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .cell_problems import solve_diffusion_cell, solve_elasticity_cell, solve_stokes_cell
from .errors import InputError, LeachError, NumericalError
from .fem import VOIGT_PAIRS, tensor_to_mandel
from .geometry import RadiusBounds, build_cell_mask, porosity

logger = logging.getLogger(__name__)

WORKERS_ENV = "LEACHSIM_WORKERS"
MIN_KNOTS = 5


def _pd_margin(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2))).min())


@dataclass(frozen=True, eq=False)
class EffectiveCoefficients:
    r: float
    m: float
    B_w: np.ndarray
    B_c: np.ndarray  # energy form, used by the macroscopic model
    N_s: np.ndarray  # (3, 3, 3, 3), energy form
    B_c_quadratic: np.ndarray
    N_paper: np.ndarray

    @property
    def k(self) -> float:
        """Scalar permeability ``tr(B_w)/3``."""
        return float(np.trace(self.B_w) / 3.0)

    @property
    def d(self) -> float:
        """Scalar diffusivity ``tr(B_c)/3``."""
        return float(np.trace(self.B_c) / 3.0)

    def violations(self) -> list[str]:
        out = []
        if self.m != porosity(self.r):
            out.append(f"porosity {self.m!r} differs from the closed form at r={self.r!r}")
        for name in ("B_w", "B_c"):
            M = getattr(self, name)
            scale = max(float(np.abs(M).max()), np.finfo(float).tiny)
            if np.abs(M - M.T).max() > 1e-8 * scale:
                out.append(f"{name} not symmetric")
            elif _pd_margin(M) <= 0.0:
                out.append(f"{name} not positive definite")
        N = self.N_s
        scale = max(float(np.abs(N).max()), np.finfo(float).tiny)
        if (
            np.abs(N - N.transpose(1, 0, 2, 3)).max() > 1e-8 * scale
            or np.abs(N - N.transpose(2, 3, 0, 1)).max() > 1e-8 * scale
        ):
            out.append("N_s lacks major/minor symmetry")
        elif _pd_margin(tensor_to_mandel(N)) <= 0.0:
            out.append("N_s not positive definite on symmetric matrices")
        return out

    def __eq__(self, other):
        if not isinstance(other, EffectiveCoefficients):
            return NotImplemented
        return (
            self.r == other.r
            and self.m == other.m
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("B_w", "B_c", "N_s", "B_c_quadratic", "N_paper")
            )
        )

    __hash__ = None


def compute_effective_coefficients(
    r: float, n: int, mu1: float = 1.0, lambda0: float = 1.0, c_s: float = 1.0, tol: float = 1e-10
) -> EffectiveCoefficients:
    """Run the three cell problems at radius ``r`` on an ``n^3`` cell grid."""
    mask = build_cell_mask(r, n)
    stokes = solve_stokes_cell(mask, mu1, tol=tol)
    diff = solve_diffusion_cell(mask, tol=tol)
    elast = solve_elasticity_cell(mask, lambda0, c_s, tol=tol)
    return EffectiveCoefficients(
        r=float(r),
        m=porosity(r),
        B_w=0.5 * (stokes.B_w + stokes.B_w.T),
        B_c=diff.B_c_energy,
        N_s=elast.N_energy,
        B_c_quadratic=diff.B_c_quadratic,
        N_paper=elast.N_paper,
    )


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    knots: np.ndarray
    entries: tuple[EffectiveCoefficients, ...]
    cell_resolution: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "provenance", dict(self.provenance))
        problems = self.violations()
        if problems:
            raise NumericalError("invalid coefficient table: " + "; ".join(problems))
        object.__setattr__(self, "_splines", _build_splines(self))

    @property
    def r_min(self) -> float:
        return float(self.knots[0])

    @property
    def r_max(self) -> float:
        return float(self.knots[-1])

    def violations(self) -> list[str]:
        out = []
        k = self.knots
        if k.ndim != 1 or len(k) < MIN_KNOTS:
            out.append(f"need at least {MIN_KNOTS} knots, got {len(k)}")
            return out
        if len(self.entries) != len(k):
            out.append("entry count does not match knot count")
            return out
        if np.any(np.diff(k) <= 0):
            out.append("knots are not strictly increasing")
        for i, e in enumerate(self.entries):
            if e.r != k[i]:
                out.append(f"knot {i}: entry radius {e.r!r} != knot {k[i]!r}")
            out += [f"knot {i} (r={k[i]:.6g}): {msg}" for msg in e.violations()]
        for name in ("k", "d"):
            vals = np.array([getattr(e, name) for e in self.entries])
            bad = np.nonzero(np.diff(vals) >= 0)[0]
            if bad.size:
                i = int(bad[0]) + 1
                out.append(
                    f"scalar {name} not strictly decreasing at knot {i} (r={k[i]:.6g}); "
                    "cell grid too coarse?"
                )
        return out

    def __eq__(self, other):
        if not isinstance(other, CoefficientTable):
            return NotImplemented
        return (
            np.array_equal(self.knots, other.knots)
            and self.entries == other.entries
            and self.cell_resolution == other.cell_resolution
            and self.provenance == other.provenance
        )

    __hash__ = None


def _upper_pairs():
    return [(I, J) for I in range(6) for J in range(I, 6)]


def tensor_to_voigt21(N: np.ndarray) -> np.ndarray:
    """Independent components ``N[a,b,c,d]`` of a fully symmetric tensor (upper Voigt triangle)."""
    out = []
    for I, J in _upper_pairs():
        a, b = VOIGT_PAIRS[I]
        c, d = VOIGT_PAIRS[J]
        out.append(N[..., a, b, c, d])
    return np.stack(out, axis=-1)


def voigt21_to_tensor(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    N = np.empty(v.shape[:-1] + (3, 3, 3, 3))
    for k, (I, J) in enumerate(_upper_pairs()):
        for P, Q in {(I, J), (J, I)}:
            a, b = VOIGT_PAIRS[P]
            c, d = VOIGT_PAIRS[Q]
            for p, q in {(a, b), (b, a)}:
                for s, t in {(c, d), (d, c)}:
                    N[..., p, q, s, t] = v[..., k]
    return N


def _build_splines(table: CoefficientTable) -> dict:
    k = table.knots
    stack = {
        "B_w": np.array([e.B_w for e in table.entries]).reshape(len(k), 9),
        "B_c": np.array([e.B_c for e in table.entries]).reshape(len(k), 9),
        "N_s": np.array([tensor_to_voigt21(e.N_s) for e in table.entries]),
        "B_c_quadratic": np.array([e.B_c_quadratic for e in table.entries]).reshape(len(k), 9),
        "N_paper": np.array([tensor_to_voigt21(e.N_paper) for e in table.entries]),
    }
    return {
        name: (PchipInterpolator(k, vals, axis=0, extrapolate=False), vals)
        for name, vals in stack.items()
    }


def _clamp(table: CoefficientTable, r, once: bool = False) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise InputError("radius contains non-finite values")
    lo, hi = table.r_min, table.r_max
    outside = (r < lo) | (r > hi)
    if np.any(outside):
        level = logging.WARNING
        if once:
            # time loops query every step; repeat notices go to debug
            level = logging.DEBUG if getattr(table, "_clamp_warned", False) else logging.WARNING
            object.__setattr__(table, "_clamp_warned", True)
        logger.log(
            level,
            "%d radius value(s) outside [%.6g, %.6g] clamped to the nearest knot (range %.6g..%.6g)",
            int(np.count_nonzero(outside)), lo, hi, float(r.min()), float(r.max()),
        )
    return np.clip(r, lo, hi)


def _eval(table: CoefficientTable, name: str, r: np.ndarray) -> np.ndarray:
    """Spline value with exact knot reproduction."""
    spline, knot_vals = table._splines[name]
    vals = spline(r)
    idx = np.minimum(np.searchsorted(table.knots, r), len(table.knots) - 1)
    hit = table.knots[idx] == r
    vals[hit] = knot_vals[idx[hit]]
    return vals


def interpolate(table: CoefficientTable, r: float) -> EffectiveCoefficients:
    """Coefficients at one radius; clamped with a warning outside the knot range.

    Raises:
        NumericalError: an interpolated matrix or tensor lost positive definiteness.
    """
    rc = float(_clamp(table, r))
    fields = interpolate_fields(table, np.array([rc]), clamp=False)
    B_q = _eval(table, "B_c_quadratic", np.array([rc]))[0].reshape(3, 3)
    N_p = voigt21_to_tensor(_eval(table, "N_paper", np.array([rc]))[0])
    # the tensor form is rebuilt from the stored components, not from Mandel
    N_s = voigt21_to_tensor(_eval(table, "N_s", np.array([rc]))[0])
    return EffectiveCoefficients(
        r=rc,
        m=porosity(rc),
        B_w=fields["B_w"][0],
        B_c=fields["B_c"][0],
        N_s=N_s,
        B_c_quadratic=0.5 * (B_q + B_q.T),
        N_paper=N_p,
    )


def interpolate_fields(table: CoefficientTable, r, clamp: bool = True) -> dict:
    """Vectorized lookup for a radius field.

    Returns ``B_w`` and ``B_c`` with shape ``r.shape + (3, 3)`` and ``N_s``
    as Mandel matrices ``r.shape + (6, 6)``.
    """
    r = np.asarray(r, dtype=np.float64)
    rc = _clamp(table, r, once=True) if clamp else r
    flat = rc.ravel()
    out = {}
    for name in ("B_w", "B_c"):
        M = _eval(table, name, flat).reshape(-1, 3, 3)
        M = 0.5 * (M + M.transpose(0, 2, 1))
        if flat.size and np.linalg.eigvalsh(M).min() <= 0.0:
            raise NumericalError(f"interpolated {name} lost positive definiteness")
        out[name] = M.reshape(r.shape + (3, 3))
    N = tensor_to_mandel(voigt21_to_tensor(_eval(table, "N_s", flat)))
    N = 0.5 * (N + N.transpose(0, 2, 1))
    if flat.size and np.linalg.eigvalsh(N).min() <= 0.0:
        raise NumericalError("interpolated N_s lost positive definiteness")
    out["N_s"] = N.reshape(r.shape + (6, 6))
    return out


def _knot_job(args):
    i, r, n, mu1, lambda0, c_s, tol = args
    try:
        return compute_effective_coefficients(r, n, mu1, lambda0, c_s, tol)
    except LeachError as exc:
        message = f"knot {i} (r={r:.6g}): {exc}"
        cls = InputError if isinstance(exc, InputError) else NumericalError
        raise cls(message) from exc


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise InputError(f"{WORKERS_ENV} must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def tabulate(
    bounds: RadiusBounds,
    knots: int,
    n: int,
    mu1: float = 1.0,
    lambda0: float = 1.0,
    c_s: float = 1.0,
    tol: float = 1e-10,
    workers: int | None = None,
) -> CoefficientTable:
    """Solve the cell problems at ``knots`` equally spaced radii in ``[r_min, r_max]``.

    Raises:
        InputError: ``knots < 5`` or ``n < 16``.
        NumericalError: a cell solve failed (message names the knot) or the
            finished table violates monotonicity or definiteness.
    """
    if int(knots) != knots or knots < MIN_KNOTS:
        raise InputError(f"knots must be an integer >= {MIN_KNOTS}, got {knots}")
    if int(n) != n or n < 16:
        raise InputError(f"cell resolution must be an integer >= 16, got {n}")
    radii = np.linspace(bounds.r_min, bounds.r_max, int(knots))
    jobs = [(i, float(r), int(n), mu1, lambda0, c_s, tol) for i, r in enumerate(radii)]
    workers = default_workers() if workers is None else int(workers)
    logger.info("tabulating %d knots at n=%d with %d worker(s)", len(jobs), n, workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            entries = list(pool.map(_knot_job, jobs))
    else:
        entries = [_knot_job(job) for job in jobs]
    provenance = {"tol": tol, "mu1": mu1, "lambda0": lambda0, "c_s": c_s}
    return CoefficientTable(radii, tuple(entries), int(n), provenance)
