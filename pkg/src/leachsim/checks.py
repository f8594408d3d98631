"""Fast invariant suite behind ``leachsim check``.

Each check returns ``(name, ok, detail)``; nothing here writes outside a
temporary directory.
"""

from __future__ import annotations

import logging
import tempfile
from pathlib import Path

import numpy as np

from . import numerics
from .cell_problems import solve_diffusion_cell, solve_elasticity_cell, solve_stokes_cell
from .coeff_table import tabulate
from .errors import LeachError
from .fem import tensor_to_mandel
from .free_boundary import apply_F, march_slabs
from .geometry import RadiusBounds, build_cell_mask, porosity
from .io import dissolved_volume, read_snapshot, read_table, write_snapshot, write_table
from .macro import MacroState, Profile, ReservoirSpec, solve_pressure_head

logger = logging.getLogger(__name__)

CELL_N = 16


def _rel_asym(M):
    return float(np.abs(M - M.T).max() / np.abs(M).max())


def check_backends():
    from . import _kernels_py

    rng = np.random.default_rng(0)
    shape = (6, 5, 4)
    fx, fy, fz = (rng.uniform(0.5, 1.5, shape) for _ in range(3))
    diag = rng.uniform(0.1, 1.0, shape)
    x = rng.standard_normal(shape)
    ref = _kernels_py.stencil_apply(fx, fy, fz, diag, x)
    got = numerics._kern.stencil_apply(fx, fy, fz, diag, x)
    err = float(np.abs(ref - got).max())
    return "kernel backends agree", err < 1e-12, f"backend={numerics.BACKEND}, max diff {err:.1e}"


def check_stokes():
    mask = build_cell_mask(0.25, CELL_N)
    B = solve_stokes_cell(mask, tol=1e-10).B_w
    asym = _rel_asym(B)
    lam = float(np.linalg.eigvalsh(0.5 * (B + B.T)).min())
    ok = asym < 1e-8 and lam > 0
    return "permeability symmetric positive definite", ok, f"asym {asym:.1e}, min eig {lam:.4g}"


def check_diffusion():
    r = 0.25
    sol = solve_diffusion_cell(build_cell_mask(r, CELL_N), tol=1e-10)
    m = porosity(r)
    err = float(np.abs(sol.B_c_energy + sol.B_c_quadratic - m * np.eye(3)).max())
    d = sol.diffusivity
    ok = err < 1e-6 and 0 < d < m
    return "diffusivity identities", ok, f"|B_e + B_q - mI| {err:.1e}, d {d:.4f} < m {m:.4f}"


def check_elasticity():
    mask = build_cell_mask(0.25, CELL_N)
    N = solve_elasticity_cell(mask, tol=1e-10).N_energy
    scale = float(np.abs(N).max())
    sym = max(
        float(np.abs(N - N.transpose(1, 0, 2, 3)).max()),
        float(np.abs(N - N.transpose(2, 3, 0, 1)).max()),
    ) / scale
    lam = float(np.linalg.eigvalsh(tensor_to_mandel(N)).min())
    zero = solve_elasticity_cell(mask, forcing_scale=0.0)
    exact = not np.any(zero.N_energy) and not np.any(zero.W_s)
    ok = sym < 1e-8 and lam > 0 and exact
    return "stiffness symmetric positive definite", ok, f"sym {sym:.1e}, min eig {lam:.4g}, zero forcing exact {exact}"


def _small_table():
    return tabulate(RadiusBounds(0.05, 0.45), 5, CELL_N, workers=1)


def check_trivial_head(table):
    spec = ReservoirSpec.build(8)
    rng = np.random.default_rng(1)
    r = rng.uniform(0.05, 0.45, spec.grid.shape)
    phi, w_f = solve_pressure_head(r, table, spec)
    worst = max(float(np.abs(phi).max()), float(np.abs(w_f).max()))
    return "trivial head data give zero head", worst <= 1e-10, f"max |phi|,|w_f| {worst:.1e}"


def check_coupled(table):
    spec = ReservoirSpec.build(8, c0=Profile(1.0, 0.2, 0))
    r0 = np.full(spec.grid.shape, 0.3)
    theta, dt = 0.5, 0.05
    radius, c, reports = march_slabs(
        r0, spec, table, theta=theta, alpha_c=1.0, dt=dt, steps=8, slab_steps=4
    )
    lo, hi = float(c.min()), float(c.max())
    drop = radius.values[:-1] - radius.values[1:]
    vols = [dissolved_volume(radius[k], r0) for k in range(len(radius))]
    resid = max(
        float(np.abs(apply_F(radius[0], c[:5], theta, dt).values - radius.values[:5]).max()),
        float(np.abs(apply_F(radius[4], c[4:], theta, dt).values - radius.values[4:]).max()),
    )
    ok = (
        lo >= -1e-10 and hi <= 1 + 1e-10
        and drop.min() >= 0 and drop.max() <= theta * dt * (1 + 1e-12)
        and np.all(np.diff(vols) >= 0)
        and resid <= 1e-10
        and all(rep.converged for rep in reports)
    )
    detail = f"c in [{lo:.3g}, {hi:.3g}], fixed-point residual {resid:.1e}, picard {[r.iterations for r in reports]}"
    return "coupled run: bounds, monotonicity, fixed point", ok, detail


def check_round_trips(table):
    with tempfile.TemporaryDirectory() as tmp:
        path = write_table(Path(tmp) / "t.csv", table)
        same_table = read_table(path) == table
        n = 4
        rng = np.random.default_rng(2)
        f = lambda *s: rng.standard_normal(s + (n, n, n))  # noqa: E731
        state = MacroState(0.5, rng.uniform(0, 1, (n, n, n)), f(), f(3), f(3), f(), f())
        r = rng.uniform(0.05, 0.45, (n, n, n))
        a = write_snapshot(state, r, Path(tmp) / "a.vtk")
        b = write_snapshot(state, r, Path(tmp) / "b.vtk")
        snap = read_snapshot(a)
        same_snap = a.read_bytes() == b.read_bytes() and all(
            np.array_equal(snap[k], getattr(state, k)) for k in ("c", "phi", "w_f", "w_s", "p_f", "p_s")
        ) and np.array_equal(snap["r"], r)
    ok = same_table and same_snap
    return "table and snapshot round trips", ok, f"table {same_table}, snapshot {same_snap}"


def run_checks(report=print) -> bool:
    """Run every check, report one line each; True if all pass."""
    results = []

    def run(fn, *args):
        try:
            name, ok, detail = fn(*args)
        except LeachError as exc:
            name, ok, detail = fn.__name__, False, f"raised {type(exc).__name__}: {exc}"
        results.append(ok)
        report(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")

    for fn in (check_backends, check_stokes, check_diffusion, check_elasticity):
        run(fn)
    table = _small_table()
    for fn in (check_trivial_head, check_coupled, check_round_trips):
        run(fn, table)
    return all(results)
