"""Dissolution law and the fixed-point construction on time slabs.

The grain radius shrinks at rate ``theta * c``. On each slab the map
``r -> F(c(r))`` (run the diffusion with radii ``r``, then integrate the
dissolution law) is iterated to its fixed point; slabs are chained so each
one starts from the radius and concentration where the last one ended.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coeff_table import CoefficientTable, tabulate
from .errors import (
    InputError,
    IntegrityError,
    LeachError,
    PicardDivergenceError,
    SimulationError,
)
from .geometry import porosity
from .io import dissolved_volume, read_table, write_series, write_snapshot, write_table
from .macro import MacroState, ReservoirSpec, run_diffusion, solve_lame, solve_pressure_head
from .numerics import GridSpec

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RadiusField:
    """Radius levels ``values[k]`` at ``times[k]`` on the reservoir grid."""

    grid: GridSpec
    times: np.ndarray
    values: np.ndarray  # (levels, n, n, n)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or self.values.shape[1:] != self.grid.shape:
            raise InputError(f"radius levels {self.values.shape} do not match grid {self.grid.shape}")
        if self.times.shape != (self.values.shape[0],):
            raise InputError("one time per radius level required")
        if np.any(np.diff(self.times) <= 0):
            raise InputError("radius times must increase")
        if not np.all(np.isfinite(self.values)) or self.values.min() < 0.0 or self.values.max() > 0.5:
            raise InputError("radius must lie in [0, 1/2]")
        if np.any(np.diff(self.values, axis=0) > 0.0):
            raise IntegrityError("radius grew in time at some node")

    @property
    def r0(self) -> np.ndarray:
        return self.values[0]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def __len__(self):
        return len(self.times)

    def __getitem__(self, k):
        return self.values[k]

    @classmethod
    def constant(cls, grid: GridSpec, r: np.ndarray, times) -> "RadiusField":
        times = np.asarray(times, dtype=np.float64)
        return cls(grid, times, np.broadcast_to(r, (len(times),) + grid.shape).copy())


@dataclass
class PicardReport:
    slab: int
    iterations: int = 0
    differences: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False

    def record(self, diff: float):
        self.iterations += 1
        self.differences.append(float(diff))
        if len(self.differences) > 1:
            prev = self.differences[-2]
            self.ratios.append(float(diff / prev) if prev > 0 else 0.0)


def apply_F(r0, c_history, theta: float, dt: float, grid: GridSpec | None = None, t0: float = 0.0) -> RadiusField:
    """``R(t_k) = max(0, r0 - theta * int_0^{t_k} c)`` with the trapezoidal rule.

    Raises:
        InputError: negative concentration, ``theta < 0`` or ``dt <= 0``.
    """
    if not theta >= 0:
        raise InputError(f"theta must be non-negative, got {theta}")
    if not dt > 0:
        raise InputError(f"dt must be positive, got {dt}")
    C = np.asarray(c_history, dtype=np.float64)
    r0 = np.asarray(r0, dtype=np.float64)
    if C.ndim != r0.ndim + 1 or C.shape[1:] != r0.shape:
        raise InputError("c_history levels do not match the radius field")
    if np.any(C < 0.0) or not np.all(np.isfinite(C)):
        raise InputError("concentration history has negative or non-finite values")
    increments = 0.5 * dt * (C[1:] + C[:-1])
    integral = np.concatenate([np.zeros((1,) + r0.shape), np.cumsum(increments, axis=0)])
    R = np.maximum(0.0, r0[None] - theta * integral)
    grid = grid or GridSpec(tuple(r0.shape), tuple(1.0 / s for s in r0.shape))
    return RadiusField(grid, t0 + dt * np.arange(len(C)), R)


def picard_slab(
    r_start,
    c_start,
    spec: ReservoirSpec,
    table: CoefficientTable,
    *,
    theta: float,
    alpha_c: float,
    dt: float,
    steps: int,
    t0: float = 0.0,
    tol: float = 1e-10,
    max_iter: int = 30,
    relaxation: float = 1.0,
    linear_tol: float = 1e-12,
    slab: int = 0,
    r_guess: RadiusField | None = None,
):
    """Fixed point ``r = F(c(r))`` on one slab of ``steps`` steps.

    Returns ``(r, c_history, report)`` where ``c_history`` solves the
    diffusion with radii ``r`` and ``max |r - F(c_history)| <= tol``.

    Raises:
        PicardDivergenceError: ``max_iter`` exceeded; carries the report.
    """
    if not 0.0 < relaxation <= 1.0:
        raise InputError(f"relaxation must lie in (0, 1], got {relaxation}")
    times = t0 + dt * np.arange(steps + 1)
    r_start = np.asarray(r_start, dtype=np.float64)
    r = RadiusField.constant(spec.grid, r_start, times) if r_guess is None else r_guess
    if r.values.shape[0] != steps + 1:
        raise InputError("initial guess has the wrong number of levels")
    report = PicardReport(slab)
    while True:
        c_hist = run_diffusion(
            r.values, spec, table, alpha_c, dt, steps, tol=linear_tol, c_init=c_start
        )
        image = apply_F(r_start, c_hist, theta, dt, spec.grid, t0)
        diff = float(np.abs(image.values - r.values).max())
        report.record(diff)
        logger.debug("slab %d picard %d: diff %.3e", slab, report.iterations, diff)
        if diff <= tol:
            report.converged = True
            return r, c_hist, report
        if report.iterations >= max_iter:
            ratios = report.ratios[-3:]
            hint = (
                "differences are not decreasing; use a shorter slab"
                if ratios and min(ratios) >= 1.0
                else "raise max_iter or shorten the slab"
            )
            raise PicardDivergenceError(
                f"slab {slab}: Picard did not reach {tol:.1e} in {max_iter} iterations "
                f"(last difference {diff:.3e}); {hint}",
                report=report,
            )
        if relaxation == 1.0:
            r = image
        else:
            r = RadiusField(spec.grid, times, (1.0 - relaxation) * r.values + relaxation * image.values)


def default_slab_length(T: float, theta: float, M0: float = 1.0) -> float:
    """``min(T, M0 / (2 theta))``: the radius moves by at most ``M0/2`` per slab."""
    return T if theta == 0 else min(T, 0.5 * M0 / theta)


def march_slabs(
    r0,
    spec: ReservoirSpec,
    table: CoefficientTable,
    *,
    theta: float,
    alpha_c: float,
    dt: float,
    steps: int,
    slab_steps: int,
    tol: float = 1e-10,
    max_iter: int = 30,
    relaxation: float = 1.0,
    linear_tol: float = 1e-12,
):
    """Chain Picard slabs over ``steps`` steps.

    Returns ``(RadiusField, c_levels, reports)``; any failure is re-raised
    with ``slab`` and ``step`` attributes set.
    """
    if slab_steps < 1:
        raise InputError("slab_steps must be >= 1")
    r_levels = [np.asarray(r0, dtype=np.float64)]
    c_levels = [spec.c0_field()]
    reports = []
    done = 0
    slab = 0
    while done < steps:
        n = min(slab_steps, steps - done)
        try:
            r, c_hist, report = picard_slab(
                r_levels[-1], c_levels[-1], spec, table,
                theta=theta, alpha_c=alpha_c, dt=dt, steps=n, t0=done * dt,
                tol=tol, max_iter=max_iter, relaxation=relaxation, linear_tol=linear_tol, slab=slab,
            )
        except LeachError as exc:
            exc.slab = slab
            if getattr(exc, "step", None) is not None:
                exc.step += done
            raise
        reports.append(report)
        r_levels.extend(r.values[1:])
        c_levels.extend(c_hist[1:])
        done += n
        slab += 1
    times = dt * np.arange(steps + 1)
    return RadiusField(spec.grid, times, np.array(r_levels)), np.array(c_levels), reports


# full coupled run --------------------------------------------------------------


@dataclass(eq=False)
class SimulationResult:
    config: object
    table: CoefficientTable
    table_path: Path
    out_dir: Path
    radius: RadiusField
    concentration: np.ndarray  # (levels, n, n, n)
    snapshots: list  # (step, t, path)
    series: dict
    picard_reports: list
    extensions: list = field(default_factory=list)


def _resolve_table(config, out_dir: Path):
    """Table from the configured path, or a cached/auto-built one beside ``out_dir``."""
    path = config.table_path()
    if path is not None:
        return read_table(path), path
    cache = out_dir.parent / f"{out_dir.name}.table.csv"
    wanted = {"tol": config.cell_tol, "mu1": config.mu1, "lambda0": config.lambda0, "c_s": config.c_s}
    if cache.exists():
        try:
            table = read_table(cache)
        except LeachError as exc:
            logger.warning("ignoring unreadable cached table %s: %s", cache, exc)
        else:
            same = (
                table.cell_resolution == config.cell_n
                and len(table.knots) == config.knots
                and table.r_min == config.r_min
                and table.r_max == config.r_max
                and table.provenance == wanted
            )
            if same:
                logger.info("reusing cached table %s", cache)
                return table, cache
    table = tabulate(
        config.bounds, config.knots, config.cell_n, config.mu1, config.lambda0, config.c_s, config.cell_tol
    )
    write_table(cache, table)
    return table, cache


def _audit(radius: RadiusField, theta: float, dt: float, volumes: np.ndarray) -> None:
    drop = radius.values[:-1] - radius.values[1:]
    if np.any(drop < 0.0):
        raise IntegrityError("radius increased at some node")
    bound = theta * dt
    if np.any(drop > bound * (1.0 + 1e-12) + 1e-15):
        raise IntegrityError(f"radius dropped faster than theta*dt = {bound:.3e} in one step")
    if np.any(np.diff(volumes) < 0.0):
        raise IntegrityError("dissolved volume decreased")


def run_simulation(config, out_dir) -> SimulationResult:
    """Run the coupled model described by ``config`` and write its outputs to ``out_dir``.

    Outputs: ``config.ini`` (canonical echo), ``series.csv``, ``picard.csv``,
    ``snapshots.csv``, ``snap_XXXX.vtk`` files and, when non-default
    modelling options are active, ``extensions.txt``.

    Raises:
        SimulationError: tagged with the failing stage, slab and step.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extensions = []
    try:
        table, table_path = _resolve_table(config, out_dir)
    except LeachError as exc:
        raise SimulationError("table", exc) from exc
    spec = config.reservoir()
    r0 = config.r0_field()
    dt, steps = config.dt, config.steps
    if steps == 0:
        radius = RadiusField(spec.grid, np.zeros(1), r0[None])
        conc = np.array([spec.c0_field()])
        reports = []
    else:
        try:
            radius, conc, reports = march_slabs(
                r0, spec, table,
                theta=config.theta, alpha_c=config.alpha_c, dt=dt, steps=steps,
                slab_steps=config.slab_steps, tol=config.picard_tol,
                max_iter=config.picard_max_iter, relaxation=config.relaxation,
                linear_tol=config.tol,
            )
        except LeachError as exc:
            raise SimulationError(
                "picard", exc, slab=getattr(exc, "slab", None), step=getattr(exc, "step", None)
            ) from exc
    times = dt * np.arange(steps + 1)
    volumes = np.array([dissolved_volume(radius[k], r0) for k in range(steps + 1)])
    try:
        _audit(radius, config.theta, dt, volumes)
    except LeachError as exc:
        raise SimulationError("audit", exc) from exc

    head_bc = config.head_bc()
    if head_bc is not None:
        extensions.append("inhomogeneous head data on S1/S2 (beyond the homogenized model's well data)")
        logger.warning("head_bc enabled: %s", extensions[-1])
    every = config.snapshot_every or max(steps, 1)
    out_steps = sorted({0, steps} | set(range(0, steps + 1, every)))
    snapshots = []
    p0 = spec.p0_field()
    phi_cache = {}

    def head(k):
        if k not in phi_cache:
            phi_cache[k] = solve_pressure_head(radius[k], table, spec, config.mu1, head_bc, tol=config.tol)
        return phi_cache[k]

    for k in out_steps:
        try:
            phi, w_f = head(k)
            if steps == 0:
                p_f = p0.copy()
            else:
                # p_f is the time derivative of the pressure antiderivative
                j0, j1 = (k - 1, k) if k > 0 else (0, 1)
                p_f = p0 + (head(j1)[0] - head(j0)[0]) / dt
        except LeachError as exc:
            raise SimulationError("head", exc, step=k) from exc
        try:
            w_s, p_s = solve_lame(radius[k], table, spec, config.lambda0, config.c_s, tol=config.tol)
        except LeachError as exc:
            raise SimulationError("lame", exc, step=k) from exc
        state = MacroState(float(times[k]), conc[k], phi, w_f, w_s, p_f, p_s)
        path = out_dir / f"snap_{k:04d}.vtk"
        try:
            write_snapshot(state, radius[k], path)
        except (OSError, LeachError) as exc:
            raise SimulationError("output", exc, step=k) from exc
        snapshots.append((k, float(times[k]), path))

    series = {
        "step": np.arange(steps + 1, dtype=np.float64),
        "t": times,
        "dissolved_volume": volumes,
        "porosity_mean": np.array([porosity(radius[k]).mean() for k in range(steps + 1)]),
        "c_min": conc.min(axis=(1, 2, 3)),
        "c_mean": conc.mean(axis=(1, 2, 3)),
        "c_max": conc.max(axis=(1, 2, 3)),
        "r_min": radius.values.min(axis=(1, 2, 3)),
        "r_mean": radius.values.mean(axis=(1, 2, 3)),
        "r_max": radius.values.max(axis=(1, 2, 3)),
    }
    if np.any(np.diff(series["porosity_mean"]) < 0.0):
        raise SimulationError("audit", IntegrityError("mean porosity decreased"))
    write_series(out_dir / "series.csv", series)
    picard_rows = {"slab": [], "iteration": [], "difference": [], "ratio": []}
    for rep in reports:
        for i, d in enumerate(rep.differences):
            picard_rows["slab"].append(rep.slab)
            picard_rows["iteration"].append(i + 1)
            picard_rows["difference"].append(d)
            picard_rows["ratio"].append(rep.ratios[i - 1] if i > 0 else float("nan"))
    write_series(out_dir / "picard.csv", picard_rows)
    write_series(
        out_dir / "snapshots.csv",
        {"step": [s[0] for s in snapshots], "t": [s[1] for s in snapshots]},
    )
    (out_dir / "config.ini").write_text(config.to_ini())
    if extensions:
        (out_dir / "extensions.txt").write_text("".join(f"{e}\n" for e in extensions))
    return SimulationResult(
        config, table, Path(table_path), out_dir, radius, conc, snapshots, series, reports, extensions
    )
