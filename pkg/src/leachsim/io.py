"""Text persistence: coefficient tables, field snapshots and time series.

All floats are written with 17 significant digits, which round-trips
IEEE doubles exactly, so ``read(write(x)) == x`` bit for bit.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .coeff_table import (
    CoefficientTable,
    EffectiveCoefficients,
    _upper_pairs,
    tensor_to_voigt21,
    voigt21_to_tensor,
)
from .errors import InputError, IntegrityError, TableFormatError
from .fem import VOIGT_PAIRS
from .geometry import GRAIN_VOLUME

logger = logging.getLogger(__name__)

FLOAT = "%.17g"
TABLE_FORMAT_VERSION = "1"


def _fmt(x: float) -> str:
    return FLOAT % x


def _matrix_columns(prefix: str) -> list[str]:
    return [f"{prefix}_{i + 1}{j + 1}" for i in range(3) for j in range(3)]


def _voigt_columns(prefix: str) -> list[str]:
    cols = []
    for I, J in _upper_pairs():
        (a, b), (c, d) = VOIGT_PAIRS[I], VOIGT_PAIRS[J]
        cols.append(f"{prefix}_{a + 1}{b + 1}{c + 1}{d + 1}")
    return cols


TABLE_COLUMNS = (
    ["r", "m", "k_w", "d_c"]
    + _matrix_columns("bw")
    + _matrix_columns("bc")
    + _voigt_columns("ns")
    + _voigt_columns("ns_paper")
    + _matrix_columns("bc_quad")
)


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta")


def write_table(path, table: CoefficientTable) -> Path:
    """Write the CSV and its ``.meta`` sidecar; returns the CSV path."""
    from . import __version__

    path = Path(path)
    lines = [",".join(TABLE_COLUMNS)]
    for e in table.entries:
        row = [e.r, e.m, e.k, e.d]
        row += list(e.B_w.ravel()) + list(e.B_c.ravel())
        row += list(tensor_to_voigt21(e.N_s)) + list(tensor_to_voigt21(e.N_paper))
        row += list(e.B_c_quadratic.ravel())
        lines.append(",".join(_fmt(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")
    meta = {
        "format_version": TABLE_FORMAT_VERSION,
        "code_version": __version__,
        "cell_resolution": str(table.cell_resolution),
        "knots": str(len(table.knots)),
    }
    for key in sorted(table.provenance):
        meta[f"provenance.{key}"] = repr(table.provenance[key])
    meta_path(path).write_text("".join(f"{k}={v}\n" for k, v in meta.items()))
    return path


def _read_meta(path: Path) -> tuple[int, dict]:
    mp = meta_path(path)
    if not mp.exists():
        raise TableFormatError(f"metadata sidecar {mp.name} is missing")
    meta = {}
    for lineno, raw in enumerate(mp.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        if "=" not in raw:
            raise TableFormatError(f"{mp.name}: expected key=value", line=lineno)
        key, value = raw.split("=", 1)
        meta[key.strip()] = value.strip()
    if meta.get("format_version") != TABLE_FORMAT_VERSION:
        raise TableFormatError(f"{mp.name}: unsupported format_version {meta.get('format_version')!r}")
    try:
        n = int(meta["cell_resolution"])
    except (KeyError, ValueError):
        raise TableFormatError(f"{mp.name}: cell_resolution missing or not an integer") from None
    provenance = {}
    for key, value in meta.items():
        if key.startswith("provenance."):
            try:
                provenance[key[len("provenance."):]] = float(value)
            except ValueError:
                provenance[key[len("provenance."):]] = value
    return n, provenance


def read_table(path) -> CoefficientTable:
    """Parse a table written by ``write_table``.

    Raises:
        TableFormatError: header mismatch, row arity, bad numbers (with the
            line number) or a missing/invalid sidecar.
        NumericalError: the parsed table fails its invariants.
    """
    path = Path(path)
    text = path.read_text()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TableFormatError("empty table file", line=1)
    header = lines[0].split(",")
    missing = [c for c in TABLE_COLUMNS if c not in header]
    if missing:
        raise TableFormatError(f"missing column {missing[0]!r}", line=1)
    extra = [c for c in header if c not in TABLE_COLUMNS]
    if extra:
        raise TableFormatError(f"unexpected column {extra[0]!r}", line=1)
    if header != TABLE_COLUMNS:
        raise TableFormatError("columns are not in the expected order", line=1)
    width = len(TABLE_COLUMNS)
    rows = []
    for lineno, raw in enumerate(lines[1:], start=2):
        cells = raw.split(",")
        if len(cells) != width:
            raise TableFormatError(f"expected {width} fields, found {len(cells)}", line=lineno)
        try:
            values = [float(c) for c in cells]
        except ValueError as exc:
            raise TableFormatError(f"not a number ({exc})", line=lineno) from None
        if not all(np.isfinite(values)):
            raise TableFormatError("non-finite value", line=lineno)
        rows.append((lineno, np.array(values)))
    if not text.endswith("\n") and rows:
        raise TableFormatError("file is truncated (no final newline)", line=rows[-1][0])
    n, provenance = _read_meta(path)
    entries = []
    for lineno, v in rows:
        o = 4
        B_w = v[o : o + 9].reshape(3, 3)
        B_c = v[o + 9 : o + 18].reshape(3, 3)
        N_s = voigt21_to_tensor(v[o + 18 : o + 39])
        N_p = voigt21_to_tensor(v[o + 39 : o + 60])
        B_q = v[o + 60 : o + 69].reshape(3, 3)
        e = EffectiveCoefficients(float(v[0]), float(v[1]), B_w, B_c, N_s, B_q, N_p)
        if e.k != v[2] or e.d != v[3]:
            raise TableFormatError("k_w/d_c columns disagree with the matrices", line=lineno)
        entries.append(e)
    if len(entries) < 1:
        raise TableFormatError("table has no rows", line=2)
    return CoefficientTable(np.array([e.r for e in entries]), tuple(entries), n, provenance)


# snapshots -------------------------------------------------------------------

SCALAR_FIELDS = ("c", "r", "phi", "p_f", "p_s")
VECTOR_FIELDS = ("w_f", "w_s")


def _vtk_order(a: np.ndarray) -> np.ndarray:
    """x index fastest, as the format requires."""
    return np.asarray(a).transpose(2, 1, 0).ravel()


def write_snapshot(state, r_field, path) -> Path:
    """Legacy structured-points ASCII file with point data c, r, phi, p_f, p_s, w_f, w_s."""
    path = Path(path)
    c = np.asarray(state.c)
    n = c.shape[0]
    if c.shape != (n, n, n):
        raise InputError("snapshot fields must live on an n^3 grid")
    fields = {"c": c, "r": np.asarray(r_field), "phi": state.phi, "p_f": state.p_f, "p_s": state.p_s}
    for name, f in fields.items():
        if np.shape(f) != (n, n, n):
            raise InputError(f"field {name} has shape {np.shape(f)}, expected {(n, n, n)}")
    for name in VECTOR_FIELDS:
        if np.shape(getattr(state, name)) != (3, n, n, n):
            raise InputError(f"field {name} must have shape (3, n, n, n)")
    h = 1.0 / n
    origin = -0.5 + 0.5 * h
    out = [
        "# vtk DataFile Version 3.0",
        f"leachsim snapshot t={_fmt(float(state.t))}",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n} {n} {n}",
        f"ORIGIN {_fmt(origin)} {_fmt(origin)} {_fmt(origin)}",
        f"SPACING {_fmt(h)} {_fmt(h)} {_fmt(h)}",
        f"POINT_DATA {n**3}",
    ]
    for name in SCALAR_FIELDS:
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [_fmt(x) for x in _vtk_order(fields[name])]
    for name in VECTOR_FIELDS:
        v = np.asarray(getattr(state, name))
        comps = [_vtk_order(v[d]) for d in range(3)]
        out.append(f"VECTORS {name} double")
        out += [f"{_fmt(a)} {_fmt(b)} {_fmt(cc)}" for a, b, cc in zip(*comps)]
    path.write_text("\n".join(out) + "\n")
    return path


def read_snapshot(path) -> dict:
    """Inverse of ``write_snapshot``: ``{"t": float, name: array, ...}``."""
    lines = Path(path).read_text().split("\n")
    if not lines[0].startswith("# vtk DataFile"):
        raise InputError(f"{path}: not a legacy VTK file")
    try:
        t = float(lines[1].split("t=", 1)[1])
        dims = [int(x) for x in lines[4].split()[1:]]
    except (IndexError, ValueError):
        raise InputError(f"{path}: malformed header") from None
    n = dims[0]
    npts = n**3
    out = {"t": t}
    i = 8
    while i < len(lines) and lines[i]:
        head = lines[i].split()
        if head[0] == "SCALARS":
            vals = np.array([float(x) for x in lines[i + 2 : i + 2 + npts]])
            out[head[1]] = vals.reshape(n, n, n).transpose(2, 1, 0)
            i += 2 + npts
        elif head[0] == "VECTORS":
            vals = np.array([[float(x) for x in ln.split()] for ln in lines[i + 1 : i + 1 + npts]])
            out[head[1]] = np.stack([vals[:, d].reshape(n, n, n).transpose(2, 1, 0) for d in range(3)])
            i += 1 + npts
        else:
            raise InputError(f"{path}: unexpected line {i + 1}: {lines[i]!r}")
    return out


# scalars ---------------------------------------------------------------------


def dissolved_volume(r, r0) -> float:
    """``(4 pi / 3) * mean(r0^3 - r^3)``; grains only shrink.

    Raises:
        IntegrityError: ``r > r0`` somewhere.
    """
    r = np.asarray(r, dtype=np.float64)
    r0 = np.asarray(r0, dtype=np.float64)
    if r.shape != r0.shape:
        raise InputError("radius fields are not congruent")
    if np.any(r > r0):
        raise IntegrityError("radius exceeds its initial value somewhere")
    return float(GRAIN_VOLUME * np.mean(r0**3 - r**3))


def write_series(path, columns: dict) -> Path:
    """CSV with one column per key, all of equal length."""
    path = Path(path)
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=np.float64).ravel() for k in names]
    if len({len(a) for a in arrays}) > 1:
        raise InputError("series columns differ in length")
    rows = [",".join(names)]
    rows += [",".join(_fmt(a[i]) for a in arrays) for i in range(len(arrays[0]) if arrays else 0)]
    path.write_text("\n".join(rows) + "\n")
    return path


def read_series(path) -> dict:
    lines = Path(path).read_text().strip("\n").split("\n")
    names = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, len(names))
    return {name: data[:, i] for i, name in enumerate(names)}
