import numpy as np
import pytest

from leachsim.errors import IntegrityError, TableFormatError
from leachsim.io import (
    TABLE_COLUMNS,
    dissolved_volume,
    meta_path,
    read_series,
    read_snapshot,
    read_table,
    write_series,
    write_snapshot,
    write_table,
)
from leachsim.macro import MacroState, ReservoirSpec


def test_table_round_trip(table16, tmp_path):
    p = write_table(tmp_path / "t.csv", table16)
    assert read_table(p) == table16
    assert len(TABLE_COLUMNS) == len(p.read_text().splitlines()[0].split(","))


def test_truncated_table_reports_line(table16, tmp_path):
    p = write_table(tmp_path / "t.csv", table16)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:3]) + "\n" + lines[3][: len(lines[3]) // 2])
    with pytest.raises(TableFormatError) as info:
        read_table(p)
    assert info.value.line == 4


def test_truncated_without_partial_row(table16, tmp_path):
    p = write_table(tmp_path / "t.csv", table16)
    p.write_text(p.read_text().rstrip("\n"))
    with pytest.raises(TableFormatError) as info:
        read_table(p)
    assert info.value.line == 6


def test_foreign_header_names_missing_column(table16, tmp_path):
    p = write_table(tmp_path / "t.csv", table16)
    text = p.read_text().replace("k_w", "perm", 1)
    p.write_text(text)
    with pytest.raises(TableFormatError, match="k_w") as info:
        read_table(p)
    assert info.value.line == 1


def test_bad_number_and_missing_meta(table16, tmp_path):
    p = write_table(tmp_path / "t.csv", table16)
    lines = p.read_text().splitlines()
    lines[2] = "x" + lines[2][1:]
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(TableFormatError) as info:
        read_table(p)
    assert info.value.line == 3
    q = write_table(tmp_path / "u.csv", table16)
    meta_path(q).unlink()
    with pytest.raises(TableFormatError, match="sidecar"):
        read_table(q)


def _state(n, rng):
    f = lambda *s: rng.standard_normal(s + (n, n, n))  # noqa: E731
    return MacroState(0.25, rng.uniform(0, 1, (n, n, n)), f(), f(3), f(3), f(), f())


def test_snapshot_contents_and_determinism(tmp_path, rng):
    spec = ReservoirSpec.build(4, c0=0.8)
    r0 = rng.uniform(0.1, 0.4, spec.grid.shape)
    z = np.zeros(spec.grid.shape)
    state = MacroState(0.0, spec.c0_field(), z, np.zeros((3,) + z.shape), np.zeros((3,) + z.shape), z, z)
    a = write_snapshot(state, r0, tmp_path / "a.vtk")
    b = write_snapshot(state, r0, tmp_path / "b.vtk")
    assert a.read_bytes() == b.read_bytes()
    snap = read_snapshot(a)
    assert np.array_equal(snap["r"], r0) and np.array_equal(snap["c"], spec.c0_field())


def test_snapshot_array_lengths(tmp_path, rng):
    n = 3
    path = write_snapshot(_state(n, rng), rng.uniform(0, 0.5, (n, n, n)), tmp_path / "s.vtk")
    lines = path.read_text().splitlines()
    for i, line in enumerate(lines):
        if line.startswith("SCALARS"):
            block = lines[i + 2 : i + 2 + n**3]
            assert len(block) == n**3 and all(len(x.split()) == 1 for x in block)
        if line.startswith("VECTORS"):
            block = lines[i + 1 : i + 1 + n**3]
            assert sum(len(x.split()) for x in block) == 3 * n**3
    assert "DIMENSIONS 3 3 3" in lines and f"POINT_DATA {n**3}" in lines


def test_snapshot_round_trip_exact(tmp_path, rng):
    state = _state(4, rng)
    r = rng.uniform(0, 0.5, (4, 4, 4))
    snap = read_snapshot(write_snapshot(state, r, tmp_path / "s.vtk"))
    assert snap["t"] == state.t
    for k in ("c", "phi", "w_f", "w_s", "p_f", "p_s"):
        assert np.array_equal(snap[k], getattr(state, k)), k


def test_dissolved_volume():
    r0 = np.full((2, 2, 2), 0.4)
    assert dissolved_volume(r0, r0) == 0.0
    assert dissolved_volume(np.full((2, 2, 2), 0.3), r0) == pytest.approx(0.154985, abs=1e-6)
    with pytest.raises(IntegrityError):
        dissolved_volume(r0 + 0.01, r0)


def test_series_round_trip(tmp_path):
    cols = {"t": np.array([0.0, 0.1, 1 / 3]), "v": np.array([1e-300, np.pi, -2.5])}
    back = read_series(write_series(tmp_path / "s.csv", cols))
    assert all(np.array_equal(back[k], cols[k]) for k in cols)
