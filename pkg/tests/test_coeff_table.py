import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leachsim.coeff_table import (
    CoefficientTable,
    compute_effective_coefficients,
    interpolate,
    interpolate_fields,
    tabulate,
    tensor_to_voigt21,
    voigt21_to_tensor,
)
from leachsim.errors import InputError, NumericalError
from leachsim.fem import mandel_to_tensor
from leachsim.geometry import RadiusBounds, porosity


def test_table_shape_and_monotone(table16):
    assert len(table16.entries) == 5
    ks = [e.k for e in table16.entries]
    ds = [e.d for e in table16.entries]
    assert all(a > b for a, b in zip(ks, ks[1:]))
    assert all(a > b for a, b in zip(ds, ds[1:]))
    assert table16.r_min == 0.05 and table16.r_max == 0.45


def test_porosity_column_closed_form(table16):
    for e in table16.entries:
        assert abs(e.m - porosity(e.r)) <= 1e-14


def test_tabulate_deterministic_and_parallel(table16):
    again = tabulate(RadiusBounds(0.05, 0.45), 5, 16, workers=2)
    assert again == table16


def test_tabulate_rejects_small_inputs():
    with pytest.raises(InputError):
        tabulate(RadiusBounds(), 4, 16)
    with pytest.raises(InputError):
        tabulate(RadiusBounds(), 5, 8)


def test_knot_reproduction(table16):
    for e in table16.entries:
        assert interpolate(table16, e.r) == e


def test_clamp_below_range_warns(table16, caplog):
    with caplog.at_level(logging.WARNING, logger="leachsim.coeff_table"):
        e = interpolate(table16, 0.01)
    assert e == table16.entries[0]
    assert any("clamped" in rec.message for rec in caplog.records)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45))
def test_interpolation_monotone_between_knots(table16, r):
    e = interpolate(table16, r)
    i = int(np.clip(np.searchsorted(table16.knots, r) - 1, 0, 3))
    lo, hi = table16.entries[i], table16.entries[i + 1]
    assert hi.k <= e.k <= lo.k
    assert hi.d <= e.d <= lo.d
    assert not e.violations()


def test_fields_lookup_matches_scalar_lookup(table16, rng):
    r = rng.uniform(0.05, 0.45, (3, 4))
    f = interpolate_fields(table16, r)
    assert f["B_w"].shape == (3, 4, 3, 3) and f["N_s"].shape == (3, 4, 6, 6)
    e = interpolate(table16, r[1, 2])
    np.testing.assert_allclose(f["B_w"][1, 2], e.B_w, rtol=1e-14)
    np.testing.assert_allclose(mandel_to_tensor(f["N_s"][1, 2]), e.N_s, rtol=1e-13, atol=1e-15)


def test_voigt21_round_trip(table16):
    N = table16.entries[2].N_s
    assert np.array_equal(voigt21_to_tensor(tensor_to_voigt21(N)), N)


def test_table_rejects_non_monotone(table16):
    entries = list(table16.entries)
    entries[1], entries[2] = (
        dataclasses.replace(entries[2], r=entries[1].r, m=entries[1].m),
        dataclasses.replace(entries[1], r=entries[2].r, m=entries[2].m),
    )
    with pytest.raises(NumericalError, match="not strictly decreasing"):
        CoefficientTable(table16.knots, entries, 16)


def test_table_rejects_indefinite(table16):
    entries = list(table16.entries)
    entries[0] = dataclasses.replace(entries[0], B_w=-entries[0].B_w)
    with pytest.raises(NumericalError, match="knot 0"):
        CoefficientTable(table16.knots, entries, 16)


def test_effective_coefficients_consistent_with_cell_solvers(table16):
    e = compute_effective_coefficients(0.25, 16)
    assert e == table16.entries[2]
