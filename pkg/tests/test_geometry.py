import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leachsim.errors import InputError
from leachsim.geometry import (
    RadiusBounds,
    build_cell_mask,
    chi,
    fluid_is_connected,
    porosity,
)


def test_chi_examples():
    assert chi(0.3, (0, 0, 0)) == 0
    assert chi(0.3, (0.5, 0.5, 0.5)) == 1
    assert chi(0.3, (0.3, 0, 0)) == 0  # boundary counts as solid


def test_chi_rejects_points_outside_cell():
    with pytest.raises(InputError):
        chi(0.3, (0.6, 0, 0))


def test_porosity_closed_form():
    assert porosity(0) == 1.0
    assert porosity(0.25) == pytest.approx(1 - np.pi / 48, abs=1e-15)
    assert porosity(0.5) == pytest.approx(1 - np.pi / 6, abs=1e-15)
    assert porosity(0.5) == pytest.approx(0.4764012, abs=1e-7)


def test_porosity_rejects_out_of_range():
    for r in (-0.1, 0.6, np.nan):
        with pytest.raises(InputError):
            porosity(r)


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_porosity_nonincreasing(a, b):
    if a <= b:
        assert porosity(a) >= porosity(b)


def test_radius_bounds_validation():
    RadiusBounds(0.05, 0.45)
    with pytest.raises(InputError):
        RadiusBounds(0.3, 0.2)
    with pytest.raises(InputError):
        RadiusBounds(0.05, 0.5)


def test_mask_at_r_min_connected():
    assert fluid_is_connected(build_cell_mask(0.05, 16))


def test_mask_rejects_unresolvable_or_degenerate():
    with pytest.raises(InputError):
        build_cell_mask(0.0, 16)
    with pytest.raises(InputError):
        build_cell_mask(0.01, 16)
    with pytest.raises(InputError):
        build_cell_mask(0.25, 4)


def test_mask_fraction_refines():
    m = porosity(0.25)
    errs = [abs(build_cell_mask(0.25, n).fluid_volume_fraction - m) for n in (16, 32, 64)]
    assert errs[0] > errs[1] > errs[2]
    for n, e in zip((16, 32, 64), errs):
        assert e <= 5 / n


def test_mask_axis_permutation_symmetry():
    mask = build_cell_mask(0.3, 32)
    for perm in itertools.permutations(range(3)):
        assert np.array_equal(mask.solid, mask.solid.transpose(perm))


def test_mask_reflection_symmetry():
    mask = build_cell_mask(0.3, 16)
    # grain centred at index 0; y -> -y maps index k to -k mod n
    flipped = np.roll(mask.solid[::-1], 1, axis=0)
    assert np.array_equal(mask.solid, flipped)
