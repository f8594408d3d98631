import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from leachsim.coeff_table import interpolate
from leachsim.errors import InputError, MaxPrincipleError
from leachsim.macro import (
    MacroState,
    Profile,
    ReservoirSpec,
    diffusion_balance,
    lame_system,
    run_diffusion,
    solve_lame,
    solve_pressure_head,
    step_diffusion,
)
from leachsim.numerics import cg_solve

from manufactured import diffusion_space_errors, head_errors, observed_orders


def test_profile():
    p = Profile(1.0, 0.0, 0)
    assert p(-0.5, 0, 0) == 1.0 and p(0.5, 0, 0) == 0.0
    np.testing.assert_array_equal(p.gradient, [-1.0, 0, 0])
    assert Profile.constant(2.0)(np.zeros(3), 0, 0).tolist() == [2.0] * 3
    with pytest.raises(InputError):
        Profile(0.0, 1.0, 3)


def test_reservoir_spec_validation():
    with pytest.raises(InputError):
        ReservoirSpec.build(8, c0=1.5)
    with pytest.raises(InputError):
        ReservoirSpec.build(8, c0=Profile(0.0, 1.0, 2))
    spec = ReservoirSpec.build(8)
    with pytest.raises(InputError):
        ReservoirSpec(spec.grid, Profile(0.0, 1.0, 1), spec.c0)


def test_macro_state_rejects_nan():
    z = np.zeros((2, 2, 2))
    with pytest.raises(InputError):
        MacroState(0.0, z * np.nan, z, z[None], z[None], z, z)


# head -------------------------------------------------------------------------


@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(seed=st.integers(0, 2**31 - 1))
def test_trivial_head_data_give_zero(table16, seed):
    spec = ReservoirSpec.build(8)
    r = np.random.default_rng(seed).uniform(0.0, 0.5, spec.grid.shape)
    phi, w_f = solve_pressure_head(r, table16, spec)
    assert np.abs(phi).max() <= 1e-10 and np.abs(w_f).max() <= 1e-10


def test_linear_head_is_exact(table16):
    spec = ReservoirSpec.build(8)
    r = np.full(spec.grid.shape, 0.25)
    k = interpolate(table16, 0.25).B_w[0, 0]
    phi, w_f = solve_pressure_head(r, table16, spec, mu1=2.0, head_bc={"S1": -0.5, "S2": 0.5})
    x1 = spec.centers()[0]
    assert np.abs(phi - x1).max() <= 1e-10
    assert np.abs(w_f[0] + k / 2.0).max() <= 1e-10
    assert np.abs(w_f[1:]).max() <= 1e-10


def test_head_second_order(table16):
    errs = head_errors(table16, ns=(8, 16, 32))
    assert observed_orders(errs).min() >= 1.8


def test_head_rejects_unknown_faces(table16):
    spec = ReservoirSpec.build(4)
    with pytest.raises(InputError):
        solve_pressure_head(np.full(spec.grid.shape, 0.2), table16, spec, head_bc={"S0": 1.0})


# Lame ---------------------------------------------------------------------------


def test_lame_constant_p0(table16):
    spec = ReservoirSpec.build(6, p1=2.0, p2=2.0)
    w_s, p_s = solve_lame(np.full(spec.grid.shape, 0.3), table16, spec)
    assert not np.any(w_s)
    assert np.array_equal(p_s, np.full(spec.grid.shape, 2.0))


def test_lame_energy_identity_and_residual(table16, rng):
    spec = ReservoirSpec.build(6)
    r = rng.uniform(0.1, 0.4, spec.grid.shape)
    p0 = Profile(-0.5, 0.5, 2)  # p0 = x3
    op, b = lame_system(r, table16, spec, 1.0, 1.0, p0)
    w = cg_solve(op, b, tol=1e-12).reshape(op.shape)
    assert np.linalg.norm(op.matvec(w) - b) <= 1e-11 * np.linalg.norm(b)
    energy = float(np.vdot(w, op.matvec(w)))
    work = float(np.vdot(w, b))
    assert abs(energy - work) <= 1e-8 * abs(work)
    assert energy > 0


def test_lame_linear_in_load(table16, rng):
    spec = ReservoirSpec.build(6)
    r = rng.uniform(0.1, 0.4, spec.grid.shape)
    w1, _ = solve_lame(r, table16, spec, p0=Profile(-0.5, 0.5, 2))
    w2, _ = solve_lame(r, table16, spec, p0=Profile(-1.0, 1.0, 2))
    assert np.abs(w2 - 2 * w1).max() <= 1e-12 * np.abs(w1).max()


# diffusion ----------------------------------------------------------------------


def test_stationary_state_is_exact(table16):
    spec = ReservoirSpec.build(8, c0=0.7)
    r = np.full(spec.grid.shape, 0.3)
    c = step_diffusion(spec.c0_field(), r, r, 0.1, table16, spec)
    assert np.array_equal(c, spec.c0_field())


def test_step_rejects_bad_input(table16):
    spec = ReservoirSpec.build(4)
    r = np.full(spec.grid.shape, 0.3)
    c = spec.c0_field()
    with pytest.raises(InputError):
        step_diffusion(c, r, r, 0.0, table16, spec)
    with pytest.raises(InputError):
        step_diffusion(c, r, r + 0.01, 0.1, table16, spec)
    with pytest.raises(InputError):
        step_diffusion(c + 0.5, r, r, 0.1, table16, spec)


def test_overshoot_is_reported(table16):
    spec = ReservoirSpec.build(4, c0=0.5)
    r = np.full(spec.grid.shape, 0.3)
    with pytest.raises(MaxPrincipleError):
        step_diffusion(spec.c0_field(), r, r, 0.1, table16, spec, source=np.full(spec.grid.shape, 100.0))


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    seed=st.integers(0, 2**31 - 1),
    c1=st.floats(0.0, 1.0), c2=st.floats(0.0, 1.0),
    dt=st.floats(1e-3, 1.0), alpha=st.floats(0.1, 10.0),
)
def test_maximum_principle_and_balance(table16, seed, c1, c2, dt, alpha):
    rng = np.random.default_rng(seed)
    spec = ReservoirSpec.build(6, c0=Profile(c1, c2, 0) if c1 != c2 else c1)
    r_old = rng.uniform(0.05, 0.45, spec.grid.shape)
    r_new = r_old - rng.uniform(0, 0.05, spec.grid.shape) * (r_old > 0.05)
    c_old = rng.uniform(0, 1, spec.grid.shape)
    c_new = step_diffusion(c_old, r_old, r_new, dt, table16, spec, alpha)
    assert c_new.min() >= 0.0 and c_new.max() <= 1.0
    storage, inflow = diffusion_balance(c_old, c_new, r_old, r_new, dt, table16, spec, alpha)
    assert abs(storage - inflow) <= 1e-9 * max(abs(storage), abs(inflow), 1e-12) + 1e-12


def test_balance_precise(table16, rng):
    spec = ReservoirSpec.build(8, c0=Profile(1.0, 0.0, 0))
    r_old = rng.uniform(0.1, 0.4, spec.grid.shape)
    r_new = r_old - 0.01
    c_old = rng.uniform(0.2, 0.8, spec.grid.shape)
    c_new = step_diffusion(c_old, r_old, r_new, 0.05, table16, spec, tol=1e-14, enforce_bounds=False)
    storage, inflow = diffusion_balance(c_old, c_new, r_old, r_new, 0.05, table16, spec)
    assert abs(storage - inflow) <= 1e-12 * abs(storage)


def test_run_diffusion_zero_steps(table16):
    spec = ReservoirSpec.build(4, c0=0.3)
    hist = run_diffusion(np.full((1,) + spec.grid.shape, 0.3), spec, table16, 1.0, 0.1, 0)
    assert len(hist) == 1 and np.array_equal(hist[0], spec.c0_field())


def test_run_diffusion_decays_to_steady_state(table16, rng):
    spec = ReservoirSpec.build(8, c0=0.5)
    r = np.full((21,) + spec.grid.shape, 0.3)
    c_init = np.clip(0.5 + 0.4 * rng.standard_normal(spec.grid.shape), 0, 1)
    hist = run_diffusion(r, spec, table16, 1.0, 0.01, 20, c_init=c_init)
    dist = [np.abs(c - 0.5).max() for c in hist]
    assert all(b <= a for a, b in zip(dist, dist[1:]))
    assert dist[-1] < 0.5 * dist[0]


def test_run_diffusion_time_refinement(table16):
    spec = ReservoirSpec.build(8, c0=Profile(1.0, 0.0, 0))
    c_init = np.full(spec.grid.shape, 0.5)

    def final(steps):
        r = np.full((steps + 1,) + spec.grid.shape, 0.3)
        return run_diffusion(r, spec, table16, 1.0, 0.1 / steps, steps, c_init=c_init)[-1]

    a, b, c = final(5), final(10), final(20)
    # successive differences halve: first order in dt
    ratio = np.abs(a - b).max() / np.abs(b - c).max()
    assert 1.7 < ratio < 2.3


def test_run_diffusion_tags_failing_step(table16):
    spec = ReservoirSpec.build(4, c0=0.5)
    r = np.full((3,) + spec.grid.shape, 0.3)
    with pytest.raises(MaxPrincipleError) as info:
        run_diffusion(r, spec, table16, 1.0, 0.1, 2, sources=lambda k: np.full(spec.grid.shape, 100.0 * k))
    assert info.value.step == 1


def test_diffusion_second_order(table16):
    errs = diffusion_space_errors(table16, ns=(8, 16, 32))
    assert observed_orders(errs).min() >= 1.8


def test_solvers_are_linear(table16, rng):
    spec = ReservoirSpec.build(6, c0=0.0)
    r = rng.uniform(0.1, 0.4, spec.grid.shape)
    n = spec.n
    g = [rng.standard_normal((n, n)) for _ in range(4)]
    f = [rng.standard_normal(spec.grid.shape) for _ in range(2)]

    def head(i):
        return solve_pressure_head(r, table16, spec, head_bc={"S1": g[2 * i], "S2": g[2 * i + 1]},
                                   source=f[i], tol=1e-15)[0]

    both = solve_pressure_head(r, table16, spec, head_bc={"S1": g[0] + g[2], "S2": g[1] + g[3]},
                               source=f[0] + f[1], tol=1e-15)[0]
    assert np.abs(both - head(0) - head(1)).max() <= 1e-12 * np.abs(both).max()

    c = [rng.standard_normal(spec.grid.shape) for _ in range(2)]
    r_new = r - 0.01

    def step(c_old, src):
        return step_diffusion(c_old, r, r_new, 0.1, table16, spec, tol=1e-15, source=src, enforce_bounds=False)

    summed = step(c[0] + c[1], f[0] + f[1])
    assert np.abs(summed - step(c[0], f[0]) - step(c[1], f[1])).max() <= 1e-12 * np.abs(summed).max()
