import numpy as np
import pytest

from memlab import DegenerateMetricError, InvalidInputError, SolverBlowUpError
from memlab.solver import (
    FieldState,
    GridSpec,
    Monitor,
    cfl_dt,
    characteristic_speeds,
    derivatives,
    divergence_residual,
    evolve,
    evolve_rrme,
    gauge_residual,
    jet_table,
    radial_grid,
    rhs,
    step_rk4,
    support_radius,
    zero_state,
)


def planar(N, x_min=-10.0, x_max=15.0):
    return GridSpec("planar", 1, x_min, x_max, N)


def gaussian_null_wave(grid, amplitude=0.3, width=1.0, t=0.0):
    """phi = a exp(-((x - t) / w)^2), an exact right-moving planar solution."""
    xi = (grid.x - t) / width
    phi = amplitude * np.exp(-(xi**2))
    return FieldState(grid, t, phi, 2 * xi / width * phi)


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        GridSpec("radial", 3, 0.5, 2.0, 64)
    with pytest.raises(InvalidInputError):
        GridSpec("radial", 1, 0.0, 2.0, 64)
    with pytest.raises(InvalidInputError):
        GridSpec("planar", 1, 0.0, 2.0, 8)
    with pytest.raises(InvalidInputError):
        GridSpec("spherical", 3, 0.0, 2.0, 64)
    assert radial_grid(3, 101, 1.0).x_max == pytest.approx(2.1)


def test_state_rejects_non_finite_values():
    grid = planar(32)
    with pytest.raises(SolverBlowUpError):
        FieldState(grid, 0.0, np.full(32, np.nan), np.zeros(32))
    with pytest.raises(InvalidInputError):
        FieldState(grid, 0.0, np.zeros(31), np.zeros(32))


def test_zero_data_has_zero_rhs():
    for grid in (planar(64), radial_grid(3, 64, 1.0), radial_grid(2, 64, 1.0)):
        dphi, dpsi = rhs(zero_state(grid))
        assert not dphi.any() and not dpsi.any()


def test_zero_data_stays_exactly_zero():
    state = evolve(zero_state(radial_grid(3, 128, 0.5)), 0.5)
    assert not state.phi.any() and not state.psi.any()
    assert state.t == pytest.approx(0.5)


def test_fourth_order_derivatives_are_exact_on_cubics():
    grid = planar(64, -1.0, 1.0)
    x = grid.x
    d1, d2 = derivatives(grid, x**3 - x)
    inner = slice(2, -2)
    np.testing.assert_allclose(d1[inner], 3 * x[inner] ** 2 - 1, atol=1e-10)
    np.testing.assert_allclose(d2[inner], 6 * x[inner], atol=1e-8)


def test_linear_fields_are_preserved():
    grid = planar(128, -2.0, 2.0)
    a, b = 0.3, 0.2
    state = FieldState(grid, 0.0, a * grid.x, np.full(grid.N, b))
    later = evolve(state, 0.5)
    np.testing.assert_allclose(later.phi, a * grid.x + b * 0.5, atol=1e-12)
    np.testing.assert_allclose(later.psi, b, atol=1e-12)


def test_planar_null_wave_converges_at_fourth_order():
    amplitude, t_end = 0.3, 2.0
    errors = []
    for N in (401, 801, 1601):
        grid = planar(N)
        final = evolve(gaussian_null_wave(grid, amplitude), t_end, cfl=0.25)
        exact = gaussian_null_wave(grid, amplitude, t=t_end).phi
        errors.append(np.sqrt(grid.h * np.sum((final.phi - exact) ** 2)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 3.5) and np.all(orders < 4.5)


def test_flat_cfl_step():
    grid = planar(101, 0.0, 1.0)
    assert cfl_dt(zero_state(grid), 0.4) == pytest.approx(0.4 * grid.h)


def test_characteristic_speeds_with_moving_gradient():
    grid = planar(64, 0.0, 1.0)
    p, q = 0.3, 0.4
    state = FieldState(grid, 0.0, q * grid.x, np.full(grid.N, p))
    speeds = characteristic_speeds(state)[:, 10]
    g = 1 - p**2 + q**2
    # g^{tt} l^2 - 2 g^{tr} l + g^{rr} = 0 along characteristics dx/dt = l
    gtt, gtr, grr = -1 - p**2 / g, p * q / g, 1 - q**2 / g
    np.testing.assert_allclose(sorted(speeds), sorted(np.roots([gtt, -2 * gtr, grr]).real), atol=1e-12)
    assert cfl_dt(state, 0.4) == pytest.approx(0.4 * grid.h / np.max(np.abs(speeds)))


def test_degenerate_data_raises():
    grid = planar(64, 0.0, 1.0)
    state = FieldState(grid, 0.0, np.zeros(grid.N), np.full(grid.N, 1.0))
    with pytest.raises(DegenerateMetricError):
        rhs(state)
    with pytest.raises(DegenerateMetricError):
        cfl_dt(state)


def test_cfl_bounds():
    with pytest.raises(InvalidInputError):
        evolve(zero_state(planar(32)), 1.0, cfl=0.8)


def test_monitor_warns_once(caplog):
    grid = planar(64, 0.0, 1.0)
    state = FieldState(grid, 0.0, np.zeros(grid.N), np.full(grid.N, 0.8))
    monitor = Monitor(warn_floor=0.5)
    evolve(state, 5 * cfl_dt(state), callbacks=[monitor])
    assert monitor.warned
    assert monitor.min_g == pytest.approx(0.36, abs=1e-6)
    assert sum("fell under" in r.message for r in caplog.records) == 1


def test_gauge_residual_vanishes_on_linear_fields():
    grid = planar(128, -2.0, 2.0)
    state = FieldState(grid, 0.0, 0.3 * grid.x, np.full(grid.N, 0.2))
    later = step_rk4(state, cfl_dt(state))
    assert gauge_residual(later, state) <= 1e-10
    assert divergence_residual(later, state) <= 1e-10


def test_gauge_residual_converges_on_radial_solution():
    residuals = []
    for N in (201, 401):
        grid = radial_grid(3, N, 0.5)
        r = grid.x
        state = FieldState(grid, 0.0, 0.1 * np.exp(-40 * (r - 0.5) ** 2), np.zeros(N))
        before = evolve(state, 0.25)
        after = step_rk4(before, 0.01 * grid.h)
        residuals.append(gauge_residual(after, before))
    assert residuals[1] < residuals[0] / 4.0


def test_gauge_residual_detects_non_solutions():
    grid = radial_grid(3, 201, 0.5)
    r = grid.x
    bump = 0.2 * np.exp(-40 * (r - 0.5) ** 2)
    first = FieldState(grid, 0.0, bump, np.zeros(grid.N))
    second = FieldState(grid, 0.01, bump, 0.01 * bump)
    assert gauge_residual(second, first) > 1e-2


def test_cubic_nonlinearity_scales_with_amplitude():
    grid = radial_grid(3, 201, 0.5)
    r = grid.x
    profile = np.exp(-40 * (r - 0.5) ** 2)
    amplitudes = np.array([0.005, 0.01, 0.02, 0.04])
    gaps = []
    for eps in amplitudes:
        state = FieldState(grid, 0.0, eps * profile, np.zeros(grid.N))
        nonlinear = evolve(state, 0.4)
        linear = evolve(FieldState(grid, 0.0, eps * profile, np.zeros(grid.N), linear=True), 0.4)
        gaps.append(np.max(np.abs(nonlinear.phi - linear.phi)))
    slope = np.polyfit(np.log(amplitudes), np.log(gaps), 1)[0]
    assert 2.7 <= slope <= 3.3


def test_jet_table_matches_equation():
    grid = radial_grid(3, 401, 0.5)
    r = grid.x
    state = FieldState(grid, 0.0, 0.1 * np.exp(-40 * (r - 0.5) ** 2), np.zeros(grid.N))
    table = jet_table(state)
    assert set(table) == {(i, j) for i in range(4) for j in range(4) if i + j <= 3}
    dt = 1e-4
    first = step_rk4(state, dt)
    second = step_rk4(first, dt)
    acc_fd = (-3 * state.psi + 4 * first.psi - second.psi) / (2 * dt)
    np.testing.assert_allclose(acc_fd[5:-5], table[(2, 0)][5:-5], atol=1e-6)


def test_radial_pulse_moves_at_unit_speed():
    grid = radial_grid(3, 401, 0.6)
    r = grid.x
    state = FieldState(grid, 0.0, 0.01 * np.exp(-200 * (r - 0.5) ** 2), np.zeros(grid.N))
    threshold = 1e-6
    start = support_radius(state, threshold)
    later = evolve(state, 0.6)
    assert support_radius(later, threshold) <= start + 0.6 + 0.1


def test_rescaled_zero_data_stays_zero():
    grid = GridSpec("rescaled", 3, -0.3, 2.1, 128)
    state = zero_state(grid, t=1.0, delta=0.2)
    final = evolve_rrme(state, t_end=1.2)
    assert not final.phi.any()


def test_rescaled_evolution_needs_small_delta():
    grid = GridSpec("rescaled", 3, -0.3, 2.1, 128)
    with pytest.raises(InvalidInputError):
        evolve_rrme(zero_state(grid, t=1.0, delta=0.4))
    with pytest.raises(InvalidInputError):
        zero_state(grid, t=1.0)
