from pathlib import Path

import numpy as np
import pytest

from memlab import (
    BadProfileError,
    DegenerateMetricError,
    InsufficientSamplesError,
    InterpolationOutOfSlabError,
    SolverBlowUpError,
)
from memlab.config import load_config
from memlab.shortpulse import (
    Bump,
    CauchyData,
    ConstraintReport,
    PulseProfile,
    RrmeSettings,
    chart_consistency,
    check_constraints,
    constraint_sweep,
    direct_data,
    fit_constraints,
    make_profiles,
    null_cone_vanishing,
    profile_variable,
    rrme_data,
    rrme_grid,
    rrme_jet_bound,
    run_rrme,
)
from memlab.solver import Monitor, evolve, radial_grid

SMALL_RRME = RrmeSettings(N=800, slab_dt=0.005)
LONG_SWEEP = Path(__file__).parents[2] / "configs" / "global-existence.toml"


def test_profile_validation():
    with pytest.raises(BadProfileError):
        make_profiles(PulseProfile(family="gauss"), 0.1)
    with pytest.raises(BadProfileError):
        make_profiles(PulseProfile(), 0.3)
    with pytest.raises(BadProfileError):
        make_profiles(PulseProfile(family="poly", p=3), 0.1)
    with pytest.raises(BadProfileError):
        make_profiles(PulseProfile(width=1.2), 0.1)


def test_poly_bump_values():
    f0, _ = make_profiles(PulseProfile(family="poly", p=6, c0=2.0), 0.1)
    assert f0(0.0) == pytest.approx(2.0)
    s = np.array([-0.5, 0.3])
    np.testing.assert_allclose(f0(s, 1), 2.0 * -12 * s * (1 - s**2) ** 5)
    assert f0(1.0) == 0 and f0(-1.5) == 0


@pytest.mark.parametrize("family", ["exp", "poly"])
def test_bump_derivatives_match_finite_differences(family):
    bump = Bump(family, 1.0, p=6, width=0.8)
    s = np.linspace(-0.7, 0.7, 9)
    h = 1e-5
    for k in range(3):
        fd = (bump(s + h, k) - bump(s - h, k)) / (2 * h)
        np.testing.assert_allclose(bump(s, k + 1), fd, rtol=1e-5, atol=1e-7)


def test_exp_bump_peak():
    f0, _ = make_profiles(PulseProfile(c0=1.0), 0.1)
    assert f0(0.0) == pytest.approx(np.exp(-1))


def test_direct_data_is_supported_in_the_shell():
    delta = 0.1
    grid = radial_grid(3, 2001, 1.0)
    data = direct_data(delta, PulseProfile(), grid)
    assert data.outside_support() == 0
    s = profile_variable(grid.x, delta)
    inside = np.abs(s) < 1
    expected = np.zeros_like(s)
    expected[inside] = delta**1.5 * np.exp(-1 / (1 - s[inside] ** 2))
    np.testing.assert_allclose(data.phi0, expected, atol=1e-15)


def test_good_derivative_of_direct_data():
    delta = 0.2
    spec = PulseProfile(c1=0.5)
    data = direct_data(delta, spec, radial_grid(3, 4001, 1.0))
    report = check_constraints(data)
    assert report.entries[("1.3", 0, 0, 0)] == pytest.approx(delta * 0.5 * np.exp(-1), rel=1e-3)
    assert report.entries[("1.4", 0, 0, 0)] == pytest.approx(delta**1.5 * np.exp(-1), rel=1e-3)
    assert report.passed


def test_unweighted_gradient_of_the_good_derivative():
    grid = radial_grid(3, 4001, 1.0)
    s = np.linspace(-1, 1, 20001)[1:-1]
    peak = np.max(np.abs(Bump("exp", 1.0)(s, 1)))
    for delta in (0.1, 0.05):
        loaded = check_constraints(direct_data(delta, PulseProfile(c1=1.0), grid))
        # an O(delta) incoming part costs O(1) here, whatever delta
        assert loaded.entries[("1.5", 1, 1, 0)] == pytest.approx(peak, rel=2e-2)
        quiet = check_constraints(direct_data(delta, PulseProfile(c1=0.0), grid))
        assert quiet.entries[("1.5", 1, 1, 0)] < 1e-3


def test_constraint_sweep_exponents():
    reports = constraint_sweep([0.05, 0.1, 0.2], PulseProfile(), N=2001)
    fits = reports[0].fits
    assert fits[("1.3", 0, 0, 0)].slope == pytest.approx(1.0, abs=0.05)
    assert fits[("1.4", 0, 0, 0)].slope == pytest.approx(1.5, abs=0.05)
    assert fits[("1.4", 1, 0, 0)].slope > 0
    assert all(rep.passed for rep in reports)
    assert [rep.delta for rep in reports] == [0.05, 0.1, 0.2]


def test_zero_data_passes_constraints():
    grid = radial_grid(3, 401, 1.0)
    data = CauchyData(grid, np.zeros(grid.N), np.zeros(grid.N), 0.1, "direct")
    report = check_constraints(data)
    assert report.passed
    assert all(value == 0 for value in report.entries.values())


@pytest.fixture(scope="module")
def rrme():
    grid = radial_grid(3, 1001, 1.0)
    return rrme_data(0.2, PulseProfile(), grid, SMALL_RRME)


def test_rrme_data_vanishes_outside_the_shell(rrme):
    assert rrme.provenance == "rrme"
    assert rrme.outside_support() == 0
    peak = np.max(np.abs(rrme.phi0))
    assert 0.05 * 0.2**1.5 < peak < 10 * 0.2**1.5


def test_rrme_readout_outside_slabs(rrme):
    with pytest.raises(InterpolationOutOfSlabError):
        rrme.run.read_back(1.6, rrme.r)


def test_bounding_cone_leakage_falls_with_resolution():
    leaks = []
    for N in (800, 1600):
        run = run_rrme(0.2, PulseProfile(), 3, RrmeSettings(N=N))
        leaks.append(max(null_cone_vanishing(run)))
    assert leaks[1] < leaks[0] / 16
    assert leaks[1] < 1e-5


def test_resolved_rescaled_solve_vanishes_on_bounding_cones():
    run = run_rrme(0.2, PulseProfile(), 3, RrmeSettings(cells_per_delta=640))
    assert run.initial.grid.h <= 0.2 / 640
    incoming, outgoing = null_cone_vanishing(run)
    assert incoming < 1e-8
    assert outgoing < 1e-8


def test_cells_per_delta_refines_the_rescaled_grid():
    coarse = rrme_grid(0.1, 3, RrmeSettings(N=100))
    fine = rrme_grid(0.1, 3, RrmeSettings(N=100, cells_per_delta=200))
    assert coarse.N == 100
    assert (fine.x_min, fine.x_max) == (coarse.x_min, coarse.x_max)
    assert fine.h <= 0.1 / 200


def test_rrme_jet_bound_at_initial_slab(rrme):
    bounds = rrme_jet_bound(rrme.run.initial)
    weighted, _ = bounds[(0, 0)]
    assert weighted == pytest.approx(np.exp(-1), rel=1e-3)
    assert all(np.isfinite(w) and w < 50 for w, _ in bounds.values())


def test_chart_consistency_converges():
    errors = []
    for N, slab_dt in ((300, 0.01), (600, 0.005)):
        diff, scale = chart_consistency(0.25, PulseProfile(), 3, N, RrmeSettings(N=N, slab_dt=slab_dt))
        assert scale > 0
        errors.append(diff / scale)
    assert errors[0] < 5e-2
    # at least second order under joint refinement of both grids and the slabs
    assert errors[1] < errors[0] / 3.5


def synthetic_report(delta, wobble=1.0):
    entries = {("1.4", 0, 0, 0): delta**1.5 * wobble, ("1.3", 0, 0, 0): 0.0}
    return ConstraintReport(delta, "direct", entries)


def test_fit_constraints():
    reports = fit_constraints([synthetic_report(d) for d in (0.2, 0.05, 0.1)])
    assert [rep.delta for rep in reports] == [0.05, 0.1, 0.2]
    fits = reports[0].fits
    # vanishing entries are not fitted
    assert list(fits) == [("1.4", 0, 0, 0)]
    assert fits[("1.4", 0, 0, 0)].slope == pytest.approx(1.5)
    assert all(rep.monotone for rep in reports)

    bumpy = fit_constraints([synthetic_report(0.05, 10.0), synthetic_report(0.1), synthetic_report(0.2)])
    assert bumpy[0].monotone is False


def test_fit_constraints_needs_a_wide_sweep():
    with pytest.raises(InsufficientSamplesError):
        fit_constraints([synthetic_report(d) for d in (0.1, 0.12, 0.15)])
    with pytest.raises(InsufficientSamplesError):
        fit_constraints([synthetic_report(d) for d in (0.05, 0.2)])


def lowest_metric_factor(delta, spec, N=2401):
    """min(1 + Q) while the incoming half of the pulse passes the origin, and whether it degenerated."""
    data = direct_data(delta, spec, radial_grid(3, N, 2.5))
    monitor = Monitor()
    try:
        evolve(data.to_state(), 3.5, callbacks=[monitor])
    except (DegenerateMetricError, SolverBlowUpError):
        return monitor.min_g, True
    return monitor.min_g, False


def test_long_sweep_configuration():
    config = load_config(LONG_SWEEP)
    assert config.t_end == 40
    assert config.deltas == [0.02, 0.04, 0.08, 0.16]
    assert config.grid().N == 4096
    assert config.profile().c1 == 0
    assert config.cones(0.1) == pytest.approx((0.0, 0.05, 0.1))


def test_long_sweep_data_stay_hyperbolic_through_focusing():
    config = load_config(LONG_SWEEP)
    min_g, degenerate = lowest_metric_factor(min(config.deltas), config.profile())
    assert not degenerate
    assert min_g >= config["thresholds"]["min_g"]


def test_incoming_part_of_size_delta_degenerates_at_the_origin():
    min_g, degenerate = lowest_metric_factor(0.02, PulseProfile(c1=1.0))
    assert degenerate or min_g < 0.5


def test_rescaled_data_configuration():
    config = load_config(LONG_SWEEP.with_name("rescaled-data.toml"))
    assert config["run"]["provenance"] == "rrme"
    assert len(config.deltas) >= 3
    settings = config.rrme_settings()
    assert rrme_grid(min(config.deltas), 3, settings).h <= min(config.deltas) / settings.cells_per_delta
