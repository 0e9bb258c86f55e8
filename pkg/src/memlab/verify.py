"""Self-contained invariant suites behind `memlab verify`.

A suite draws synthetic inputs from a seeded generator and returns checks of
the form value <= tolerance ("max") or value >= tolerance ("min"). Only "max"
tolerances are scaled by `tolerance_scale`.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from memlab.analytic import (
    frame_regime_jet,
    random_event,
    random_gaussian,
    random_gradient_jet,
    random_polynomial,
)
from memlab.diagnostics import History, current, energy_identity, scaling_fit
from memlab.geometry import (
    SpacetimeJet,
    angular_basis,
    frame_bundle,
    klainerman_field,
    modified_null_norm,
    metric_from_jet,
    unit_direction,
    wave_operator_coord,
    wave_operator_frame,
)
from memlab.nullforms import (
    ADMISSIBLE,
    Q0,
    bilinear_tensor,
    classify,
    commutator_check,
    double_nullform_expand,
    double_nullform_monomials,
    eval_nullform,
    flat_wave,
    monomial,
    rme_nonlinearity,
    symmetric_decompose,
    wave_commutator_check,
)
from memlab.shortpulse import PulseProfile, check_constraints, direct_data
from memlab.solver import FieldState, GridSpec, evolve, gauge_residual, radial_grid, step_rk4, zero_state
from memlab.utils import InvalidInputError


@dataclass
class CheckResult:
    suite: str
    name: str
    value: float
    tolerance: float
    kind: str = "max"

    @property
    def passed(self):
        if not np.isfinite(self.value):
            return False
        if self.kind == "min":
            return self.value >= self.tolerance
        return self.value <= self.tolerance


@dataclass
class SuiteReport:
    name: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


SUITES = {}


def suite(name, description, samples=100):
    def register(fn):
        SUITES[name] = (description, fn, samples)
        return fn

    return register


def list_suites():
    return [(name, description) for name, (description, _, _) in SUITES.items()]


class _Checks:
    def __init__(self, name, scale):
        self.report = SuiteReport(name)
        self.scale = scale

    def max(self, name, value, tolerance):
        self.report.checks.append(CheckResult(self.report.name, name, float(value), tolerance * self.scale))

    def min(self, name, value, tolerance):
        self.report.checks.append(CheckResult(self.report.name, name, float(value), tolerance, "min"))


def _split(samples, dims):
    """(n, count) pairs dealing `samples` draws over the dimensions."""
    base, extra = divmod(samples, len(dims))
    return [(n, base + (i < extra)) for i, n in enumerate(dims)]


@suite("geometry", "membrane metric inverse, determinant and null-coordinate components", samples=10_000)
def _geometry(out, rng, samples):
    inverse = det = guub = guu = gubub = lt = lbt = 0.0
    for n, count in _split(samples, (2, 3)):
        for _ in range(count):
            jet = random_gradient_jet(rng, n)
            metric = metric_from_jet(jet)
            inverse = max(inverse, np.max(np.abs(metric.upper @ metric.lower - np.eye(n + 1))))
            det = max(det, abs(abs(metric.det) - metric.g) / metric.g)
            omega, _ = unit_direction(jet.coords[1:])
            L, Lb = np.concatenate([[1.0], omega]), np.concatenate([[1.0], -omega])
            Lphi, Lbphi, g = float(L @ jet.d1), float(Lb @ jet.d1), metric.g
            du, dub = 0.5 * Lb, 0.5 * L
            guub = max(guub, abs(metric.codot(du, dub) + 0.5 + Lphi * Lbphi / (4 * g)))
            guu = max(guu, abs(metric.codot(du, du) + Lphi**2 / (4 * g)))
            gubub = max(gubub, abs(metric.codot(dub, dub) + Lbphi**2 / (4 * g)))
            Lt, Lbt = L + Lphi**2 * Lb, Lb + Lbphi**2 * L
            lt = max(lt, abs(metric.dot(Lt, Lt) - modified_null_norm(Lphi, Lbphi)))
            lbt = max(lbt, abs(metric.dot(Lbt, Lbt) - modified_null_norm(Lbphi, Lphi)))
    out.max("inverse identity", inverse, 1e-10)
    out.max("determinant identity", det, 1e-10)
    out.max("g^(u ub) closed form", guub, 1e-10)
    out.max("g^(u u) closed form", guu, 1e-10)
    out.max("g^(ub ub) closed form", gubub, 1e-10)
    out.max("modified outgoing generator norm", lt, 1e-10)
    out.max("modified incoming generator norm", lbt, 1e-10)


@suite("frame", "null frame nullity, orthogonality and the frame wave operator", samples=1000)
def _frame(out, rng, samples):
    nullity = orth = gram = wave = 0.0
    causal = 0
    for n, count in _split(samples, (2, 3)):
        for _ in range(count):
            bundle = frame_bundle(random_gradient_jet(rng, n))
            metric = bundle.metric
            nullity = max(nullity, abs(metric.dot(bundle.e3, bundle.e3)), abs(metric.dot(bundle.e4, bundle.e4)))
            for e in bundle.eA:
                orth = max(orth, abs(metric.dot(bundle.e3, e)), abs(metric.dot(bundle.e4, e)))
            G = bundle.eA @ metric.lower @ bundle.eA.T
            gram = max(gram, np.max(np.abs(G - np.eye(n - 1))))

            x = random_event(rng, n)
            phi, psi = random_gaussian(rng, n).jet(x), random_polynomial(rng, n).jet(x)
            coord = wave_operator_coord(phi, psi)
            wave = max(wave, abs(wave_operator_frame(phi, psi) - coord) / max(1.0, abs(coord)))

            regime = frame_bundle(frame_regime_jet(rng, n))
            causal += regime.verdicts["Lt"].kind == "spacelike" or regime.verdicts["Lbt"].kind == "spacelike"
    out.max("e3, e4 null", nullity, 1e-10)
    out.max("e3, e4 orthogonal to e_A", orth, 1e-10)
    out.max("e_A orthonormal", gram, 1e-10)
    out.max("frame vs coordinate wave operator", wave, 1e-8)
    out.max("spacelike modified generators", causal, 0)


@suite("nullforms", "null-form identities, decompositions, signatures and commutators", samples=1000)
def _nullforms(out, rng, samples):
    q0 = nonlinear = decompose = expansion = commutators = waves = 0.0
    for n, count in _split(samples, (1, 2, 3)):
        for _ in range(count):
            k = rng.normal(size=n)
            xi = rng.uniform(0.1, 3) * np.concatenate([[1.0], k / np.linalg.norm(k)])
            q0 = max(q0, abs(eval_nullform(Q0, xi, xi)) / (xi @ xi))
            x = random_event(rng, n) if n > 1 else rng.uniform(-1, 1, 2)
            jet = random_gaussian(rng, n).jet(x)
            reduced = np.einsum("ab,ab->", metric_from_jet(jet).upper, jet.d2)
            nonlinear = max(nonlinear, abs(flat_wave(jet) - rme_nonlinearity(jet) - reduced))
    for n, count in _split(samples, (2, 3)):
        for _ in range(count):
            x = random_event(rng, n)
            phi, psi = random_gaussian(rng, n).jet(x), random_polynomial(rng, n).jet(x)
            decompose = max(decompose, symmetric_decompose(bilinear_tensor(phi.d1, psi.d1), psi))
            expansion = max(expansion, double_nullform_expand(phi, psi, random_gaussian(rng, n).jet(x)).residual)
            for name in ("S", "L", "Lb"):
                Z = klainerman_field(name, n)
                check = commutator_check(Z, Q0, random_polynomial(rng, n), random_gaussian(rng, n), x)
                commutators = max(commutators, check.residual)
            for name in ("L", "Lb"):
                _, _, residual = wave_commutator_check(klainerman_field(name, n), random_gaussian(rng, n), x)
                waves = max(waves, residual)
    monomials = [m for group in double_nullform_monomials().values() for m in group]
    inadmissible = sum(classify(m) != ADMISSIBLE for m in monomials)
    forbidden = monomial(("Lb", "phi"), ("Lb", "psi"))
    out.max("Q0 on null gradients", q0, 1e-12)
    out.max("cubic term identity", nonlinear, 1e-12)
    out.max("symmetric decomposition", decompose, 1e-10)
    out.max("double null expansion", expansion, 1e-10)
    out.max("commutators with Q0", commutators, 1e-10)
    out.max("wave commutator with L, Lb", waves, 1e-10)
    out.max("inadmissible double null monomials", inadmissible, 0)
    out.max("signature -2 accepted", classify(forbidden) == ADMISSIBLE, 0)


def pulse_history(delta, N, duration, stride=2):
    """History of direct radial n = 3 data evolved from t = 1 over `duration`."""
    data = direct_data(delta, PulseProfile(), radial_grid(3, N, duration + 0.5))
    history = History(stride=stride)
    evolve(data.to_state(), 1.0 + duration, callbacks=[history])
    return history


def _null_wave(grid, t=0.0, amplitude=0.3):
    xi = grid.x - t
    phi = amplitude * np.exp(-(xi**2))
    return FieldState(grid, t, phi, 2 * xi * phi)


@suite("solver", "exact preservation of trivial solutions and convergence on a null wave")
def _solver(out, rng, samples):
    state = evolve(zero_state(radial_grid(3, 128, 0.5)), 0.5)
    out.max("zero data stays zero", np.max(np.abs(state.phi)), 0)
    grid = GridSpec("planar", 1, -2.0, 2.0, 128)
    a, b = rng.uniform(-0.3, 0.3, 2)
    later = evolve(FieldState(grid, 0.0, a * grid.x, np.full(grid.N, b)), 0.5)
    out.max("linear field preserved", np.max(np.abs(later.phi - a * grid.x - 0.5 * b)), 1e-12)
    errors = []
    for N in (401, 801):
        grid = GridSpec("planar", 1, -10.0, 15.0, N)
        final = evolve(_null_wave(grid), 1.0, cfl=0.25)
        errors.append(np.sqrt(grid.h * np.sum((final.phi - _null_wave(grid, 1.0).phi) ** 2)))
    out.min("null wave convergence order", np.log2(errors[0] / errors[1]), 3.5)


@suite("gauge", "wave-gauge residual convergence and its negative control")
def _gauge(out, rng, samples):
    residuals = []
    for N in (201, 401):
        grid = radial_grid(3, N, 0.5)
        r = grid.x
        before = evolve(FieldState(grid, 0.0, 0.1 * np.exp(-40 * (r - 0.5) ** 2), np.zeros(N)), 0.25)
        residuals.append(gauge_residual(step_rk4(before, 0.01 * grid.h), before))
    out.min("gauge residual refinement ratio", residuals[0] / residuals[1], 4.0)
    grid = radial_grid(3, 201, 0.5)
    bump = 0.2 * np.exp(-40 * (grid.x - 0.5) ** 2)
    first = FieldState(grid, 0.0, bump, np.zeros(grid.N))
    second = FieldState(grid, 0.01, bump, 0.01 * bump)
    out.min("corrupted pair residual", gauge_residual(second, first), 1e-2)


@suite("energy", "cone flux positivity and the energy identity on a null wave and a radial pulse")
def _energy(out, rng, samples):
    worst = np.inf
    for _ in range(samples):
        phi = frame_regime_jet(rng, 3)
        x = phi.coords
        omega, _ = unit_direction(x[1:])
        e = angular_basis(omega)
        Lchi, Lbchi = rng.uniform(-1, 1, 2)
        dchi = np.concatenate([[(Lchi + Lbchi) / 2], (Lchi - Lbchi) / 2 * omega + rng.uniform(-1, 1, 2) @ e])
        P = current(phi, SpacetimeJet("cartesian", 3, x, 0.0, dchi), "Lt")
        worst = min(worst, -0.5 * (P[0] - omega @ P[1:]))
    out.min("outgoing flux density of the modified multiplier", worst, -1e-14)

    grid = GridSpec("planar", 1, -10.0, 15.0, 801)
    history = History()
    evolve(_null_wave(grid), 6.0, callbacks=[history])
    for multiplier in ("dt", "Lt"):
        report = energy_identity(history, 2.0, 4.0, -2.0, 0.5, multiplier, resolution=48)
        out.max(f"energy identity ({multiplier})", report.relative_residual, 1e-3)
        out.min(f"flux margin ({multiplier})", report.margin, -1e-8)
    broken = energy_identity(history.corrupted((1, 0), 1.5), 2.0, 4.0, -2.0, 0.5, resolution=48)
    out.min("corrupted history residual", broken.relative_residual, 1e-2)

    delta = 0.08
    residuals = {"dt": [], "Lbt": []}
    for N in (401, 801):
        history = pulse_history(delta, N, 2.1)
        for multiplier, values in residuals.items():
            report = energy_identity(history, delta, 3.0 - delta, -delta, 1.0, multiplier, resolution=64)
            values.append(report.residual)
    for multiplier, (coarse, fine) in residuals.items():
        out.min(f"radial energy identity order ({multiplier})", np.log2(coarse / fine), 1.0)


@suite("shortpulse", "support and amplitude of direct short-pulse data")
def _shortpulse(out, rng, samples):
    delta = 0.1
    data = direct_data(delta, PulseProfile(), radial_grid(3, 4001, 1.0))
    out.max("data outside the shell", data.outside_support(), 0)
    report = check_constraints(data)
    expected = delta**1.5 * np.exp(-1)
    out.max("sup phi0 over delta^(3/2)", abs(report.entries[("1.4", 0, 0, 0)] / expected - 1), 1e-3)


@suite("scaling", "log-log regression on synthetic power laws")
def _scaling(out, rng, samples):
    deltas = np.array([0.1, 0.05, 0.025])
    exact = scaling_fit(deltas, 2 * deltas**0.75)
    out.max("exact power law slope", abs(exact.slope - 0.75), 1e-12)
    wiggle = np.geomspace(0.01, 0.2, 8)
    perturbed = scaling_fit(wiggle, wiggle * (1 + 0.1 * np.sin(1 / wiggle)))
    out.max("perturbed power law slope", abs(perturbed.slope - 1), 0.1)


def run_suites(names=None, seed=0, samples=None, tolerance_scale=1.0):
    """SuiteReports for the named suites (all when empty), in registry order.

    `samples` overrides every suite's own draw count; 0 or None keeps them.
    """
    names = list(names or SUITES)
    unknown = sorted(set(names) - set(SUITES))
    if unknown:
        raise InvalidInputError(f"Unknown suites: {', '.join(unknown)}")
    reports = []
    for name in SUITES:
        if name not in names:
            continue
        # independent stream per suite
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        out = _Checks(name, tolerance_scale)
        _, fn, default = SUITES[name]
        fn(out, rng, samples or default)
        logging.info("suite %s: %s", name, "passed" if out.report.passed else "FAILED")
        reports.append(out.report)
    return reports
