"""Short-pulse Cauchy data at t = 1.

Two paths produce the data: `direct_data` lays the pulse profile straight on
the t = 1 slice, `rrme_data` solves the rescaled equation from t' = 1 and
reads the solution back on t = 1. `check_constraints` measures the
short-pulse hierarchy of the result.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import RectBivariateSpline, interp1d

from memlab.diagnostics import scaling_fit
from memlab.solver import (
    FieldState,
    GridSpec,
    _accelerations,
    derivatives,
    evolve,
    evolve_rrme,
    radial_grid,
)
from memlab.utils import (
    BadProfileError,
    InsufficientJetError,
    InterpolationOutOfSlabError,
    InvalidInputError,
)

FAMILIES = ("exp", "poly")
AMPLITUDE_POWER = 1.5


@dataclass(frozen=True)
class PulseProfile:
    family: str = "exp"
    p: int = 6
    c0: float = 1.0
    c1: float = 1.0
    width: float = 1.0


class Bump:
    """c * b(s / width) with b(s) = exp(-1 / (1 - s^2)) or (1 - s^2)^p on |s| < 1."""

    def __init__(self, family, amplitude, p=6, width=1.0):
        self.family = family
        self.amplitude = amplitude
        self.p = p
        self.width = width
        self._polys = [Polynomial([1.0])] if family == "exp" else [Polynomial([1.0, 0.0, -1.0]) ** p]

    def _poly(self, k):
        q = Polynomial([1.0, 0.0, -1.0])
        while len(self._polys) <= k:
            P, j = self._polys[-1], len(self._polys) - 1
            if self.family == "exp":
                self._polys.append(P.deriv() * q**2 + Polynomial([0.0, 4.0 * j]) * q * P - Polynomial([0.0, 2.0]) * P)
            else:
                self._polys.append(P.deriv())
        return self._polys[k]

    def __call__(self, s, k=0):
        """k-th derivative in s."""
        s = np.asarray(s, dtype=float)
        z = s / self.width
        out = np.zeros_like(z)
        inside = np.abs(z) < 1
        zi = z[inside]
        if self.family == "exp":
            q = 1 - zi**2
            with np.errstate(under="ignore"):
                out[inside] = self._poly(k)(zi) * np.exp(-1 / q - 2 * k * np.log(q))
        else:
            out[inside] = self._poly(k)(zi)
        return self.amplitude * out / self.width**k


def make_profiles(spec, delta):
    """(f0, f1) as `Bump` callables in the profile variable s in (-1, 1)."""
    if spec.family not in FAMILIES:
        raise BadProfileError(f"Unknown profile family: {spec.family}")
    if not 0 < delta <= 0.25:
        raise BadProfileError(f"delta must lie in (0, 0.25], got {delta}")
    if spec.family == "poly" and spec.p < 4:
        raise BadProfileError(f"polynomial bumps need p >= 4, got {spec.p}")
    if not 0 < spec.width <= 1:
        raise BadProfileError(f"support (1 - 2 delta, 1) is exceeded by width {spec.width}")
    return (
        Bump(spec.family, spec.c0, spec.p, spec.width),
        Bump(spec.family, spec.c1, spec.p, spec.width),
    )


def profile_variable(r, delta):
    """s = (r - (1 - delta)) / delta, mapping (1 - 2 delta, 1) onto (-1, 1)."""
    return (np.asarray(r, dtype=float) - (1 - delta)) / delta


@dataclass
class CauchyData:
    grid: GridSpec
    phi0: np.ndarray
    phi1: np.ndarray
    delta: float
    provenance: str
    profile: PulseProfile = field(default_factory=PulseProfile)
    run: object = field(default=None, repr=False, compare=False)

    @property
    def r(self):
        return self.grid.x

    def to_state(self, t=1.0):
        return FieldState(self.grid, t, self.phi0, self.phi1, self.delta)

    def outside_support(self):
        """sup of |phi0|, |phi1| outside (1 - 2 delta, 1)."""
        r = self.r
        outside = (r <= 1 - 2 * self.delta) | (r >= 1)
        if not np.any(outside):
            return 0.0
        return float(max(np.max(np.abs(self.phi0[outside])), np.max(np.abs(self.phi1[outside]))))


def direct_data(delta, spec, grid):
    """phi0 = delta^(3/2) f0(s), phi1 = -d_r phi0 + delta f1(s)."""
    f0, f1 = make_profiles(spec, delta)
    s = profile_variable(grid.x, delta)
    phi0 = delta**AMPLITUDE_POWER * f0(s)
    dr_phi0 = delta ** (AMPLITUDE_POWER - 1) * f0(s, 1)
    phi1 = -dr_phi0 + delta * f1(s)
    return CauchyData(grid, phi0, phi1, delta, "direct", spec)


@dataclass(frozen=True)
class RrmeSettings:
    """Rescaled solve resolution. `cells_per_delta` > 0 refines N so that the
    pulse width delta spans at least that many cells."""

    N: int = 1600
    margin: float = 0.1
    slab_dt: float = 0.005
    cfl: float = 0.4
    cells_per_delta: int = 0


@dataclass
class SlabRecorder:
    """Evolution callback storing (t', phi, phi_t', phi_r') every `slab_dt` in t'."""

    slab_dt: float
    times: list = field(default_factory=list)
    phi: list = field(default_factory=list)
    phi_t: list = field(default_factory=list)
    phi_r: list = field(default_factory=list)

    def add(self, state):
        phi_r, _ = derivatives(state.grid, state.phi)
        self.times.append(state.t)
        self.phi.append(np.array(state.phi))
        self.phi_t.append(np.array(state.psi))
        self.phi_r.append(phi_r)

    def __call__(self, state, prev):
        if not self.times or state.t - self.times[-1] >= self.slab_dt - 1e-14:
            self.add(state)

    def splines(self, x):
        if len(self.times) < 4:
            raise InterpolationOutOfSlabError(f"{len(self.times)} slabs are too few to interpolate")
        t = np.array(self.times)
        return tuple(RectBivariateSpline(t, x, np.array(a)) for a in (self.phi, self.phi_t, self.phi_r))


@dataclass
class RrmeRun:
    delta: float
    initial: FieldState
    final: FieldState
    slabs: SlabRecorder

    def read_back(self, t, r):
        """(phi, d_t phi) of the rescaled solution at Minkowski time t and radii r."""
        r = np.asarray(r, dtype=float)
        delta = self.delta
        u_p = (t - r) / (2 * delta)
        ub_p = (t + r) / 2
        tp, rp = u_p + ub_p, ub_p - u_p
        phi = np.zeros_like(r)
        phi_t = np.zeros_like(r)
        live = (u_p > 0) & (ub_p > 1 - delta)
        if not np.any(live):
            return phi, phi_t
        times = self.slabs.times
        if np.min(tp[live]) < times[0] - 1e-12 or np.max(tp[live]) > times[-1] + 1e-12:
            raise InterpolationOutOfSlabError(
                f"t' range [{np.min(tp[live]):.4f}, {np.max(tp[live]):.4f}] leaves the stored slabs "
                f"[{times[0]:.4f}, {times[-1]:.4f}]"
            )
        x = self.initial.grid.x
        if np.min(rp[live]) < x[0] or np.max(rp[live]) > x[-1]:
            raise InterpolationOutOfSlabError("r' leaves the rescaled grid")
        s_phi, s_t, s_r = self.slabs.splines(x)
        tl, rl = np.clip(tp[live], times[0], times[-1]), rp[live]
        d_t, d_r = s_t.ev(tl, rl), s_r.ev(tl, rl)
        d_u, d_ub = d_t - d_r, d_t + d_r
        phi[live] = s_phi.ev(tl, rl)
        phi_t[live] = 0.5 * (d_u / delta + d_ub)
        return phi, phi_t


def rrme_grid(delta, n, settings, t_end=None):
    """Rescaled grid covering the support u' >= 0, ub' >= 1 - delta up to t' = t_end."""
    t_end = 2 - delta if t_end is None else t_end
    x_min = 2 * (1 - delta) - t_end - settings.margin
    x_max = t_end + settings.margin
    N = max(settings.N, math.ceil(settings.cells_per_delta * (x_max - x_min) / delta) + 1)
    return GridSpec("rescaled", n, x_min, x_max, N)


def rrme_initial_state(delta, spec, grid):
    f0, f1 = make_profiles(spec, delta)
    s = profile_variable(grid.x, delta)
    amplitude = delta**AMPLITUDE_POWER
    return FieldState(grid, 1.0, amplitude * f0(s), amplitude * f1(s), delta)


def run_rrme(delta, spec, n=3, settings=None, t_end=None, callbacks=()):
    settings = settings or RrmeSettings()
    grid = rrme_grid(delta, n, settings, t_end)
    initial = rrme_initial_state(delta, spec, grid)
    slabs = SlabRecorder(settings.slab_dt)
    slabs.add(initial)
    final = evolve_rrme(initial, delta, t_end, callbacks=(slabs, *callbacks), cfl=settings.cfl)
    if slabs.times[-1] < final.t:
        slabs.add(final)
    return RrmeRun(delta, initial, final, slabs)


def rrme_data(delta, spec, grid, settings=None, callbacks=()):
    """Cauchy data on t = 1 read back from the rescaled solve."""
    if grid.mode not in ("radial", "planar"):
        raise InvalidInputError(f"rrme data lives on radial or planar grids, got {grid.mode}")
    run = run_rrme(delta, spec, grid.n, settings, callbacks=callbacks)
    phi0, phi1 = run.read_back(1.0, grid.x)
    logging.info("rescaled data for delta=%g read back on %d points", delta, grid.N)
    return CauchyData(grid, phi0, phi1, delta, "rrme", spec, run)


def rrme_jet_bound(state, delta=None):
    """{(i0, i1): (weighted, plain)} sup norms of d_u'^i0 d_ub'^i1 phi at one t' slab.

    weighted = |(delta d_u')^i0 (delta d_ub')^i1 phi| / delta^(3/2).
    """
    delta = state.delta if delta is None else delta
    grid = state.grid
    phi, psi = state.phi, state.psi
    phi_r, phi_rr = derivatives(grid, phi)
    psi_r, _ = derivatives(grid, psi)
    acc = _accelerations(grid, state.t, phi, psi, delta, state.linear)
    jets = {
        (0, 0): phi,
        (1, 0): psi - phi_r,
        (0, 1): psi + phi_r,
        (2, 0): acc - 2 * psi_r + phi_rr,
        (1, 1): acc - phi_rr,
        (0, 2): acc + 2 * psi_r + phi_rr,
    }
    out = {}
    for (i0, i1), values in jets.items():
        plain = float(np.max(np.abs(values)))
        out[(i0, i1)] = (delta ** (i0 + i1) * plain / delta**AMPLITUDE_POWER, plain)
    return out


def null_cone_vanishing(run):
    """Relative sup of |phi| on the two bounding null cones of the rescaled slab.

    Incoming: ub' = 1 - delta with u' >= delta. Outgoing: u' = 0 with ub' >= 1.
    """
    delta = run.delta
    x = run.initial.grid.x
    scale = max(max(np.max(np.abs(p)) for p in run.slabs.phi), 1e-300)
    incoming = outgoing = 0.0
    for t, phi in zip(run.slabs.times, run.slabs.phi):
        along = interp1d(x, phi, kind="cubic")
        r_in = 2 * (1 - delta) - t
        if t - r_in >= 2 * delta and x[0] <= r_in <= x[-1]:
            incoming = max(incoming, abs(float(along(r_in))))
        if x[0] <= t <= x[-1]:
            outgoing = max(outgoing, abs(float(along(t))))
    return incoming / scale, outgoing / scale


def chart_consistency(delta, spec, n=3, N=800, settings=None, t_later=1.2, cfl=0.4):
    """Forward RME evolution of rrme data from t = 1 against the rescaled solve at t_later.

    Returns (sup difference, sup of the rescaled solution) on the radial grid.
    """
    settings = settings or RrmeSettings(N=N)
    r_low = max(2 * (1 - delta) - t_later, 0.0)
    tp_end = (t_later - r_low) / (2 * delta) + (t_later + r_low) / 2 + 4 * settings.slab_dt
    run = run_rrme(delta, spec, n, settings, t_end=tp_end)
    grid = radial_grid(n, N, t_later)
    phi0, phi1 = run.read_back(1.0, grid.x)
    later = evolve(FieldState(grid, 1.0, phi0, phi1, delta), t_later, cfl=cfl)
    expected, _ = run.read_back(t_later, grid.x)
    return float(np.max(np.abs(later.phi - expected))), float(np.max(np.abs(expected)))


FAMILY_NAMES = ("1.3", "1.4", "1.5")


@dataclass
class ConstraintReport:
    delta: float
    provenance: str
    entries: dict
    fits: dict = field(default_factory=dict)
    passed: bool = True
    monotone: bool | None = None

    def rows(self):
        return [(family, k, l, m, value) for (family, k, l, m), value in sorted(self.entries.items())]


def _weighted_derivatives(grid, f, order, delta):
    """[(delta d_r)^k f for k = 0..order] by repeated fourth-order differencing."""
    out = [np.asarray(f, dtype=float)]
    for _ in range(order):
        d, _ = derivatives(grid, out[-1])
        out.append(delta * d)
    return out


def check_constraints(data, delta=None, max_order=2, max_angular=0):
    """Sup norms over 1 - 2 delta <= r <= 1 of the three constraint families.

    Entries are keyed by (family, k, l, m): k radial weighted order, l angular
    order (0 in radial symmetry), m the extra weighted radial order of the
    third family. The third family also carries l = 1 for k >= 1: one
    unweighted d_r of L^k phi, which stays O(delta) only when the data
    has no O(delta) incoming part beyond -d_r phi0.
    """
    delta = data.delta if delta is None else delta
    if max_order > 3:
        raise InsufficientJetError(f"constraint order {max_order} exceeds the available 3")
    grid = data.grid
    if grid.mode not in ("radial", "planar"):
        raise InvalidInputError(f"constraints are measured on radial or planar grids, got {grid.mode}")
    r = grid.x
    window = (r >= 1 - 2 * delta) & (r <= 1)

    def sup(a):
        return float(np.max(np.abs(a[window]))) if np.any(window) else 0.0

    entries = {}
    phi0, phi1 = data.phi0, data.phi1
    dr_phi0, _ = derivatives(grid, phi0)
    good = _weighted_derivatives(grid, phi1 + dr_phi0, max_order, delta)
    w0 = _weighted_derivatives(grid, phi0, max_order, delta)
    w1 = _weighted_derivatives(grid, phi1, max_order, delta)
    for l in range(max_angular + 1):
        for k in range(max_order + 1):
            entries[("1.3", k, l, 0)] = sup(good[k]) if l == 0 else 0.0
            value = sup(w0[k]) + (sup(w1[k - 1]) if k >= 1 else 0.0)
            entries[("1.4", k, l, 0)] = value if l == 0 else 0.0

    phi_r, phi_rr = derivatives(grid, phi0)
    psi_r, _ = derivatives(grid, phi1)
    acc = _accelerations(grid, 1.0, phi0, phi1, delta, False)
    L_jets = [phi0, phi1 + phi_r, acc + 2 * psi_r + phi_rr]
    for k, Lk in enumerate(L_jets):
        for m, values in enumerate(_weighted_derivatives(grid, Lk, max_order, delta)):
            entries[("1.5", k, 0, m)] = sup(values)
        if k >= 1:
            entries[("1.5", k, 1, 0)] = sup(derivatives(grid, Lk)[0])
    report = ConstraintReport(delta, data.provenance, entries)
    report.passed = all(np.isfinite(v) for v in entries.values())
    return report


def constraint_sweep(deltas, spec, provenance="direct", n=3, N=2000, settings=None, tolerance=0.15):
    """ConstraintReports for each delta, plus a fitted delta exponent per entry."""
    if len(deltas) < 3:
        raise InvalidInputError("a constraint sweep needs at least three deltas")
    reports = []
    for delta in sorted(deltas):
        grid = radial_grid(n, N, 1.0) if n > 1 else GridSpec("planar", 1, -1.0, 2.0, N)
        if provenance == "direct":
            data = direct_data(delta, spec, grid)
        else:
            data = rrme_data(delta, spec, grid, settings)
        reports.append(check_constraints(data))
    return fit_constraints(reports, tolerance)


def fit_constraints(reports, tolerance=0.15):
    """Attach a fitted delta exponent per positive entry, and the monotonicity verdict, to every report."""
    reports = sorted(reports, key=lambda rep: rep.delta)
    fits = {}
    for key in reports[0].entries:
        values = [rep.entries[key] for rep in reports]
        if min(values) <= 0:
            continue
        fits[key] = scaling_fit([rep.delta for rep in reports], values, reference=None, tolerance=tolerance)
    monotone = all(
        all(a.entries[key] <= b.entries[key] * (1 + 1e-9) for a, b in zip(reports, reports[1:]))
        for key in fits
    )
    for rep in reports:
        rep.fits = fits
        rep.monotone = monotone
    return reports
