"""Energies, fluxes and decay measurements on evolved solutions.

Everything here works in (t, r) with radially symmetric jets; planar runs use
(t, x) with n = 1. Jets are tables keyed by (time order, space order) as
produced by `memlab.solver.jet_table`.
"""

import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import trapezoid
from scipy.interpolate import RectBivariateSpline, interp1d
from scipy.stats import linregress

from memlab.geometry import metric_from_jet, unit_direction
from memlab.solver import _interior, derivatives, jet_table, rrme_radius
from memlab.utils import (
    InsufficientJetError,
    InsufficientSamplesError,
    InvalidInputError,
    OutOfHistoryError,
)

SPHERE_AREA = {1: 1.0, 2: 2 * np.pi, 3: 4 * np.pi}
MULTIPLIERS = ("dt", "Lt", "Lbt")
LETTERS = ("dt", "dr", "B", "S")
CONES = ("outgoing", "incoming", "slice")
SIDES = ("both", "lower", "upper")

# letter -> (a, b) with Z = a d_t + b d_r, as (constant, d/dt, d/dr) triples
_LETTER_COEFFICIENTS = {
    "dt": ((1, 0, 0), (0, 0, 0)),
    "dr": ((0, 0, 0), (1, 0, 0)),
    "B": ((0, 0, 1), (0, 1, 0)),
    "S": ((0, 1, 0), (0, 0, 1)),
}


def _order(table):
    return max(i + j for i, j in table)


def table_from_jet(jet):
    """Jet table of a two-dimensional (t, r) or (t, x) SpacetimeJet."""
    if jet.dim != 2:
        raise InvalidInputError("jet tables hold (t, r) jets")
    table = {(0, 0): np.asarray(jet.value, dtype=float)}
    for order, tensor in ((1, jet.d1), (2, jet.d2), (3, jet.d3)):
        if tensor is None:
            break
        for i in range(order + 1):
            index = (0,) * i + (1,) * (order - i)
            table[(i, order - i)] = np.asarray(tensor[index], dtype=float)
    return table


def apply_Z(table, t, r, word, delta=None):
    """Jet table of Z_1 ... Z_k phi for word (Z_1, ..., Z_k), innermost letter last.

    Letters are dt, dr, B = t d_r + r d_t and S = t d_t + r d_r. With delta
    given, every dt or dr letter carries a factor delta.
    """
    for letter in reversed(tuple(word)):
        if letter not in _LETTER_COEFFICIENTS:
            raise InvalidInputError(f"Unknown commutator letter: {letter}")
        order = _order(table)
        if order < 1:
            raise InsufficientJetError(f"word {word} needs more derivatives than the table holds")
        (a0, at, ar), (b0, bt, br) = _LETTER_COEFFICIENTS[letter]
        a = a0 + at * t + ar * r
        b = b0 + bt * t + br * r
        weight = delta if delta is not None and letter in ("dt", "dr") else 1.0
        out = {}
        for i, j in product(range(order), repeat=2):
            if i + j > order - 1:
                continue
            value = a * table[(i + 1, j)] + b * table[(i, j + 1)]
            value = value + i * at * table[(i, j)] + j * br * table[(i, j)]
            if j:
                value = value + j * ar * table[(i + 1, j - 1)]
            if i:
                value = value + i * bt * table[(i - 1, j + 1)]
            out[(i, j)] = weight * value
        table = out
    return table


def _metric_parts(p, q):
    g = 1 - p**2 + q**2
    sg = np.sqrt(g)
    return g, sg, -1 - p**2 / g, p * q / g, 1 - q**2 / g


def _multiplier(name, phi):
    """(xi^t, xi^r, [[d_t xi^t, d_r xi^t], [d_t xi^r, d_r xi^r]]) of a multiplier."""
    p, q = phi[(1, 0)], phi[(0, 1)]
    zero = np.zeros_like(p * q)
    if name == "dt":
        return 1 + zero, zero, [[zero, zero], [zero, zero]]
    if name not in ("Lt", "Lbt"):
        raise InvalidInputError(f"Unknown multiplier: {name}")
    if (2, 0) not in phi:
        raise InsufficientJetError(f"the {name} multiplier needs second derivatives of phi")
    sign = 1 if name == "Lt" else -1
    ell = p + sign * q
    w = ell**2
    w_t = 2 * ell * (phi[(2, 0)] + sign * phi[(1, 1)])
    w_r = 2 * ell * (phi[(1, 1)] + sign * phi[(0, 2)])
    if name == "Lt":
        return 1 + w, 1 - w, [[w_t, w_r], [-w_t, -w_r]]
    return 1 + w, -1 + w, [[w_t, w_r], [w_t, w_r]]


def radial_current(phi, chi, multiplier="dt"):
    """(P^t, P^r, sqrt g) of P^a = T^a_b xi^b with T built from chi on the phi metric."""
    g, sg, gtt, gtr, grr = _metric_parts(phi[(1, 0)], phi[(0, 1)])
    ct, cr = chi[(1, 0)], chi[(0, 1)]
    Xt, Xr = gtt * ct + gtr * cr, gtr * ct + grr * cr
    norm = Xt * ct + Xr * cr
    xt, xr, _ = _multiplier(multiplier, phi)
    xi_chi = xt * ct + xr * cr
    return Xt * xi_chi - 0.5 * xt * norm, Xr * xi_chi - 0.5 * xr * norm, sg


def current(phijet, chijet, multiplier="dt"):
    """Contravariant P^a = T^a_b xi^b at a single event, in the chart of the jets.

    The multiplier is one of dt, Lt, Lbt or a vector of components.
    """
    metric = metric_from_jet(phijet)
    dchi = np.asarray(chijet.d1, dtype=float)
    dim = len(dchi)
    if isinstance(multiplier, str):
        if dim == 2:
            L, Lb = np.array([1.0, 1.0]), np.array([1.0, -1.0])
        else:
            omega, _ = unit_direction(np.asarray(phijet.coords, dtype=float)[1:])
            L = np.concatenate([[1.0], omega])
            Lb = np.concatenate([[1.0], -omega])
        if multiplier == "dt":
            xi = np.eye(dim)[0]
        elif multiplier == "Lt":
            xi = L + (L @ phijet.d1) ** 2 * Lb
        elif multiplier == "Lbt":
            xi = Lb + (Lb @ phijet.d1) ** 2 * L
        else:
            raise InvalidInputError(f"Unknown multiplier: {multiplier}")
    else:
        xi = np.asarray(multiplier, dtype=float)
    X = metric.upper @ dchi
    return X * (xi @ dchi) - 0.5 * xi * (X @ dchi)


def _metric_derivatives(phi):
    """d_a of sqrt(g) g^{tt}, sqrt(g) g^{tr}, sqrt(g) g^{rr} as [(d_t, d_r)] triples."""
    p, q = phi[(1, 0)], phi[(0, 1)]
    g, sg, _, _, _ = _metric_parts(p, q)
    out = {"tt": [], "tr": [], "rr": []}
    for pa, qa in ((phi[(2, 0)], phi[(1, 1)]), (phi[(1, 1)], phi[(0, 2)])):
        sg_a = (-p * pa + q * qa) / sg
        out["tt"].append(-sg_a - (2 * p * pa / sg - p**2 * sg_a / g))
        out["tr"].append((pa * q + p * qa) / sg - p * q * sg_a / g)
        out["rr"].append(sg_a - (2 * q * qa / sg - q**2 * sg_a / g))
    return out


def divergence_density(phi, chi, r, n, multiplier="dt"):
    """d_a(sqrt(g) P^a) in Cartesian coordinates, evaluated from radial jets."""
    if (2, 0) not in phi or (2, 0) not in chi:
        raise InsufficientJetError("the divergence needs second derivatives of phi and chi")
    p, q = phi[(1, 0)], phi[(0, 1)]
    g, sg, gtt, gtr, grr = _metric_parts(p, q)
    ct, cr = chi[(1, 0)], chi[(0, 1)]
    Xt, Xr = gtt * ct + gtr * cr, gtr * ct + grr * cr
    norm = Xt * ct + Xr * cr
    xt, xr, dxi = _multiplier(multiplier, phi)
    xi_chi = xt * ct + xr * cr
    dm = _metric_derivatives(phi)
    curved = n > 1
    r_inv = (n - 1) / r if curved else 0.0

    G_t = dm["tt"][0] + dm["tr"][1] + r_inv * p * q / sg
    G_r = dm["tr"][0] + dm["rr"][1] - r_inv * q**2 / sg
    trace = gtt * chi[(2, 0)] + 2 * gtr * chi[(1, 1)] + grr * chi[(0, 2)] + r_inv * cr
    deformation = (
        Xt * (ct * dxi[0][0] + cr * dxi[1][0])
        + Xr * (ct * dxi[0][1] + cr * dxi[1][1])
        - 0.5 * norm * (dxi[0][0] + dxi[1][1])
        - 0.5 * norm * r_inv * xr
    )
    transported = xt * (
        dm["tt"][0] * ct**2 + 2 * dm["tr"][0] * ct * cr + dm["rr"][0] * cr**2
    ) + xr * (dm["tt"][1] * ct**2 + 2 * dm["tr"][1] * ct * cr + dm["rr"][1] * cr**2)
    return (G_t * ct + G_r * cr) * xi_chi + sg * trace * xi_chi + sg * deformation - 0.5 * transported


@dataclass
class History:
    """Evolution callback keeping jet tables of every `stride`-th step."""

    stride: int = 1
    times: list = field(default_factory=list)
    tables: list = field(default_factory=list)
    grid: object = None
    _splines: dict = field(default_factory=dict, repr=False)

    def add(self, state):
        if self.grid is None:
            self.grid = state.grid
        if self.times and state.t <= self.times[-1]:
            return
        self.times.append(state.t)
        self.tables.append(jet_table(state))
        self._splines.clear()

    def __call__(self, state, prev):
        if not self.times and prev is not None:
            self.add(prev)
        if state.step % self.stride == 0:
            self.add(state)

    def corrupted(self, key, factor):
        """Copy with one jet entry scaled on every snapshot."""
        tables = [{k: (v * factor if k == key else v) for k, v in table.items()} for table in self.tables]
        return History(self.stride, list(self.times), tables, self.grid)

    @property
    def span(self):
        return self.times[0], self.times[-1]

    def _word_tables(self, word):
        x = self.grid.x
        return [apply_Z(table, t, x, word) for t, table in zip(self.times, self.tables)]

    def _spline(self, word, key):
        word = tuple(word)
        if (word, key) not in self._splines:
            if len(self.times) < 4:
                raise OutOfHistoryError(f"{len(self.times)} snapshots are too few to interpolate")
            tables = self._word_tables(word)
            if key not in tables[0]:
                raise InsufficientJetError(f"jet {key} of word {word} is not available")
            values = np.array([table[key] for table in tables])
            self._splines[(word, key)] = RectBivariateSpline(np.array(self.times), self.grid.x, values)
        return self._splines[(word, key)]

    def jets_at(self, t, r, word=(), keys=None):
        """Interpolated jet table of the word-applied field at events (t, r)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        t0, t1 = self.span
        x = self.grid.x
        eps = 1e-12 * max(1.0, abs(t1))
        if np.min(t) < t0 - eps or np.max(t) > t1 + eps:
            raise OutOfHistoryError(f"t in [{np.min(t):.4f}, {np.max(t):.4f}] leaves the history [{t0:.4f}, {t1:.4f}]")
        if np.min(r) < x[0] or np.max(r) > x[-1]:
            raise OutOfHistoryError(f"r in [{np.min(r):.4f}, {np.max(r):.4f}] leaves the grid")
        top = 3 - len(tuple(word))
        keys = keys or [(i, j) for i in range(top + 1) for j in range(top + 1) if i + j <= top]
        t = np.clip(t, t0, t1)
        return {key: self._spline(word, key).ev(t, r) for key in keys}


@dataclass
class ConeSample:
    kind: str
    value: float
    params: np.ndarray
    weights: np.ndarray
    t: np.ndarray
    r: np.ndarray
    phi: dict
    chi: dict


def cone_events(kind, value, params):
    params = np.asarray(params, dtype=float)
    if kind == "outgoing":
        return value + params, params - value
    if kind == "incoming":
        return params + value, value - params
    if kind == "slice":
        return np.full_like(params, value), params
    raise InvalidInputError(f"Unknown cone kind: {kind}")


def cone_sample(history, kind, value, bounds, resolution=32, word=()):
    """Gauss-Legendre sample of an outgoing cone (fixed u, parameter ub),
    an incoming cone (fixed ub, parameter u) or a slice (fixed t, parameter r)."""
    lo, hi = bounds
    if hi < lo:
        raise InvalidInputError(f"empty cone segment [{lo}, {hi}]")
    nodes, weights = leggauss(resolution)
    params = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
    t, r = cone_events(kind, value, params)
    phi = history.jets_at(t, r)
    chi = history.jets_at(t, r, word) if word else phi
    return ConeSample(kind, value, params, 0.5 * (hi - lo) * weights, t, r, phi, chi)


def flux_density(sample, multiplier, n):
    """-sqrt(g) P^normal r^(n-1) |S^(n-1)| along a cone sample."""
    Pt, Pr, sg = radial_current(sample.phi, sample.chi, multiplier)
    if sample.kind == "outgoing":
        normal = 0.5 * (Pt - Pr)
    elif sample.kind == "incoming":
        normal = 0.5 * (Pt + Pr)
    else:
        normal = Pt
    return -sg * normal * sample.r ** (n - 1) * SPHERE_AREA[n]


def flux_energy(history, kind, value, bounds, multiplier="dt", word=(), resolution=32):
    """Energy flux through a cone or slice segment, with its pointwise positivity margin."""
    sample = cone_sample(history, kind, value, bounds, resolution, word)
    density = flux_density(sample, multiplier, history.grid.n)
    return float(density @ sample.weights), float(np.min(density))


@dataclass
class FluxReport:
    multiplier: str
    word: tuple
    u: float
    ub: float
    u0: float
    t0: float
    outgoing: float
    incoming: float
    initial: float
    outer: float
    bulk: float
    margin: float

    @property
    def residual(self):
        return abs(2 * self.outgoing + 2 * self.incoming - self.initial - 2 * self.outer + self.bulk)

    @property
    def relative_residual(self):
        scale = abs(self.initial) + 2 * abs(self.outer) + abs(self.bulk)
        return self.residual / scale if scale > 0 else self.residual


def energy_identity(history, u, ub, u0, t0, multiplier="dt", word=(), resolution=32):
    """Fluxes and bulk of the region t >= t0, u0 <= u' <= u, ub' <= ub."""
    n = history.grid.n
    if len(tuple(word)) > 1:
        raise InsufficientJetError("the bulk term needs words of length <= 1")
    if not u0 < u:
        raise InvalidInputError(f"need u0 < u, got {u0}, {u}")
    if ub < t0 - u0:
        raise InvalidInputError(f"ub = {ub} lies below the initial slice corner {t0 - u0}")
    if history.grid.has_origin and t0 - 2 * u < 0:
        raise InvalidInputError(f"region reaches r < 0 (u = {u} > t0 / 2)")

    out, m1 = flux_energy(history, "outgoing", u, (t0 - u, ub), multiplier, word, resolution)
    inc, m2 = flux_energy(history, "incoming", ub, (u0, u), multiplier, word, resolution)
    outer, m3 = flux_energy(history, "outgoing", u0, (t0 - u0, ub), multiplier, word, resolution)
    initial, m4 = flux_energy(history, "slice", t0, (t0 - 2 * u, t0 - 2 * u0), multiplier, word, resolution)

    nodes, weights = leggauss(resolution)
    up = 0.5 * (u - u0) * nodes + 0.5 * (u + u0)
    wu = 0.5 * (u - u0) * weights
    bulk = 0.0
    for a, wa in zip(up, wu):
        lo = t0 - a
        ubp = 0.5 * (ub - lo) * nodes + 0.5 * (ub + lo)
        wub = 0.5 * (ub - lo) * weights
        t, r = a + ubp, ubp - a
        phi = history.jets_at(t, r)
        chi = history.jets_at(t, r, word) if word else phi
        density = divergence_density(phi, chi, r, n, multiplier)
        bulk += wa * float((2 * density * r ** (n - 1) * SPHERE_AREA[n]) @ wub)

    report = FluxReport(multiplier, tuple(word), u, ub, u0, t0, out, inc, initial, outer, bulk, min(m1, m2, m3, m4))
    logging.debug("energy identity u=%g ub=%g: residual %.3e", u, ub, report.residual)
    return report


def energy_identity_residual(history, u, ub, u0, t0, multiplier="dt", word=(), resolution=32):
    return energy_identity(history, u, ub, u0, t0, multiplier, word, resolution).residual


@dataclass
class ConeFluxAccumulator:
    """Evolution callback integrating outgoing cone fluxes step by step.

    For each u in `cones` the flux through C_u is accumulated in ub with the
    trapezoid rule at the radius r = t - 2u where the cone crosses the slice.
    """

    cones: tuple
    multiplier: str = "dt"
    word: tuple = ()
    series: dict = field(default_factory=dict)
    _last: dict = field(default_factory=dict, repr=False)

    def _densities(self, state):
        grid = state.grid
        table = jet_table(state)
        chi_table = apply_Z(table, state.t, grid.x, self.word) if self.word else table
        out = {}
        for u in self.cones:
            r = state.t - 2 * u
            if not grid.x[0] <= r <= grid.x[-1]:
                continue
            phi = {k: interp1d(grid.x, table[k], kind="cubic")(r) for k in ((1, 0), (0, 1), (2, 0), (1, 1), (0, 2))}
            chi = {k: interp1d(grid.x, chi_table[k], kind="cubic")(r) for k in ((1, 0), (0, 1))}
            Pt, Pr, sg = radial_current(phi, chi, self.multiplier)
            out[u] = float(-sg * 0.5 * (Pt - Pr) * r ** (grid.n - 1) * SPHERE_AREA[grid.n])
        return out

    def __call__(self, state, prev):
        if not self._last and prev is not None:
            self._last = {u: (prev.t - u, d) for u, d in self._densities(prev).items()}
            for u, (ub, _) in self._last.items():
                self.series.setdefault(u, [(ub, 0.0)])
        for u, density in self._densities(state).items():
            ub = state.t - u
            if u in self._last:
                ub_prev, d_prev = self._last[u]
                total = self.series[u][-1][1] + 0.5 * (density + d_prev) * (ub - ub_prev)
                self.series[u].append((ub, total))
            else:
                self.series[u] = [(ub, 0.0)]
            self._last[u] = (ub, density)

    def sup(self, u):
        return max((value for _, value in self.series.get(u, [])), default=0.0)

    def uniform_ratio(self, lo, hi, ub_min=2.0, floor=1e-8):
        """Largest max/min of the cumulative flux over ub >= ub_min, among cones lo <= u <= hi.

        Cones whose flux never exceeds `floor` times the largest flux carry
        round-off only and are skipped. None when no cone qualifies.
        """
        tails = {
            u: np.array([value for ub, value in series if ub >= ub_min])
            for u, series in self.series.items()
            if lo - 1e-12 <= u <= hi + 1e-12
        }
        tails = {u: values for u, values in tails.items() if values.size >= 2}
        if not tails:
            return None
        peak = max(float(np.max(values)) for values in tails.values())
        ratios = [
            float(values.max() / values.min())
            for values in tails.values()
            if values.max() > floor * peak and values.min() > 0
        ]
        return max(ratios, default=None)


def commuted_residual(table, t, r, letter, n):
    """Commuted equation for Z phi, which vanishes when phi solves the membrane equation.

    Z is a Killing field (dt, or dr and B in planar runs) or the scaling S.
    """
    if letter not in LETTERS:
        raise InvalidInputError(f"Unknown commutator letter: {letter}")
    if letter == "dr" and n > 1:
        raise InvalidInputError("d_r is not a symmetry of radial solutions")
    if letter == "B" and n > 1:
        raise InvalidInputError("the radial boost is not a Killing field")
    if _order(table) < 3:
        raise InsufficientJetError("the commuted residual needs third derivatives")
    chi = apply_Z(table, t, r, (letter,))
    p, q = table[(1, 0)], table[(0, 1)]
    Q = -(p**2) + q**2
    g = 1 + Q
    r_inv = (n - 1) / r if n > 1 else 0.0

    def box(f):
        return -f[(2, 0)] + f[(0, 2)] + r_inv * f[(0, 1)]

    def hess(f, Xt, Xr, Yt, Yr):
        return Xt * Yt * f[(2, 0)] + (Xt * Yr + Xr * Yt) * f[(1, 1)] + Xr * Yr * f[(0, 2)]

    N = hess(table, -p, q, -p, q) / g
    reduced = box(chi) - hess(chi, -p, q, -p, q) / g
    mixed = 2 * hess(table, -chi[(1, 0)], chi[(0, 1)], -p, q) / g
    dot = -p * chi[(1, 0)] + q * chi[(0, 1)]
    scaling = 1.0 if letter == "S" else 0.0
    return reduced - (mixed - 2 * dot * N / g) - scaling * (2 * box(table) - 4 * N + 2 * Q * N / g)


def equation_residual(table, r, n):
    """g^{ab} phi_ab in Cartesian components, from a radial jet table."""
    p, q = table[(1, 0)], table[(0, 1)]
    g = 1 - p**2 + q**2
    r_inv = (n - 1) / r if n > 1 else 0.0
    box = -table[(2, 0)] + table[(0, 2)] + r_inv * q
    return box - (p**2 * table[(2, 0)] - 2 * p * q * table[(1, 1)] + q**2 * table[(0, 2)]) / g


def _interior_l2(grid, values, mask=None):
    idx = _interior(grid)
    if mask is not None:
        idx = idx[mask[idx]]
    return float(np.sqrt(grid.h * np.sum(values[idx] ** 2)))


def commuted_residual_norm(state, letter, mask=None):
    table = jet_table(state)
    grid = state.grid
    with np.errstate(divide="ignore", invalid="ignore"):
        values = commuted_residual(table, state.t, grid.x, letter, grid.n)
    return _interior_l2(grid, np.nan_to_num(values), mask)


def region_one_energy(state, delta, word=()):
    """(int over Sigma_t with u >= delta of (d_t Z phi)^2 + |grad Z phi|^2)^(1/2)."""
    grid = state.grid
    table = apply_Z(jet_table(state), state.t, grid.x, word)
    x = grid.x
    inside = x <= state.t - 2 * delta
    if np.count_nonzero(inside) < 2:
        return 0.0
    density = (table[(1, 0)] ** 2 + table[(0, 1)] ** 2) * np.abs(x) ** (grid.n - 1) * SPHERE_AREA[grid.n]
    return float(np.sqrt(trapezoid(density[inside], x[inside])))


def rrme_energy(state):
    """Flux of the d_t current through the rescaled slice t' = const."""
    grid, delta = state.grid, state.delta
    if grid.mode != "rescaled":
        raise InvalidInputError(f"expected a rescaled grid, got {grid.mode}")
    phi_r, _ = derivatives(grid, state.phi)
    phi_u, phi_ub = state.psi - phi_r, state.psi + phi_r
    jets = {(1, 0): 0.5 * (phi_u / delta + phi_ub), (0, 1): 0.5 * (phi_ub - phi_u / delta)}
    Pt, Pr, sg = radial_current(jets, jets, "dt")
    Ptp = 0.5 * (1 / delta + 1) * Pt + 0.5 * (1 - 1 / delta) * Pr
    r = rrme_radius(grid, state.t, delta)
    n = grid.n
    density = -sg * Ptp * delta * np.abs(r) ** (n - 1) * SPHERE_AREA[n]
    return float(trapezoid(density, grid.x))


@dataclass
class RrmeEnergyMonitor:
    """(t', E(t')) of the rescaled solve every `stride` steps."""

    stride: int = 1
    records: list = field(default_factory=list)
    _steps: int = field(default=0, repr=False)

    def __call__(self, state, prev):
        if not self.records and prev is not None:
            self.records.append((prev.t, rrme_energy(prev)))
        self._steps += 1
        if self._steps % self.stride == 0:
            self.records.append((state.t, rrme_energy(state)))

    def growth(self):
        """max E / E at the first record."""
        energies = np.array([e for _, e in self.records])
        if energies.size == 0 or energies[0] <= 0:
            return None
        return float(np.max(energies) / energies[0])


FRAME_QUANTITIES = ("L", "Lb", "LL", "LbL", "LbLb")


def _frame_values(jets):
    return {
        "L": jets[(1, 0)] + jets[(0, 1)],
        "Lb": jets[(1, 0)] - jets[(0, 1)],
        "LL": jets[(2, 0)] + 2 * jets[(1, 1)] + jets[(0, 2)],
        "LbL": jets[(2, 0)] - jets[(0, 2)],
        "LbLb": jets[(2, 0)] - 2 * jets[(1, 1)] + jets[(0, 2)],
    }


@dataclass
class DecayTable:
    delta: float
    stations: np.ndarray
    rows: dict

    def fit(self, quantity, reference=None, tolerance=0.2, side="lower"):
        """Decay exponent of a tracked quantity, as the slope of -log sup against log ub."""
        return scaling_fit(self.stations, self.rows[quantity], None, tolerance, side).negated(reference)


def pointwise_tracker(history, delta, stations, samples=33):
    """Sup over u in [0, delta] of the frame derivatives of phi at each ub station."""
    stations = np.asarray(stations, dtype=float)
    rows = {name: [] for name in FRAME_QUANTITIES}
    u = np.linspace(0, delta, samples)
    for ub in stations:
        t, r = u + ub, ub - u
        values = _frame_values(history.jets_at(t, r))
        for name in FRAME_QUANTITIES:
            rows[name].append(float(np.max(np.abs(values[name]))))
    return DecayTable(delta, stations, {k: np.array(v) for k, v in rows.items()})


@dataclass
class SliceReport:
    delta: float
    stations: np.ndarray
    words: dict
    transport: np.ndarray
    lb: np.ndarray

    @property
    def transport_variation(self):
        t = self.transport[self.transport > 0]
        return float(np.max(t) / np.min(t)) if t.size else 1.0


def last_slice_report(history, delta, stations, max_length=2):
    """Sup of |Z phi| over the outgoing cone u = delta for every word of length <= 2,
    and the transported quantity ub^(n-1) (Lb phi)^2 / g along it."""
    stations = np.asarray(stations, dtype=float)
    t, r = stations + delta, stations - delta
    words = {}
    for length in range(max_length + 1):
        for word in product(LETTERS, repeat=length):
            values = history.jets_at(t, r, word, keys=[(0, 0)])[(0, 0)]
            words[word] = float(np.max(np.abs(values)))
    jets = history.jets_at(t, r, keys=[(1, 0), (0, 1)])
    p, q = jets[(1, 0)], jets[(0, 1)]
    g = 1 - p**2 + q**2
    transport = stations ** (history.grid.n - 1) * (p - q) ** 2 / g
    return SliceReport(delta, stations, words, transport, np.abs(p - q))


@dataclass
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    rvalue: float
    reference: float | None
    tolerance: float
    side: str

    @property
    def passed(self):
        if self.reference is None:
            return True
        if self.side == "lower":
            return self.slope >= self.reference - self.tolerance
        if self.side == "upper":
            return self.slope <= self.reference + self.tolerance
        return abs(self.slope - self.reference) <= self.tolerance

    def negated(self, reference):
        return ScalingFit(-self.slope, -self.intercept, self.stderr, self.rvalue, reference, self.tolerance, self.side)


def scaling_fit(xs, ys, reference=None, tolerance=0.1, side="both"):
    """Least-squares slope of log y against log x."""
    if side not in SIDES:
        raise InvalidInputError(f"Unknown side: {side}")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise InsufficientSamplesError(f"scaling fits need at least 3 samples, got {xs.size}")
    if np.min(xs) <= 0 or np.min(ys) <= 0:
        raise InsufficientSamplesError("scaling fits need positive samples")
    if np.max(xs) / np.min(xs) < 4:
        raise InsufficientSamplesError(f"samples span a factor {np.max(xs) / np.min(xs):.2f} < 4")
    fit = linregress(np.log(xs), np.log(ys))
    return ScalingFit(fit.slope, fit.intercept, fit.stderr, fit.rvalue, reference, tolerance, side)
