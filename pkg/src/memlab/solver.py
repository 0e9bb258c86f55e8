"""Method-of-lines evolution of the membrane equation in planar and radial symmetry.

The evolved quantity is (phi, psi = d_t phi). Spatial derivatives use fourth
order central differences with two ghost points on each side: even
reflection at the origin of radial grids, linear extrapolation elsewhere.
The two outermost points of an open boundary keep d_t psi = 0.

Radial form of the equation, with g = 1 - phi_t^2 + phi_r^2:

    (1 + phi_r^2) phi_tt = 2 phi_t phi_r phi_tr + (1 - phi_t^2) phi_rr + (n-1) g phi_r / r

The rescaled grid ("rescaled" mode) evolves the same equation written in
(t', r') = (u/delta + ub, ub - u/delta) coordinates.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from memlab.utils import (
    G_FLOOR,
    MIN_G_WARNING,
    DegenerateMetricError,
    InvalidInputError,
    SolverBlowUpError,
)

MODES = ("planar", "radial", "rescaled")
MODE_CODES = {"planar": 0, "radial": 1, "rescaled": 2}
FROZEN_POINTS = 2
DEFAULT_CFL = 0.4


@dataclass(frozen=True)
class GridSpec:
    mode: str
    n: int
    x_min: float
    x_max: float
    N: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"Unknown grid mode: {self.mode}")
        if self.N < 16:
            raise InvalidInputError(f"grid needs N >= 16, got {self.N}")
        if not self.x_max > self.x_min:
            raise InvalidInputError(f"empty domain [{self.x_min}, {self.x_max}]")
        if self.mode == "radial" and self.x_min != 0:
            raise InvalidInputError("radial grids start at r = 0")
        if self.mode == "radial" and self.n not in (2, 3):
            raise InvalidInputError(f"radial grids need n in (2, 3), got {self.n}")
        if self.mode == "planar" and self.n != 1:
            raise InvalidInputError("planar grids have n = 1")

    @property
    def h(self):
        return (self.x_max - self.x_min) / (self.N - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.N)

    @property
    def has_origin(self):
        return self.mode == "radial"


def radial_grid(n, N, t_end):
    """Radial grid with r_max = 1 + 1.1 t_end, out of causal reach of data supported in r < 1."""
    return GridSpec("radial", n, 0.0, 1.0 + 1.1 * t_end, N)


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FieldState:
    grid: GridSpec
    t: float
    phi: np.ndarray
    psi: np.ndarray
    delta: float = 0.0
    step: int = 0
    linear: bool = False

    def __post_init__(self):
        object.__setattr__(self, "phi", _readonly(self.phi))
        object.__setattr__(self, "psi", _readonly(self.psi))
        if self.phi.shape != (self.grid.N,) or self.psi.shape != (self.grid.N,):
            raise InvalidInputError(
                f"arrays of shape {self.phi.shape}, {self.psi.shape} on a grid of {self.grid.N} points"
            )
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.psi))):
            raise SolverBlowUpError(f"non-finite field at t = {self.t}, step {self.step}")
        if self.grid.mode == "rescaled" and not 0 < self.delta <= 0.5:
            raise InvalidInputError(f"rescaled states need delta in (0, 0.5], got {self.delta}")

    @property
    def x(self):
        return self.grid.x

    def advanced(self, t, phi, psi):
        return replace(self, t=t, phi=phi, psi=psi, step=self.step + 1)

    def spatial(self):
        """(phi_r, phi_rr, psi_r) on the grid."""
        phi_r, phi_rr = derivatives(self.grid, self.phi)
        psi_r, _ = derivatives(self.grid, self.psi)
        return phi_r, phi_rr, psi_r

    def sup_norms(self):
        phi_r, _, _ = self.spatial()
        return float(np.max(np.abs(self.phi))), float(max(np.max(np.abs(self.psi)), np.max(np.abs(phi_r))))


def zero_state(grid, t=0.0, delta=0.0):
    return FieldState(grid, t, np.zeros(grid.N), np.zeros(grid.N), delta)


def _extend(grid, f):
    if grid.has_origin:
        left = [f[2], f[1]]
    else:
        left = [3 * f[0] - 2 * f[1], 2 * f[0] - f[1]]
    right = [2 * f[-1] - f[-2], 3 * f[-1] - 2 * f[-2]]
    return np.concatenate([left, f, right])


def derivatives(grid, f):
    """Fourth-order first and second derivatives."""
    fe = _extend(grid, np.asarray(f, dtype=float))
    h = grid.h
    d1 = (fe[:-4] - 8 * fe[1:-3] + 8 * fe[3:-1] - fe[4:]) / (12 * h)
    d2 = (-fe[:-4] + 16 * fe[1:-3] - 30 * fe[2:-2] + 16 * fe[3:-1] - fe[4:]) / (12 * h * h)
    return d1, d2


def third_derivative(grid, f):
    fe = _extend(grid, np.asarray(f, dtype=float))
    return (-fe[:-4] + 2 * fe[1:-3] - 2 * fe[3:-1] + fe[4:]) / (2 * grid.h**3)


def _over_r(grid, numerator, at_origin):
    """numerator / r on a radial grid, with the origin value supplied."""
    r = grid.x
    out = np.empty_like(numerator)
    out[1:] = numerator[1:] / r[1:]
    out[0] = at_origin[0]
    return out


def _check_hyperbolic(g, state_t, where="grid"):
    g_min = float(np.min(g))
    if g_min <= G_FLOOR:
        raise DegenerateMetricError(f"min(1 + Q) = {g_min:.3e} on the {where} at t = {state_t}")
    return g_min


def rrme_radius(grid, t, delta):
    """Minkowski radius of the rescaled grid points at time t'."""
    return ((1 - delta) * t + (1 + delta) * grid.x) / 2


def rrme_coefficients(phi_u, phi_ub, delta):
    """(a, b, c, g) of the rescaled equation a phi_u'u' + b phi_u'ub' + c phi_ub'ub' = S."""
    g = 1 - phi_u * phi_ub / delta
    a = phi_ub**2 / (4 * g * delta)
    c = phi_u**2 / (4 * g * delta)
    b = 1 + phi_u * phi_ub / (2 * g * delta)
    return a, b, c, g


def _accelerations(grid, t, phi, psi, delta=0.0, linear=False):
    phi_r, phi_rr = derivatives(grid, phi)
    psi_r, _ = derivatives(grid, psi)
    n = grid.n
    if grid.mode == "rescaled":
        phi_u, phi_ub = psi - phi_r, psi + phi_r
        source = 0.0
        if n > 1:
            r = rrme_radius(grid, t, delta)
            # grid points past the origin stay outside the domain of dependence of the shell
            with np.errstate(divide="ignore", invalid="ignore"):
                source = np.where(r > 0, (n - 1) * (delta * phi_ub - phi_u) / (2 * r), 0.0)
        if linear:
            acc = phi_rr + source
        else:
            a, b, c, g = rrme_coefficients(phi_u, phi_ub, delta)
            _check_hyperbolic(g, t, "rescaled grid")
            acc = (2 * (a - c) * psi_r + (b - a - c) * phi_rr + source) / (a + b + c)
    else:
        g = 1 - psi**2 + phi_r**2
        if not linear:
            _check_hyperbolic(g, t)
        weight = np.ones_like(g) if linear else g
        source = 0.0
        if grid.has_origin:
            source = (n - 1) * _over_r(grid, weight * phi_r, weight * phi_rr)
        if linear:
            acc = phi_rr + source
        else:
            acc = (2 * psi * phi_r * psi_r + (1 - psi**2) * phi_rr + source) / (1 + phi_r**2)
    acc[-FROZEN_POINTS:] = 0.0
    if not grid.has_origin:
        acc[:FROZEN_POINTS] = 0.0
    return acc


def rhs(state):
    """(d_t phi, d_t psi) of a state."""
    acc = _accelerations(state.grid, state.t, state.phi, state.psi, state.delta, state.linear)
    return state.psi.copy(), acc


def jet_table(state):
    """Derivatives of phi on the grid, keyed by (time order, space order), total order <= 3.

    Time derivatives beyond d_t phi come from the equation and its time derivative.
    """
    grid = state.grid
    if grid.mode == "rescaled":
        raise InvalidInputError("jet tables are built on planar and radial grids")
    phi, psi = state.phi, state.psi
    phi_r, phi_rr = derivatives(grid, phi)
    psi_r, psi_rr = derivatives(grid, psi)
    acc = _accelerations(grid, state.t, phi, psi, state.delta, state.linear)
    acc_r, _ = derivatives(grid, acc)
    n = grid.n
    if state.linear:
        src_t = 0.0
        if grid.has_origin:
            src_t = (n - 1) * _over_r(grid, psi_r, psi_rr)
        jerk = psi_rr + src_t
    else:
        g = 1 - psi**2 + phi_r**2
        g_t = -2 * psi * acc + 2 * phi_r * psi_r
        src_t = 0.0
        if grid.has_origin:
            src_t = (n - 1) * _over_r(grid, g_t * phi_r + g * psi_r, g_t * phi_rr + g * psi_rr)
        jerk = (
            2 * psi * psi_r**2
            + 2 * psi * phi_r * acc_r
            - 2 * psi * acc * phi_rr
            + (1 - psi**2) * psi_rr
            + src_t
        ) / (1 + phi_r**2)
    return {
        (0, 0): phi.copy(),
        (1, 0): psi.copy(),
        (0, 1): phi_r,
        (2, 0): acc,
        (1, 1): psi_r,
        (0, 2): phi_rr,
        (3, 0): jerk,
        (2, 1): acc_r,
        (1, 2): psi_rr,
        (0, 3): third_derivative(grid, phi),
    }


def characteristic_speeds(state):
    """Both characteristic speeds dr/dt at every grid point, shape (2, N)."""
    grid = state.grid
    phi_r, _ = derivatives(grid, state.phi)
    psi = state.psi
    if grid.mode == "rescaled":
        phi_u, phi_ub = psi - phi_r, psi + phi_r
        a, b, c, g = rrme_coefficients(phi_u, phi_ub, state.delta)
        _check_hyperbolic(g, state.t, "rescaled grid")
        A = a + b + c
        disc = (a - c) ** 2 + A * (b - a - c)
        if np.min(disc) <= 0:
            raise DegenerateMetricError(f"characteristic discriminant vanishes at t' = {state.t}")
        root = np.sqrt(disc)
        return np.array([(-(a - c) - root) / A, (-(a - c) + root) / A])
    g = 1 - psi**2 + phi_r**2
    if not state.linear:
        _check_hyperbolic(g, state.t)
    else:
        g = np.ones_like(g)
        psi, phi_r = np.zeros_like(psi), np.zeros_like(phi_r)
    g_tt = -1 - psi**2 / g
    g_tr = psi * phi_r / g
    g_rr = 1 - phi_r**2 / g
    disc = g_tr**2 - g_tt * g_rr
    if np.min(disc) <= 0:
        raise DegenerateMetricError(f"characteristic discriminant vanishes at t = {state.t}")
    root = np.sqrt(disc)
    return np.array([(g_tr + root) / g_tt, (g_tr - root) / g_tt])


def cfl_dt(state, cfl=DEFAULT_CFL):
    speed = float(np.max(np.abs(characteristic_speeds(state))))
    return cfl * state.grid.h / speed


def step_rk4(state, dt):
    grid, t, delta, linear = state.grid, state.t, state.delta, state.linear

    def f(time, phi, psi):
        return psi, _accelerations(grid, time, phi, psi, delta, linear)

    phi, psi = state.phi, state.psi
    k1 = f(t, phi, psi)
    k2 = f(t + dt / 2, phi + dt / 2 * k1[0], psi + dt / 2 * k1[1])
    k3 = f(t + dt / 2, phi + dt / 2 * k2[0], psi + dt / 2 * k2[1])
    k4 = f(t + dt, phi + dt * k3[0], psi + dt * k3[1])
    phi_new = phi + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    psi_new = psi + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return state.advanced(t + dt, phi_new, psi_new)


@dataclass
class MonitorRecord:
    t: float
    min_g: float
    max_speed: float
    gauge_residual: float
    sup_phi: float
    sup_dphi: float


@dataclass
class Monitor:
    """Evolution callback tabulating hyperbolicity and gauge health every `stride` steps."""

    stride: int = 1
    warn_floor: float = MIN_G_WARNING
    records: list = field(default_factory=list)
    warned: bool = False

    def __call__(self, state, prev):
        if state.step % self.stride:
            return
        min_g = min_metric_factor(state)
        if min_g < self.warn_floor and not self.warned:
            logging.warning("min(1 + Q) = %.4f fell under %.2f at t = %.4f", min_g, self.warn_floor, state.t)
            self.warned = True
        gauge = 0.0
        if prev is not None and state.grid.mode != "rescaled" and not state.linear:
            gauge = gauge_residual(state, prev)
        sup_phi, sup_dphi = state.sup_norms()
        # a degenerate state is still recorded; the next step raises
        speed = float(np.max(np.abs(characteristic_speeds(state)))) if min_g > G_FLOOR else float("inf")
        self.records.append(MonitorRecord(state.t, min_g, speed, gauge, sup_phi, sup_dphi))

    @property
    def min_g(self):
        return min((r.min_g for r in self.records), default=1.0)


def min_metric_factor(state):
    phi_r, _ = derivatives(state.grid, state.phi)
    if state.grid.mode == "rescaled":
        phi_u, phi_ub = state.psi - phi_r, state.psi + phi_r
        return float(np.min(1 - phi_u * phi_ub / state.delta))
    return float(np.min(1 - state.psi**2 + phi_r**2))


def evolve(state, t_end, callbacks=(), cfl=DEFAULT_CFL, max_steps=10_000_000):
    """Integrate to t_end, calling every callback as cb(state, prev) after each step."""
    if not 0 < cfl <= 0.5:
        raise InvalidInputError(f"cfl must lie in (0, 0.5], got {cfl}")
    logging.info(
        "evolving %s n=%d N=%d delta=%g from t=%g to t=%g",
        state.grid.mode, state.grid.n, state.grid.N, state.delta, state.t, t_end,
    )
    steps = 0
    while state.t < t_end - 1e-13 * max(1.0, abs(t_end)):
        dt = min(cfl_dt(state, cfl), t_end - state.t)
        prev, state = state, step_rk4(state, dt)
        for callback in callbacks:
            callback(state, prev)
        steps += 1
        if steps >= max_steps:
            raise SolverBlowUpError(f"step limit {max_steps} reached at t = {state.t}")
    logging.info("reached t=%g after %d steps", state.t, state.step)
    return state


def evolve_rrme(state, delta=None, t_end=None, callbacks=(), cfl=DEFAULT_CFL):
    """Evolve a rescaled-grid state in t' (default end 2 - delta)."""
    delta = state.delta if delta is None else delta
    if state.grid.mode != "rescaled":
        raise InvalidInputError(f"expected a rescaled grid, got {state.grid.mode}")
    if not 0 < delta <= 0.25:
        raise InvalidInputError(f"delta must lie in (0, 0.25], got {delta}")
    if delta != state.delta:
        state = replace(state, delta=delta)
    t_end = 2 - delta if t_end is None else t_end
    return evolve(state, t_end, callbacks, cfl)


def _centered(state, prev, quantity):
    """(time derivative, spatial average) of quantity(state) between two snapshots."""
    if prev is None or prev.t >= state.t:
        raise InvalidInputError("gauge residuals need an earlier snapshot")
    now, before = quantity(state), quantity(prev)
    dt = state.t - prev.t
    return [(a - b) / dt for a, b in zip(now[0], before[0])], [(a + b) / 2 for a, b in zip(now[1], before[1])]


def _interior(grid):
    idx = np.arange(FROZEN_POINTS, grid.N - FROZEN_POINTS)
    return idx[grid.x[idx] > 0] if grid.has_origin else idx


def _l2(grid, values):
    idx = _interior(grid)
    return float(np.sqrt(grid.h * sum(np.sum(v[idx] ** 2) for v in values)))


def _radial_divergence(grid, F):
    """dF/dr + (n-1) F / r (planar: dF/dx)."""
    F_r, _ = derivatives(grid, F)
    if not grid.has_origin:
        return F_r
    with np.errstate(divide="ignore", invalid="ignore"):
        return F_r + (grid.n - 1) * F / grid.x


def gauge_residual(state, prev):
    """Discrete L2 norm of d_a(sqrt(g) g^{ab}) between two snapshots."""
    grid = state.grid

    def parts(s):
        phi_r, _ = derivatives(grid, s.phi)
        sg = np.sqrt(1 - s.psi**2 + phi_r**2)
        A = s.psi * phi_r / sg
        B = phi_r**2 / sg
        spatial_t = _radial_divergence(grid, A)
        sg_r, _ = derivatives(grid, sg)
        spatial_r = sg_r - _radial_divergence(grid, B)
        return (-sg - s.psi**2 / sg, A), (spatial_t, spatial_r)

    (time_t, time_r), (space_t, space_r) = _centered(state, prev, parts)
    return _l2(grid, [time_t + space_t, time_r + space_r])


def divergence_residual(state, prev):
    """Discrete L2 norm of the divergence form d^a(d_a phi / sqrt(g))."""
    grid = state.grid

    def parts(s):
        phi_r, _ = derivatives(grid, s.phi)
        sg = np.sqrt(1 - s.psi**2 + phi_r**2)
        return (-s.psi / sg,), (_radial_divergence(grid, phi_r / sg),)

    (time,), (space,) = _centered(state, prev, parts)
    return _l2(grid, [time + space])


def support_radius(state, threshold):
    """Largest x with |phi| above threshold, or None."""
    idx = np.nonzero(np.abs(state.phi) > threshold)[0]
    return float(state.x[idx[-1]]) if idx.size else None
