"""Pointwise membrane geometry.

Everything here works on one event at a time: the jet of the graph function
phi, the induced metric g = eta + dphi dphi, the adapted null frame, the
Levi-Civita connection and the two forms of the wave operator.

Component conventions: Cartesian charts order coordinates (t, x^1..x^n), the
radial chart is (t, r), the null chart (u, ub, angular frame) and the
rescaled chart (u', ub', angular frame) with u' = u / delta. Angular
directions of the null charts are an orthonormal frame of the sphere through
the event, so those charts carry first-order information only; connection
and wave operators are evaluated in Cartesian components.
"""

import logging
from dataclasses import dataclass, field
from itertools import permutations
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from memlab.utils import (
    CAUSAL_TOL,
    G_FLOOR,
    DegenerateMetricError,
    FrameSolveFailedError,
    InsufficientJetError,
    InvalidInputError,
    OriginSingularError,
)

CHARTS = ("cartesian", "radial", "null", "rescaled")
ORIGIN_RADIUS = 1e-8


def _symmetrize(tensor):
    if tensor is None:
        return None
    tensor = np.asarray(tensor, dtype=float)
    axes = range(tensor.ndim)
    return sum(np.transpose(tensor, p) for p in permutations(axes)) / len(
        list(permutations(axes))
    )


@dataclass(frozen=True)
class SpacetimeJet:
    """Value and partial derivatives of a field at one event.

    `d1`, `d2`, `d3` are the first, second and third partials in the chart's
    component order. Mixed partials are symmetrized on construction, and
    asking for an order that was not supplied raises `InsufficientJetError`.
    """

    chart: str
    n: int
    coords: np.ndarray
    value: float = 0.0
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    d3: np.ndarray | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise InvalidInputError(f"Unknown chart: {self.chart}")
        if self.n not in (1, 2, 3):
            raise InvalidInputError(f"Spatial dimension must be 1, 2 or 3, got {self.n}")
        if self.chart == "rescaled" and not self.delta:
            raise InvalidInputError("The rescaled chart needs delta")
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=float))
        object.__setattr__(self, "value", float(self.value))
        if self.d1 is not None:
            object.__setattr__(self, "d1", np.asarray(self.d1, dtype=float))
        object.__setattr__(self, "d2", _symmetrize(self.d2))
        object.__setattr__(self, "d3", _symmetrize(self.d3))
        dim = self.dim
        for k, d in enumerate((self.d1, self.d2, self.d3), start=1):
            if d is not None and d.shape != (dim,) * k:
                raise InvalidInputError(
                    f"d{k} has shape {d.shape}, expected {(dim,) * k} in the {self.chart} chart"
                )

    @property
    def dim(self):
        return 2 if self.chart == "radial" else self.n + 1

    @property
    def order(self):
        for k, d in enumerate((self.d1, self.d2, self.d3)):
            if d is None:
                return k
        return 3

    def require(self, order):
        if self.order < order:
            raise InsufficientJetError(
                f"order {order} requested, jet carries order {self.order}"
            )
        return self

    def truncate(self, order):
        derivs = [self.d1, self.d2, self.d3]
        derivs = [d if k < order else None for k, d in enumerate(derivs)]
        return SpacetimeJet(self.chart, self.n, self.coords, self.value, *derivs, delta=self.delta)

    def scaled(self, factor):
        derivs = [None if d is None else factor * d for d in (self.d1, self.d2, self.d3)]
        return SpacetimeJet(
            self.chart, self.n, self.coords, factor * self.value, *derivs, delta=self.delta
        )

    @property
    def radius(self):
        if self.chart == "radial":
            return float(self.coords[1])
        if self.chart == "cartesian":
            return float(np.linalg.norm(self.coords[1:]))
        u, ub = self.coords[:2]
        if self.chart == "rescaled":
            u = self.delta * u
        return float(ub - u)


def minkowski(chart, n, delta=None):
    """Lower-index Minkowski components in `chart`."""
    if chart == "cartesian":
        eta = np.eye(n + 1)
        eta[0, 0] = -1.0
    elif chart == "radial":
        eta = np.diag([-1.0, 1.0])
    elif chart in ("null", "rescaled"):
        if chart == "rescaled" and not delta:
            raise InvalidInputError("The rescaled chart needs delta")
        scale = 1.0 if chart == "null" else delta
        eta = np.eye(n + 1)
        eta[0, 0] = eta[1, 1] = 0.0
        eta[0, 1] = eta[1, 0] = -2.0 * scale
    else:
        raise InvalidInputError(f"Unknown chart: {chart}")
    return eta


def unit_direction(x):
    r = np.linalg.norm(x)
    if r < ORIGIN_RADIUS:
        raise OriginSingularError(f"radius {r:.3e} is below {ORIGIN_RADIUS}")
    return x / r, r


def angular_basis(omega):
    """Orthonormal Euclidean basis of the tangent space of the sphere, as rows."""
    omega = np.atleast_1d(omega)
    if omega.size == 1:
        return np.zeros((0, 1))
    return null_space(omega[None, :]).T


def radial_derivatives(omega, r):
    """First to third Cartesian derivatives of r = |x| at a point with direction omega."""
    P = np.eye(omega.size) - np.outer(omega, omega)
    d2 = P / r
    d3 = -(
        np.einsum("ij,k->ijk", P, omega)
        + np.einsum("ik,j->ijk", P, omega)
        + np.einsum("jk,i->ijk", P, omega)
    ) / r**2
    return omega, d2, d3


def compose_jet(d1y, d2y, d3y, J, H=None, T=None):
    """Chain rule to third order for F(x) = G(y(x)).

    `J[A, a]`, `H[A, a, b]`, `T[A, a, b, c]` hold the derivatives of y^A.
    Missing orders of G yield missing orders of F.
    """
    dim = J.shape[1]
    H = np.zeros((J.shape[0], dim, dim)) if H is None else H
    T = np.zeros((J.shape[0], dim, dim, dim)) if T is None else T
    d1 = J.T @ d1y
    d2 = d3 = None
    if d2y is not None:
        d2 = J.T @ d2y @ J + np.einsum("A,Aab->ab", d1y, H)
    if d3y is not None and d2y is not None:
        mixed = np.einsum("AB,Aab,Bc->abc", d2y, H, J)
        d3 = (
            np.einsum("ABC,Aa,Bb,Cc->abc", d3y, J, J, J)
            + mixed
            + np.einsum("AB,Aac,Bb->abc", d2y, H, J)
            + np.einsum("AB,Abc,Ba->abc", d2y, H, J)
            + np.einsum("A,Aabc->abc", d1y, T)
        )
    return d1, d2, d3


def radial_to_cartesian(jet, omega=None):
    """Push a (t, r) jet forward to Cartesian components at the point r*omega.

    `omega` defaults to the x^1 axis.
    """
    if jet.chart != "radial":
        raise InvalidInputError(f"Expected a radial jet, got {jet.chart}")
    n = jet.n
    omega = np.eye(n)[0] if omega is None else np.asarray(omega, dtype=float)
    t, r = jet.coords
    if r < ORIGIN_RADIUS:
        raise OriginSingularError(f"radius {r:.3e} is below {ORIGIN_RADIUS}")
    dim = n + 1
    r1, r2, r3 = radial_derivatives(omega, r)
    J = np.zeros((2, dim))
    J[0, 0] = 1.0
    J[1, 1:] = r1
    H = np.zeros((2, dim, dim))
    H[1, 1:, 1:] = r2
    T = np.zeros((2, dim, dim, dim))
    T[1, 1:, 1:, 1:] = r3
    if jet.order == 0:
        derivs = (None, None, None)
    else:
        derivs = compose_jet(jet.d1, jet.d2, jet.d3, J, H, T)
    coords = np.concatenate([[t], r * omega])
    return SpacetimeJet("cartesian", n, coords, jet.value, *derivs)


def as_cartesian(jet):
    if jet.chart == "cartesian":
        return jet
    if jet.chart == "radial":
        return radial_to_cartesian(jet)
    raise InvalidInputError(
        f"{jet.chart} jets carry no connection data; build them from Cartesian jets"
    )


def chart_jacobian(x, chart, delta=None):
    """Rows are the differentials of the `chart` coordinates in Cartesian components."""
    x = np.asarray(x, dtype=float)
    n = x.size - 1
    if chart == "cartesian":
        return np.eye(n + 1)
    omega, r = unit_direction(x[1:])
    M = np.zeros((n + 1, n + 1))
    M[0] = 0.5 * np.concatenate([[1.0], -omega])
    M[1] = 0.5 * np.concatenate([[1.0], omega])
    M[2:, 1:] = angular_basis(omega)
    if chart == "rescaled":
        M[0] /= delta
    elif chart != "null":
        raise InvalidInputError(f"No Jacobian for chart {chart}")
    return M


def to_chart(jet, chart, delta=None):
    """First-order jet of a Cartesian jet in the null or rescaled chart."""
    jet = as_cartesian(jet).require(1)
    if chart == "cartesian":
        return jet.truncate(1)
    M = chart_jacobian(jet.coords, chart, delta)
    t, r = jet.coords[0], jet.radius
    u, ub = (t - r) / 2, (t + r) / 2
    if chart == "rescaled":
        u = u / delta
    coords = np.zeros(jet.n + 1)
    coords[:2] = u, ub
    d1 = np.linalg.solve(M.T, jet.d1)
    return SpacetimeJet(chart, jet.n, coords, jet.value, d1, delta=delta)


@dataclass(frozen=True)
class MembraneMetric:
    chart: str
    Q: float
    g: float
    lower: np.ndarray
    upper: np.ndarray
    eta: np.ndarray
    grad_up: np.ndarray  # eta^{ab} d_b phi

    @property
    def sqrt_g(self):
        return float(np.sqrt(self.g))

    @property
    def det(self):
        return float(np.linalg.det(self.lower))

    def dot(self, X, Y):
        return float(np.asarray(X) @ self.lower @ np.asarray(Y))

    def codot(self, a, b):
        return float(np.asarray(a) @ self.upper @ np.asarray(b))

    def raise_index(self, covector):
        return self.upper @ np.asarray(covector)


def metric_from_jet(jet, eta=None):
    jet.require(1)
    eta = minkowski(jet.chart, jet.n, jet.delta) if eta is None else eta
    eta_inv = np.linalg.inv(eta)
    dphi = jet.d1
    up = eta_inv @ dphi
    Q = float(dphi @ up)
    g = 1.0 + Q
    if g <= G_FLOOR:
        raise DegenerateMetricError(f"1 + Q = {g:.3e} at {jet.coords}")
    lower = eta + np.outer(dphi, dphi)
    upper = eta_inv - np.outer(up, up) / g
    return MembraneMetric(jet.chart, Q, g, lower, upper, eta, up)


@dataclass(frozen=True)
class CausalVerdict:
    value: float
    kind: str
    tol: float


def causal_class(X, metric, tol=CAUSAL_TOL):
    value = metric.dot(X, X)
    if value < -tol:
        kind = "timelike"
    elif abs(value) <= tol:
        kind = "null"
    else:
        kind = "spacelike"
    return CausalVerdict(value, kind, tol)


@dataclass(frozen=True)
class FrameBundle:
    """Adapted frame at one event, in Cartesian components."""

    metric: MembraneMetric
    omega: np.ndarray
    radius: float
    L: np.ndarray
    Lb: np.ndarray
    angular: np.ndarray
    Lt: np.ndarray
    Lbt: np.ndarray
    grad_u: np.ndarray
    grad_ub: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    eA: np.ndarray
    Lphi: float
    Lbphi: float
    slash_phi: np.ndarray
    tol: float = CAUSAL_TOL
    verdicts: dict = field(default_factory=dict)

    @property
    def g34(self):
        return 1.0 / self.metric.dot(self.e3, self.e4)

    def vectors(self):
        named = {
            "L": self.L,
            "Lb": self.Lb,
            "Lt": self.Lt,
            "Lbt": self.Lbt,
            "grad_u": self.grad_u,
            "grad_ub": self.grad_ub,
            "e3": self.e3,
            "e4": self.e4,
        }
        for A, (ebar, e) in enumerate(zip(self.angular, self.eA), start=1):
            named[f"ebar{A}"] = ebar
            named[f"e{A}"] = e
        return named


def _null_pair(dphi, x, metric):
    omega, r = unit_direction(x[1:])
    L = np.concatenate([[1.0], omega])
    Lb = np.concatenate([[1.0], -omega])
    grad_u = metric.raise_index(0.5 * Lb)
    grad_ub = metric.raise_index(0.5 * L)
    sg = metric.sqrt_g
    e3 = -grad_u + L / (2 * sg)
    e4 = -grad_ub + Lb / (2 * sg)
    return omega, r, L, Lb, grad_u, grad_ub, e3, e4


def frame_bundle(jet, tol=CAUSAL_TOL):
    cart = as_cartesian(jet).require(1)
    metric = metric_from_jet(cart)
    dphi = cart.d1
    omega, r, L, Lb, grad_u, grad_ub, e3, e4 = _null_pair(dphi, cart.coords, metric)
    n = cart.n
    angular = np.hstack([np.zeros((n - 1, 1)), angular_basis(omega)]) if n > 1 else np.zeros((0, n + 1))
    Lphi, Lbphi = float(L @ dphi), float(Lb @ dphi)
    slash_phi = angular @ dphi
    Lt = L + Lphi**2 * Lb
    Lbt = Lb + Lbphi**2 * L

    sg = metric.sqrt_g
    if abs(sg + 1) < tol:
        raise FrameSolveFailedError(f"|sqrt(g) + 1| = {abs(sg + 1):.3e}")
    c = 2 * (sg + 1)
    det = 1 - 2 * Lphi * Lbphi / c
    if abs(det) < tol:
        raise FrameSolveFailedError(f"angular correction system is singular ({det:.3e})")
    eA = []
    for ebar in angular:
        s = float(ebar @ dphi) / det
        v = ebar + (Lphi * s / c) * Lb + (Lbphi * s / c) * L
        for w in eA:
            v = v - metric.dot(v, w) * w
        norm2 = metric.dot(v, v)
        if norm2 <= tol:
            raise FrameSolveFailedError(f"angular frame vector has g-length {norm2:.3e}")
        eA.append(v / np.sqrt(norm2))
    eA = np.array(eA).reshape(len(eA), n + 1)

    bundle = FrameBundle(
        metric, omega, r, L, Lb, angular, Lt, Lbt, grad_u, grad_ub, e3, e4, eA,
        Lphi, Lbphi, slash_phi, tol,
    )
    bundle.verdicts.update(
        {name: causal_class(X, metric, tol) for name, X in bundle.vectors().items()}
    )
    if metric.dot(e3, e4) >= 0:
        logging.warning("g(e3, e4) = %.3e is not negative", metric.dot(e3, e4))
    return bundle


def modified_null_norm(Lphi, Lbphi):
    """Closed form of g(Lt, Lt) in terms of L phi and Lb phi."""
    return -3 * Lphi**2 + (2 * Lphi * Lbphi + Lphi**2 * Lbphi**2) * Lphi**2


def christoffels(jet):
    """Gamma[c, a, b] = Gamma^c_{ab} of the induced metric, Cartesian components."""
    cart = as_cartesian(jet).require(2)
    metric = metric_from_jet(cart)
    d1, d2 = cart.d1, cart.d2
    # dg[a, d, b] = d_a g_{db}
    dg = np.einsum("ad,b->adb", d2, d1) + np.einsum("d,ab->adb", d1, d2)
    lowered = dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg
    return 0.5 * np.einsum("cd,dab->cab", metric.upper, lowered)


def covariant_hessian(phijet, psijet):
    """D_a D_b psi for the metric induced by phi."""
    psi = as_cartesian(psijet).require(2)
    gamma = christoffels(phijet)
    return psi.d2 - np.einsum("cab,c->ab", gamma, psi.d1)


def wave_operator_coord(phijet, psijet):
    metric = metric_from_jet(as_cartesian(phijet))
    return float(np.einsum("ab,ab->", metric.upper, covariant_hessian(phijet, psijet)))


def wave_operator_frame(phijet, psijet):
    bundle = frame_bundle(phijet)
    hess = covariant_hessian(phijet, psijet)
    value = 2 * bundle.g34 * (bundle.e3 @ hess @ bundle.e4)
    for e in bundle.eA:
        value += e @ hess @ e
    return float(value)


def _scaled_e4(x, dphi):
    metric = metric_from_jet(SpacetimeJet("cartesian", x.size - 1, x, 0.0, dphi))
    *_, e3, e4 = _null_pair(dphi, x, metric)
    return 2 * e4 / metric.dot(e3, e4)


def wave_operator_remainder(phijet, psijet, eps=1e-5):
    """Frame wave operator minus its principal part.

    The principal part is e3(2 g^34 e4 psi) + (n-1)/(2r) (L psi - Lb psi) plus
    the sphere Laplacian of psi. The derivative of 2 g^34 e4 along e3 is taken
    by a central difference of the frame along the Taylor-extended jet of phi.
    Returns (remainder, weight) with weight = |dphi| |d2phi| (|dpsi| + |d2psi|).
    """
    phi = as_cartesian(phijet).require(2)
    psi = as_cartesian(psijet).require(2)
    bundle = frame_bundle(phi)
    x, e3 = phi.coords, bundle.e3
    forward = _scaled_e4(x + eps * e3, phi.d1 + eps * phi.d2 @ e3)
    backward = _scaled_e4(x - eps * e3, phi.d1 - eps * phi.d2 @ e3)
    de4 = (forward - backward) / (2 * eps)
    principal_34 = 2 * bundle.g34 * (e3 @ psi.d2 @ bundle.e4) + de4 @ psi.d1

    n, r = phi.n, bundle.radius
    omega = bundle.omega
    dr_psi = omega @ psi.d1[1:]
    slash_laplacian = sum(e[1:] @ psi.d2[1:, 1:] @ e[1:] for e in bundle.angular) - (n - 1) / r * dr_psi
    principal = principal_34 + (n - 1) / r * dr_psi + slash_laplacian
    remainder = wave_operator_frame(phi, psi) - principal
    weight = (
        np.linalg.norm(phi.d1)
        * np.linalg.norm(phi.d2)
        * (np.linalg.norm(psi.d1) + np.linalg.norm(psi.d2))
    )
    return float(remainder), float(weight)


def rescaled_metric(jet, delta=None):
    """Metric of a rescaled-chart jet; delta defaults to the jet's own."""
    delta = jet.delta if delta is None else delta
    if jet.chart != "rescaled":
        raise InvalidInputError(f"Expected a rescaled jet, got {jet.chart}")
    if not 0 < delta <= 0.5:
        raise InvalidInputError(f"delta must lie in (0, 0.5], got {delta}")
    return metric_from_jet(jet, minkowski("rescaled", jet.n, delta))


def rescaled_metric_from_table(metric, delta):
    """Rescale a null-chart metric by the u' = u / delta component table."""
    if metric.chart != "null":
        raise InvalidInputError(f"Expected a null-chart metric, got {metric.chart}")
    s = np.ones(metric.lower.shape[0])
    s[0] = 1.0 / delta
    upper = np.outer(s, s) * metric.upper
    lower = metric.lower / np.outer(s, s)
    eta = metric.eta / np.outer(s, s)
    return MembraneMetric("rescaled", metric.Q, metric.g, lower, upper, eta, s * metric.grad_up)


def transform_inverse_metric(upper, jacobian):
    """g'^{ab} = J^a_c J^b_d g^{cd} with J rows the new coordinate differentials."""
    return jacobian @ upper @ jacobian.T


def tprime_component(metric):
    """g'_{t't'} of a rescaled metric, with d_t' = (d_u' + d_ub') / 2."""
    e = np.zeros(metric.lower.shape[0])
    e[:2] = 0.5
    return metric.dot(e, e)


@dataclass(frozen=True)
class VectorField:
    """Vector field with the derivatives of its Cartesian coefficients.

    `jacobian(x)[a, c]` is d_a X^c and `hessian(x)[a, b, c]` is d_a d_b X^c;
    a missing hessian limits `apply` to first-order output.
    """

    name: str
    coefficients: Callable
    jacobian: Callable
    hessian: Callable | None = None

    def __call__(self, jet):
        return self.apply(jet)

    def apply(self, jet):
        """Jet of X(psi), one order lower than `jet`."""
        psi = as_cartesian(jet).require(1)
        x = psi.coords
        X, DX = self.coefficients(x), self.jacobian(x)
        value = X @ psi.d1
        d1 = d2 = None
        if psi.order >= 2:
            d1 = DX @ psi.d1 + psi.d2 @ X
        if psi.order >= 3 and self.hessian is not None:
            HX = self.hessian(x)
            d2 = (
                HX @ psi.d1
                + DX @ psi.d2
                + (DX @ psi.d2).T
                + np.einsum("abc,c->ab", psi.d3, X)
            )
        return SpacetimeJet("cartesian", psi.n, x, value, d1, d2)


def linear_field(name, matrix, constant=None):
    """X(x) = matrix @ x + constant."""
    matrix = np.asarray(matrix, dtype=float)
    dim = matrix.shape[0]
    constant = np.zeros(dim) if constant is None else np.asarray(constant, dtype=float)
    return VectorField(
        name,
        lambda x: matrix @ x + constant,
        lambda x: matrix.T.copy(),
        lambda x: np.zeros((dim, dim, dim)),
    )


def klainerman_field(name, n, i=None, j=None):
    """Coordinate, boost, rotation and scaling fields, plus L and Lb.

    Names: "dt", "dx" (with i), "Omega0i" (with i), "Omegaij" (with i, j),
    "S", "L", "Lb". Spatial indices are 1-based like the coordinates.
    """
    dim = n + 1
    M = np.zeros((dim, dim))
    c = np.zeros(dim)
    if name == "dt":
        c[0] = 1.0
    elif name == "dx":
        c[i] = 1.0
    elif name == "Omega0i":
        M[0, i] = 1.0
        M[i, 0] = 1.0
    elif name == "Omegaij":
        M[j, i] = 1.0
        M[i, j] = -1.0
    elif name == "S":
        M = np.eye(dim)
    elif name in ("L", "Lb"):
        return null_generator(n, sign=1.0 if name == "L" else -1.0)
    else:
        raise InvalidInputError(f"Unknown vector field: {name}")
    return linear_field(name, M, c)


def null_generator(n, sign=1.0):
    """L (sign +1) or Lb (sign -1) as a vector field."""
    dim = n + 1

    def coefficients(x):
        omega, _ = unit_direction(x[1:])
        return np.concatenate([[1.0], sign * omega])

    def jacobian(x):
        omega, r = unit_direction(x[1:])
        _, r2, _ = radial_derivatives(omega, r)
        D = np.zeros((dim, dim))
        D[1:, 1:] = sign * r2
        return D

    def hessian(x):
        omega, r = unit_direction(x[1:])
        _, _, r3 = radial_derivatives(omega, r)
        H = np.zeros((dim, dim, dim))
        H[1:, 1:, 1:] = sign * r3
        return H

    return VectorField("L" if sign > 0 else "Lb", coefficients, jacobian, hessian)


def projected_derivative(j, n):
    """The tangential derivative d_j - omega_j d_r (0-based spatial index j)."""
    dim = n + 1

    def coefficients(x):
        omega, _ = unit_direction(x[1:])
        X = np.zeros(dim)
        X[1:] = np.eye(n)[j] - omega[j] * omega
        return X

    def jacobian(x):
        omega, r = unit_direction(x[1:])
        P = np.eye(n) - np.outer(omega, omega)
        D = np.zeros((dim, dim))
        D[1:, 1:] = -(np.outer(P[:, j], omega) + omega[j] * P) / r
        return D

    return VectorField(f"bar{j + 1}", coefficients, jacobian)
