"""Closed-form test fields with exact derivatives up to third order."""

from dataclasses import dataclass

import numpy as np

from memlab.geometry import SpacetimeJet, angular_basis, radial_to_cartesian, unit_direction


@dataclass(frozen=True)
class PolynomialField:
    """c + b.x + x.A.x / 2 + T[x, x, x] / 6 in Cartesian coordinates (t, x^1..x^n)."""

    c: float
    b: np.ndarray
    A: np.ndarray
    T: np.ndarray

    @property
    def n(self):
        return self.b.size - 1

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        Tx = np.einsum("abc,c->ab", self.T, x)
        value = self.c + self.b @ x + x @ self.A @ x / 2 + x @ Tx @ x / 6
        d1 = self.b + self.A @ x + Tx @ x / 2
        d2 = self.A + Tx
        return SpacetimeJet("cartesian", self.n, x, value, d1, d2, self.T)


def random_polynomial(rng, n, scale=0.3):
    dim = n + 1
    A = rng.uniform(-scale, scale, (dim, dim))
    T = rng.uniform(-scale, scale, (dim, dim, dim))
    return PolynomialField(
        float(rng.uniform(-scale, scale)),
        rng.uniform(-scale, scale, dim),
        (A + A.T) / 2,
        sum(np.transpose(T, p) for p in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))) / 6,
    )


def _exp_quadratic(amplitude, center, M, y):
    """Derivatives of a * exp(-(y - c).M.(y - c) / 2)."""
    v = -M @ (y - center)
    f = amplitude * np.exp(0.5 * (y - center) @ v)
    d1 = f * v
    d2 = f * (np.outer(v, v) - M)
    d3 = f * (
        np.einsum("a,b,c->abc", v, v, v)
        - np.einsum("ab,c->abc", M, v)
        - np.einsum("ac,b->abc", M, v)
        - np.einsum("bc,a->abc", M, v)
    )
    return f, d1, d2, d3


@dataclass(frozen=True)
class GaussianField:
    amplitude: float
    center: np.ndarray
    M: np.ndarray

    @property
    def n(self):
        return self.center.size - 1

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        return SpacetimeJet("cartesian", self.n, x, *_exp_quadratic(self.amplitude, self.center, self.M, x))


def random_gaussian(rng, n, amplitude=0.3):
    dim = n + 1
    B = rng.uniform(-0.5, 0.5, (dim, dim))
    return GaussianField(amplitude, rng.uniform(-0.5, 0.5, dim), B @ B.T + 0.5 * np.eye(dim))


@dataclass(frozen=True)
class NullWaveField:
    """a * exp(-(xi - xi0)^2 / w^2) with xi = t - k.x and |k| = 1.

    Every such field solves the membrane equation exactly.
    """

    amplitude: float
    direction: np.ndarray
    xi0: float = 0.0
    width: float = 1.0

    @property
    def n(self):
        return self.direction.size

    @property
    def covector(self):
        return np.concatenate([[1.0], -self.direction])

    def profile(self, xi, order=3):
        s = (xi - self.xi0) / self.width
        f = self.amplitude * np.exp(-(s**2))
        w = self.width
        derivs = [f, -2 * s * f / w, (4 * s**2 - 2) * f / w**2, (12 * s - 8 * s**3) * f / w**3]
        return derivs[: order + 1]

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        k = self.covector
        h0, h1, h2, h3 = self.profile(x[0] - self.direction @ x[1:])
        return SpacetimeJet(
            "cartesian",
            self.n,
            x,
            h0,
            h1 * k,
            h2 * np.outer(k, k),
            h3 * np.einsum("a,b,c->abc", k, k, k),
        )


def planar_null_wave(amplitude=0.3, xi0=0.0, width=1.0):
    return NullWaveField(amplitude, np.array([1.0]), xi0, width)


@dataclass(frozen=True)
class RadialField:
    """Gaussian in (t, r), pushed forward to Cartesian components at any x."""

    amplitude: float
    center: np.ndarray
    M: np.ndarray
    n: int = 3

    def radial_jet(self, t, r):
        y = np.array([t, r], dtype=float)
        return SpacetimeJet("radial", self.n, y, *_exp_quadratic(self.amplitude, self.center, self.M, y))

    def jet(self, x):
        x = np.asarray(x, dtype=float)
        omega, r = unit_direction(x[1:])
        return radial_to_cartesian(self.radial_jet(x[0], r), omega)


def random_radial(rng, n, amplitude=0.3):
    B = rng.uniform(-0.5, 0.5, (2, 2))
    center = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5)])
    return RadialField(amplitude, center, B @ B.T + 0.5 * np.eye(2), n)


def random_event(rng, n, r_min=0.5, r_max=1.5):
    """Event with t in [-1, 1] and radius in [r_min, r_max]."""
    direction = rng.normal(size=n)
    direction /= np.linalg.norm(direction)
    return np.concatenate([[rng.uniform(-1, 1)], rng.uniform(r_min, r_max) * direction])


def random_gradient_jet(rng, n, bound=0.5, g_min=0.1):
    """First-order jet with |dphi| <= bound and 1 + Q > g_min."""
    while True:
        d1 = rng.uniform(-bound, bound, n + 1)
        if np.linalg.norm(d1) > bound:
            continue
        if 1 - d1[0] ** 2 + d1[1:] @ d1[1:] > g_min:
            return SpacetimeJet("cartesian", n, random_event(rng, n), 0.0, d1)


def frame_regime_jet(rng, n, x=None, small=0.05, lb_range=(0.5, 1.5)):
    """First-order jet with |L phi|, |slash phi| <= small and Lb phi in lb_range."""
    x = random_event(rng, n) if x is None else np.asarray(x, dtype=float)
    omega, _ = unit_direction(x[1:])
    Lphi = rng.uniform(-small, small)
    Lbphi = rng.uniform(*lb_range)
    slash = rng.uniform(-small, small, n - 1) / max(1.0, np.sqrt(n - 1))
    dt = (Lphi + Lbphi) / 2
    dr = (Lphi - Lbphi) / 2
    spatial = dr * omega + slash @ angular_basis(omega)
    return SpacetimeJet("cartesian", n, x, 0.0, np.concatenate([[dt], spatial]))
