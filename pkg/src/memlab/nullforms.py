"""Null forms, the frame-signature calculus and the null-frame decompositions."""

from dataclasses import dataclass

import numpy as np

from memlab.geometry import (
    ORIGIN_RADIUS,
    as_cartesian,
    klainerman_field,
    metric_from_jet,
    minkowski,
    projected_derivative,
    unit_direction,
)
from memlab.utils import InvalidInputError, OriginSingularError

FRAME_SIGNATURE = {"L": 1, "Lb": -1, "ang": 0}
ADMISSIBLE = "null-admissible"
FORBIDDEN = "forbidden"


@dataclass(frozen=True)
class NullFormId:
    kind: str
    alpha: int | None = None
    beta: int | None = None

    def __post_init__(self):
        if self.kind not in ("Q0", "Qab"):
            raise InvalidInputError(f"Unknown null form: {self.kind}")
        if self.kind == "Qab" and not (
            self.alpha is not None and self.beta is not None and 0 <= self.alpha < self.beta
        ):
            raise InvalidInputError(f"Q_ab needs 0 <= alpha < beta, got {self.alpha}, {self.beta}")


Q0 = NullFormId("Q0")


def eval_nullform(form, dphi, dpsi):
    dphi, dpsi = np.asarray(dphi, dtype=float), np.asarray(dpsi, dtype=float)
    if form.kind == "Q0":
        eta_inv = np.linalg.inv(minkowski("cartesian", dphi.size - 1))
        return float(dphi @ eta_inv @ dpsi)
    a, b = form.alpha, form.beta
    return float(dphi[a] * dpsi[b] - dphi[b] * dpsi[a])


def rme_nonlinearity(jet):
    """d^a phi d^b phi d_a d_b phi / g, the cubic part of the box operator."""
    cart = as_cartesian(jet).require(2)
    metric = metric_from_jet(cart)
    up = metric.grad_up
    return float(up @ cart.d2 @ up / metric.g)


def flat_wave(jet):
    cart = as_cartesian(jet).require(2)
    eta_inv = np.linalg.inv(minkowski("cartesian", cart.n))
    return float(np.einsum("ab,ab->", eta_inv, cart.d2))


@dataclass(frozen=True)
class FrameDerivatives:
    """Null-frame derivatives of one field at one event, first and second order."""

    L: float
    Lb: float
    bar: np.ndarray
    dr: float
    LL: float | None = None
    LLb: float | None = None
    LbLb: float | None = None
    barL: np.ndarray | None = None
    barLb: np.ndarray | None = None
    barbar: np.ndarray | None = None


def frame_derivatives(jet):
    psi = as_cartesian(jet).require(1)
    n = psi.n
    L, Lb = klainerman_field("L", n), klainerman_field("Lb", n)
    bars = [projected_derivative(j, n) for j in range(n)]
    omega, _ = unit_direction(psi.coords[1:])
    first = dict(
        L=L(psi).value,
        Lb=Lb(psi).value,
        bar=np.array([bar(psi).value for bar in bars]),
        dr=float(omega @ psi.d1[1:]),
    )
    if psi.order < 2:
        return FrameDerivatives(**first)
    Lpsi, Lbpsi = L(psi), Lb(psi)
    return FrameDerivatives(
        **first,
        LL=L(Lpsi).value,
        LLb=L(Lbpsi).value,
        LbLb=Lb(Lbpsi).value,
        barL=np.array([bar(Lpsi).value for bar in bars]),
        barLb=np.array([bar(Lbpsi).value for bar in bars]),
        barbar=np.array([[bi(bj(psi)).value for bj in bars] for bi in bars]),
    )


@dataclass(frozen=True)
class FrameCoefficients:
    K_LL: float
    K_LLb: float
    K_LbLb: float
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


def frame_coefficients(k, x):
    """Null-frame components of a symmetric contravariant tensor k at x."""
    k = np.asarray(k, dtype=float)
    omega, _ = unit_direction(np.asarray(x, dtype=float)[1:])
    n = omega.size
    L_flat = np.concatenate([[-1.0], omega])
    Lb_flat = np.concatenate([[-1.0], -omega])
    Pi = np.zeros((n + 1, n))
    Pi[1:] = np.eye(n) - np.outer(omega, omega)
    return FrameCoefficients(
        float(L_flat @ k @ L_flat),
        float(L_flat @ k @ Lb_flat),
        float(Lb_flat @ k @ Lb_flat),
        Lb_flat @ k @ Pi,
        L_flat @ k @ Pi,
        Pi.T @ k @ Pi,
    )


def _check_radius(x):
    r = np.linalg.norm(np.asarray(x)[1:])
    if r < ORIGIN_RADIUS:
        raise OriginSingularError(f"radius {r:.3e} is below {ORIGIN_RADIUS}")
    return r


def _frame_pieces(k, psijet):
    psi = as_cartesian(psijet).require(2)
    r = _check_radius(psi.coords)
    K = frame_coefficients(k, psi.coords)
    D = frame_derivatives(psi)
    good = (
        K.K_LbLb * D.LL / 4
        + K.K_LLb * D.LLb / 2
        + K.K_LL * D.LbLb / 4
        - K.a @ D.barL
        - K.b @ D.barLb
        + np.einsum("ij,ij->", K.c, D.barbar)
    )
    weighted = ((K.a - K.b) @ D.bar + np.trace(K.c) * D.dr) / r
    return psi, good, weighted


def symmetric_decompose(k, psijet):
    """|k^{ab} d_a d_b psi - null-frame reconstruction|."""
    psi, good, weighted = _frame_pieces(k, psijet)
    k = np.asarray(k, dtype=float)
    return float(abs(np.einsum("ab,ab->", k, psi.d2) - (good + weighted)))


def bilinear_tensor(dphi, dpsi):
    """S^{ab}(phi, psi) = (d^a phi d^b psi + d^a psi d^b phi) / 2."""
    eta_inv = np.linalg.inv(minkowski("cartesian", np.asarray(dphi).size - 1))
    up_phi, up_psi = eta_inv @ dphi, eta_inv @ dpsi
    return 0.5 * (np.outer(up_phi, up_psi) + np.outer(up_psi, up_phi))


@dataclass(frozen=True)
class DoubleNullExpansion:
    value: float
    j11: float
    j12: float
    residual: float


def double_nullform_expand(phijet, psijet, chijet):
    phi = as_cartesian(phijet).require(1)
    psi = as_cartesian(psijet).require(1)
    chi = as_cartesian(chijet).require(2)
    S = bilinear_tensor(phi.d1, psi.d1)
    value = float(np.einsum("ab,ab->", S, chi.d2))
    _, j11, j12 = _frame_pieces(S, chi)
    return DoubleNullExpansion(value, float(j11), float(j12), float(abs(value - j11 - j12)))


@dataclass(frozen=True)
class FrameFactor:
    """Frame derivatives applied to a named field, read left to right."""

    ops: tuple
    field: str


@dataclass(frozen=True)
class FrameMonomial:
    factors: tuple
    weight: str = ""

    def __str__(self):
        text = " ".join("".join(f.ops) + f.field for f in self.factors)
        return f"{self.weight}{text}" if self.weight else text


def monomial(*factors, weight=""):
    """monomial(("L", "phi"), ("Lb", "ang", "chi")) style constructor."""
    return FrameMonomial(tuple(FrameFactor(tuple(f[:-1]), f[-1]) for f in factors), weight)


def expand_radial(m):
    """Replace every d_r by (L - Lb) / 2; returns the resulting monomials."""
    expanded = [m]
    while any("dr" in f.ops for x in expanded for f in x.factors):
        nxt = []
        for x in expanded:
            for i, f in enumerate(x.factors):
                if "dr" in f.ops:
                    k = f.ops.index("dr")
                    for op in ("L", "Lb"):
                        ops = f.ops[:k] + (op,) + f.ops[k + 1 :]
                        factors = x.factors[:i] + (FrameFactor(ops, f.field),) + x.factors[i + 1 :]
                        nxt.append(FrameMonomial(factors, x.weight))
                    break
            else:
                nxt.append(x)
        expanded = nxt
    return expanded


def signature_of(m):
    total = 0
    for f in m.factors:
        for op in f.ops:
            if op not in FRAME_SIGNATURE:
                raise InvalidInputError(f"{op} has no signature; expand d_r first")
            total += FRAME_SIGNATURE[op]
    return total


def classify(m):
    return ADMISSIBLE if -2 < signature_of(m) < 2 else FORBIDDEN


def double_nullform_monomials():
    """Monomials of the null-frame expansion of S(phi, psi) d d chi."""
    J11 = [
        monomial(("Lb", "phi"), ("Lb", "psi"), ("L", "L", "chi")),
        monomial(("L", "phi"), ("Lb", "psi"), ("L", "Lb", "chi")),
        monomial(("Lb", "phi"), ("L", "psi"), ("L", "Lb", "chi")),
        monomial(("L", "phi"), ("L", "psi"), ("Lb", "Lb", "chi")),
        monomial(("Lb", "phi"), ("ang", "psi"), ("ang", "L", "chi")),
        monomial(("ang", "phi"), ("Lb", "psi"), ("ang", "L", "chi")),
        monomial(("L", "phi"), ("ang", "psi"), ("ang", "Lb", "chi")),
        monomial(("ang", "phi"), ("L", "psi"), ("ang", "Lb", "chi")),
        monomial(("ang", "phi"), ("ang", "psi"), ("ang", "ang", "chi")),
    ]
    J12 = [
        monomial(("Lb", "phi"), ("ang", "psi"), ("ang", "chi"), weight="1/r "),
        monomial(("ang", "phi"), ("Lb", "psi"), ("ang", "chi"), weight="1/r "),
        monomial(("L", "phi"), ("ang", "psi"), ("ang", "chi"), weight="1/r "),
        monomial(("ang", "phi"), ("L", "psi"), ("ang", "chi"), weight="1/r "),
        monomial(("ang", "phi"), ("ang", "psi"), ("dr", "chi"), weight="1/r "),
    ]
    return {"J11": J11, "J12": [x for m in J12 for x in expand_radial(m)]}


@dataclass(frozen=True)
class CommutatorCheck:
    field: str
    form: NullFormId
    lhs: float
    expected: float
    residual: float


def _nullform_gradient(form, phi, psi):
    """Gradient of form(phi, psi) from order-2 jets."""
    if form.kind == "Q0":
        eta_inv = np.linalg.inv(minkowski("cartesian", phi.n))
        return phi.d2 @ eta_inv @ psi.d1 + psi.d2 @ eta_inv @ phi.d1
    a, b = form.alpha, form.beta
    return phi.d2[:, a] * psi.d1[b] + phi.d1[a] * psi.d2[:, b] - phi.d2[:, b] * psi.d1[a] - phi.d1[b] * psi.d2[:, a]


def _expected_commutator(Z, form, phi, psi, x):
    """Closed-form value of Z Q(phi, psi) - Q(Z phi, psi) - Q(phi, Z psi)."""
    name = Z.name
    if form.kind == "Q0":
        q = eval_nullform(form, phi.d1, psi.d1)
        if name == "S":
            return -2 * q
        if name in ("L", "Lb"):
            omega, r = unit_direction(x[1:])
            P = np.eye(omega.size) - np.outer(omega, omega)
            slash = (P @ phi.d1[1:]) @ (P @ psi.d1[1:])
            return (-2 if name == "L" else 2) * slash / r
        return 0.0
    DX = Z.jacobian(x)
    Qm = np.outer(phi.d1, psi.d1) - np.outer(psi.d1, phi.d1)
    a, b = form.alpha, form.beta
    return float(-(DX[a] @ Qm[:, b] + DX[b] @ Qm[a, :]))


def commutator_check(Z, form, phi_field, psi_field, x, h=None):
    """Residual of the commutator identity of Z with a null form at x.

    `Z` is a geometry.VectorField; fields expose `jet(x)`. With `h` the
    derivative of Q along Z is a fourth-order central difference with step h
    instead of the exact contraction.
    """
    x = np.asarray(x, dtype=float)
    phi, psi = phi_field.jet(x), psi_field.jet(x)
    X = Z.coefficients(x)
    if h is None:
        ZQ = float(X @ _nullform_gradient(form, phi, psi))
    else:

        def q(s):
            y = x + s * X
            return eval_nullform(form, phi_field.jet(y).d1, psi_field.jet(y).d1)

        ZQ = (8 * (q(h) - q(-h)) - (q(2 * h) - q(-2 * h))) / (12 * h)
    Zphi, Zpsi = Z(phi), Z(psi)
    lhs = ZQ - eval_nullform(form, Zphi.d1, psi.d1) - eval_nullform(form, phi.d1, Zpsi.d1)
    expected = _expected_commutator(Z, form, phi, psi, x)
    return CommutatorCheck(Z.name, form, float(lhs), float(expected), float(abs(lhs - expected)))


def wave_commutator_check(Z, psi_field, x):
    """Residual of [box, L] = (n-1)/(2r^2)(L - Lb) + (2/r) sphere-Laplacian, and its Lb mirror.

    Needs third-order jets; returns (lhs, expected, residual).
    """
    x = np.asarray(x, dtype=float)
    psi = as_cartesian(psi_field.jet(x)).require(3)
    if Z.name not in ("L", "Lb"):
        raise InvalidInputError(f"wave commutator is tabulated for L and Lb, got {Z.name}")
    box_Z = flat_wave(Z(psi))
    Z_box = Z.coefficients(x) @ _flat_wave_gradient(psi)
    lhs = box_Z - Z_box
    omega, r = unit_direction(x[1:])
    n = psi.n
    P = np.eye(n) - np.outer(omega, omega)
    dr = omega @ psi.d1[1:]
    slash_laplacian = np.einsum("ij,ij->", P, psi.d2[1:, 1:]) - (n - 1) / r * dr
    expected = (n - 1) / r**2 * dr + 2 / r * slash_laplacian
    if Z.name == "Lb":
        expected = -expected
    return float(lhs), float(expected), float(abs(lhs - expected))


def _flat_wave_gradient(psi):
    eta_inv = np.linalg.inv(minkowski("cartesian", psi.n))
    return np.einsum("bc,abc->a", eta_inv, psi.d3)
