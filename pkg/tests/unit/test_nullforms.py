import numpy as np
import pytest

from memlab import InvalidInputError, OriginSingularError
from memlab.analytic import (
    NullWaveField,
    random_event,
    random_gaussian,
    random_polynomial,
    random_radial,
)
from memlab.geometry import (
    SpacetimeJet,
    klainerman_field,
    metric_from_jet,
    minkowski,
)
from memlab.nullforms import (
    ADMISSIBLE,
    FORBIDDEN,
    Q0,
    NullFormId,
    bilinear_tensor,
    classify,
    commutator_check,
    double_nullform_expand,
    double_nullform_monomials,
    eval_nullform,
    expand_radial,
    flat_wave,
    frame_derivatives,
    monomial,
    rme_nonlinearity,
    signature_of,
    symmetric_decompose,
    wave_commutator_check,
)


def test_q0_examples():
    assert eval_nullform(Q0, [1.0, 0, 0], [1.0, 0, 0]) == -1
    assert eval_nullform(NullFormId("Qab", 0, 1), [1.0, 0], [0.0, 1.0]) == 1


def test_q0_vanishes_on_null_gradients():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        for _ in range(2000):
            k = rng.normal(size=n)
            xi = rng.uniform(0.1, 3) * np.concatenate([[1.0], k / np.linalg.norm(k)])
            assert abs(eval_nullform(Q0, xi, xi)) <= 1e-12 * (xi @ xi)


def test_qab_needs_ordered_indices():
    with pytest.raises(InvalidInputError):
        NullFormId("Qab", 1, 1)
    with pytest.raises(InvalidInputError):
        NullFormId("Q7")


def test_rme_nonlinearity_identity():
    rng = np.random.default_rng(1)
    for n in (1, 2, 3):
        for _ in range(200):
            jet = random_gaussian(rng, n).jet(random_event(rng, n) if n > 1 else rng.uniform(-1, 1, 2))
            metric = metric_from_jet(jet)
            reduced = np.einsum("ab,ab->", metric.upper, jet.d2)
            assert flat_wave(jet) - rme_nonlinearity(jet) == pytest.approx(reduced, abs=1e-12)


def test_rme_nonlinearity_vanishes_on_null_and_flat_jets():
    wave = NullWaveField(0.4, np.array([0.6, 0.8]))
    assert abs(rme_nonlinearity(wave.jet(np.array([0.5, 0.2, 0.1])))) < 1e-15
    flat = SpacetimeJet("cartesian", 2, [0.0, 1.0, 0.0], 0.0, np.zeros(3), np.eye(3))
    assert rme_nonlinearity(flat) == 0


def test_vector_field_applies_to_jets():
    rng = np.random.default_rng(4)
    field = random_polynomial(rng, 2)
    x = random_event(rng, 2)
    S = klainerman_field("S", 2)
    jet = field.jet(x)
    assert S(jet).value == pytest.approx(x @ jet.d1)
    # d_a (x^c d_c psi) = d_a psi + x^c d_a d_c psi
    np.testing.assert_allclose(S(jet).d1, jet.d1 + jet.d2 @ x)


def test_symmetric_decompose_minkowski():
    rng = np.random.default_rng(2)
    for n in (2, 3):
        eta_inv = np.linalg.inv(minkowski("cartesian", n))
        for _ in range(100):
            psi = random_gaussian(rng, n).jet(random_event(rng, n))
            assert symmetric_decompose(eta_inv, psi) <= 1e-10


def test_symmetric_decompose_random_tensors():
    rng = np.random.default_rng(3)
    for n in (2, 3):
        for _ in range(100):
            x = random_event(rng, n)
            phi, psi = random_gaussian(rng, n).jet(x), random_polynomial(rng, n).jet(x)
            k = bilinear_tensor(phi.d1, psi.d1)
            assert symmetric_decompose(k, psi) <= 1e-10
            B = rng.normal(size=(n + 1, n + 1))
            assert symmetric_decompose(B + B.T, psi) <= 1e-10


def test_radial_fields_have_no_tangential_derivatives():
    rng = np.random.default_rng(5)
    field = random_radial(rng, 3)
    D = frame_derivatives(field.jet(random_event(rng, 3)))
    np.testing.assert_allclose(D.bar, 0, atol=1e-14)
    np.testing.assert_allclose(D.barbar, 0, atol=1e-13)


def test_decompose_at_origin_raises():
    jet = SpacetimeJet("cartesian", 2, [0.0, 0.0, 0.0], 0.0, np.zeros(3), np.zeros((3, 3)))
    with pytest.raises(OriginSingularError):
        symmetric_decompose(np.eye(3), jet)


def test_double_nullform_expansion():
    rng = np.random.default_rng(6)
    for n in (2, 3):
        for _ in range(100):
            x = random_event(rng, n)
            jets = [random_gaussian(rng, n).jet(x) for _ in range(3)]
            expansion = double_nullform_expand(*jets)
            assert expansion.residual <= 1e-10


def test_double_nullform_of_null_and_radial_fields():
    wave = NullWaveField(0.3, np.array([1.0, 0.0]))
    x = np.array([0.4, 1.0, 0.5])
    jet = wave.jet(x)
    assert abs(double_nullform_expand(jet, jet, jet).value) < 1e-15

    rng = np.random.default_rng(8)
    x = random_event(rng, 3)
    jets = [random_radial(rng, 3).jet(x) for _ in range(3)]
    expansion = double_nullform_expand(*jets)
    assert abs(expansion.j12) < 1e-12
    assert expansion.residual <= 1e-10


def test_signature_examples():
    assert signature_of(monomial(("L", "phi"), ("Lb", "psi"))) == 0
    assert classify(monomial(("L", "phi"), ("Lb", "psi"))) == ADMISSIBLE
    assert signature_of(monomial(("Lb", "phi"), ("Lb", "psi"))) == -2
    assert classify(monomial(("Lb", "phi"), ("Lb", "psi"))) == FORBIDDEN
    assert classify(monomial(("ang", "phi"), ("ang", "psi"))) == ADMISSIBLE


def test_signature_needs_expanded_radial_derivatives():
    m = monomial(("ang", "phi"), ("dr", "dr", "chi"))
    with pytest.raises(InvalidInputError):
        signature_of(m)
    assert sorted(signature_of(x) for x in expand_radial(m)) == [-2, 0, 0, 2]


def test_double_nullform_monomials_are_admissible():
    monomials = double_nullform_monomials()
    assert monomials["J11"] and monomials["J12"]
    for group in monomials.values():
        for m in group:
            assert classify(m) == ADMISSIBLE, str(m)


def test_forbidden_quadratic_monomials():
    for ops in (("Lb",), ("Lb", "ang"), ("ang", "Lb")):
        m = monomial(("Lb", "phi"), (*ops, "psi"))
        assert classify(m) == FORBIDDEN


@pytest.mark.parametrize(
    "name, i, j",
    [("Omega0i", 1, None), ("Omega0i", 2, None), ("Omegaij", 1, 2), ("S", None, None), ("dt", None, None)],
)
def test_linear_commutators_with_q0(name, i, j):
    rng = np.random.default_rng(9)
    Z = klainerman_field(name, 2, i, j)
    for _ in range(50):
        phi, psi = random_polynomial(rng, 2), random_gaussian(rng, 2)
        check = commutator_check(Z, Q0, phi, psi, random_event(rng, 2))
        assert check.residual <= 1e-10


def test_scaling_commutator_is_minus_two_q0():
    rng = np.random.default_rng(10)
    phi, psi = random_polynomial(rng, 3), random_polynomial(rng, 3)
    x = random_event(rng, 3)
    check = commutator_check(klainerman_field("S", 3), Q0, phi, psi, x)
    expected = -2 * eval_nullform(Q0, phi.jet(x).d1, psi.jet(x).d1)
    assert check.lhs == pytest.approx(expected, abs=1e-12)


def test_commutators_with_qab():
    rng = np.random.default_rng(12)
    form = NullFormId("Qab", 0, 2)
    for name, i, j in (("Omega0i", 1, None), ("Omegaij", 1, 2), ("S", None, None)):
        Z = klainerman_field(name, 2, i, j)
        phi, psi = random_gaussian(rng, 2), random_polynomial(rng, 2)
        assert commutator_check(Z, form, phi, psi, random_event(rng, 2)).residual <= 1e-10


def test_null_generator_commutators():
    rng = np.random.default_rng(14)
    for name in ("L", "Lb"):
        Z = klainerman_field(name, 3)
        phi, psi = random_gaussian(rng, 3), random_polynomial(rng, 3)
        assert commutator_check(Z, Q0, phi, psi, random_event(rng, 3)).residual <= 1e-10
    radial = [random_radial(rng, 3) for _ in range(2)]
    check = commutator_check(klainerman_field("L", 3), Q0, *radial, random_event(rng, 3))
    assert abs(check.expected) < 1e-14


def test_commutator_with_finite_difference_derivative():
    rng = np.random.default_rng(15)
    phi, psi = random_gaussian(rng, 2), random_gaussian(rng, 2)
    check = commutator_check(klainerman_field("S", 2), Q0, phi, psi, random_event(rng, 2), h=1e-3)
    assert check.residual <= 1e-9


def test_commutator_with_null_generator_at_origin():
    rng = np.random.default_rng(16)
    phi, psi = random_gaussian(rng, 2), random_gaussian(rng, 2)
    with pytest.raises(OriginSingularError):
        commutator_check(klainerman_field("L", 2), Q0, phi, psi, np.zeros(3))


def test_wave_commutator_with_null_generators():
    rng = np.random.default_rng(18)
    for n in (2, 3):
        for name in ("L", "Lb"):
            field = random_gaussian(rng, n)
            _, _, residual = wave_commutator_check(klainerman_field(name, n), field, random_event(rng, n))
            assert residual <= 1e-10
