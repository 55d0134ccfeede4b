import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from chbohm.errors import DimensionMismatch, NotNormalized
from chbohm.hilbert import (
    Operator,
    StateVector,
    apply,
    basis_state,
    check_unitary,
    identity,
    inner,
    is_projector,
    projector_from,
    projector_onto,
)

LABELS = ("a", "b", "c")


def random_state(rng, n=3, labels=LABELS):
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    return StateVector(z / np.linalg.norm(z), labels)


def random_unitary(rng, n=3):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_basis_state_and_lookup():
    s = basis_state(LABELS, "b")
    assert s["b"] == 1.0
    assert s["a"] == 0.0
    assert s.dim == 3


def test_amplitudes_are_read_only():
    s = basis_state(LABELS, "a")
    with pytest.raises(ValueError):
        s.amplitudes[0] = 2.0


def test_inner_is_antilinear_in_first_argument():
    a = StateVector([1j, 0, 0], LABELS)
    b = StateVector([1, 0, 0], LABELS)
    assert inner(a, b) == pytest.approx(-1j)
    assert inner(b, a) == pytest.approx(1j)


def test_label_mismatch_rejected():
    a = basis_state(LABELS, "a")
    b = basis_state(("x", "y", "z"), "x")
    with pytest.raises(DimensionMismatch):
        inner(a, b)
    with pytest.raises(DimensionMismatch):
        apply(identity(("x", "y", "z")), a)
    with pytest.raises(DimensionMismatch):
        a + b


@pytest.mark.parametrize("amps, labels", [([1, 0], LABELS), ([], ()), ([[1, 0], [0, 1]], ("a", "b"))])
def test_bad_shapes_rejected(amps, labels):
    with pytest.raises(DimensionMismatch):
        StateVector(amps, labels)


def test_operator_must_be_square():
    with pytest.raises(DimensionMismatch):
        Operator(np.zeros((2, 3)), ("a", "b"))


def test_projector_from_requires_unit_vector():
    with pytest.raises(NotNormalized):
        projector_from(StateVector([1, 1, 0], LABELS))


def test_tagged_operators_are_validated():
    with pytest.raises(ValueError):
        Operator(np.diag([1, 2, 1]), LABELS, kind="unitary")
    with pytest.raises(ValueError):
        Operator(np.diag([1, 0.5, 0]), LABELS, kind="projector")


def test_projector_onto_span():
    a, b = basis_state(LABELS, "a"), basis_state(LABELS, "b")
    p = projector_onto([a, b])
    assert_allclose(p.matrix, np.diag([1, 1, 0]))
    assert p.trace() == pytest.approx(2.0)


def test_dagger_and_matmul():
    rng = np.random.default_rng(3)
    u = Operator(random_unitary(rng), LABELS, kind="unitary")
    prod = u.dagger() @ u
    assert_allclose(prod.matrix, np.eye(3), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projector_properties(seed):
    rng = np.random.default_rng(seed)
    p = projector_from(random_state(rng))
    m = p.matrix
    assert is_projector(p)
    assert np.max(np.abs(m @ m - m)) < 1e-12
    assert np.max(np.abs(m - m.conj().T)) < 1e-12
    assert abs(p.trace() - 1.0) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_unitaries_preserve_inner_products(seed, n):
    rng = np.random.default_rng(seed)
    labels = tuple(str(i) for i in range(n))
    u = Operator(random_unitary(rng, n), labels, kind="unitary")
    a, b = random_state(rng, n, labels), random_state(rng, n, labels)
    assert check_unitary(u, 1e-12)
    assert abs(inner(apply(u, a), apply(u, b)) - inner(a, b)) < 1e-12


def test_normalized_zero_vector_raises():
    with pytest.raises(NotNormalized):
        StateVector([0, 0, 0], LABELS).normalized()
