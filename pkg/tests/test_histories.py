import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from chbohm.errors import (
    InconsistentFamily,
    NonOrthogonalSet,
    TimeLabelUnknown,
    ZeroProbabilityCondition,
)
from chbohm.hilbert import basis_state, check_unitary
from chbohm.histories import (
    BASIS,
    COMPLETIONS,
    Model,
    build_detector_model,
    build_standard_model,
    chain_vector,
    complete_unitary,
    conditional_probability,
    consistency_report,
    decoherence_functional,
    event_probability,
    weight,
)

import oracles

WHICH_ARM = {"t1": ["c", "d"], "t2": ["C*", "D*"]}


@pytest.fixture(params=COMPLETIONS)
def completion(request):
    return request.param


def test_plain_weights(completion):
    m = build_standard_model("plain", completion)
    rep = consistency_report(m, m.family(WHICH_ARM))
    assert_allclose(list(rep.weights.values()), [0.5, 0.0, 0.0, 0.5], atol=1e-12)
    assert rep.consistent_medium and rep.consistent_weak
    assert rep.offdiag_max_abs < 1e-12
    assert set(rep.dynamically_impossible) == {
        "psi0@t0 x c@t1 x D*@t2", "psi0@t0 x d@t1 x C*@t2"}


@pytest.mark.parametrize("variant, sets", [
    ("plain", WHICH_ARM),
    ("recombined", WHICH_ARM),
    ("with_t3", {"t3": ["c+d", "c-d"], "t2": ["C*", "D*"]}),
    ("recombined", {"t1": ["c+d", "c-d"], "t3": ["c", "d"], "t2": ["C*", "D*"]}),
])
def test_decoherence_matrix_matches_hand_oracle(variant, sets, completion):
    m = build_standard_model(variant, completion)
    fam = m.family(sets)
    rep = consistency_report(m, fam)
    rows = []
    for h in fam.histories:
        rows.append([h.at(t) for t in m.times[1:]])
    assert_allclose(rep.decoherence_matrix, oracles.hand_decoherence(variant, rows), atol=1e-14)


def test_recombined_which_arm_is_inconsistent(completion):
    m = build_standard_model("recombined", completion)
    rep = consistency_report(m, m.family(WHICH_ARM))
    assert not rep.consistent_medium
    assert rep.offdiag_max_abs == pytest.approx(0.25, abs=1e-12)
    assert_allclose(list(rep.weights.values()), [0.25] * 4, atol=1e-12)


def test_superposition_family_with_t3(completion):
    m = build_standard_model("with_t3", completion)
    fam = m.family({"t3": ["c+d"], "t2": ["C*", "D*"]})
    rep = consistency_report(m, fam)
    assert rep.consistent_medium
    assert_allclose(list(rep.weights.values()), [0.5, 0.5], atol=1e-12)


def test_conditionals_plain(completion):
    m = build_standard_model("plain", completion)
    fam = m.family(WHICH_ARM)
    assert conditional_probability(m, fam, {"t1": "c"}, {"t2": "C*"}) == pytest.approx(1.0, abs=1e-12)
    assert conditional_probability(m, fam, {"t1": "d"}, {"t2": "D*"}) == pytest.approx(1.0, abs=1e-12)
    silent = m.family({"t1": ["c", "d"], "t2": ["C*", "C"]})
    assert conditional_probability(m, silent, {"t1": "c"}, {"t2": "C"}) == pytest.approx(0.0, abs=1e-12)


def test_event_probability_unions():
    m = build_standard_model("plain")
    fam = m.family(WHICH_ARM)
    assert event_probability(m, fam, {"t2": ["C*", "D*"]}) == pytest.approx(1.0)
    assert event_probability(m, fam, {"t1": "c"}) == pytest.approx(0.5)


def test_inconsistent_family_refuses_probabilities():
    m = build_standard_model("recombined")
    fam = m.family(WHICH_ARM)
    with pytest.raises(InconsistentFamily) as info:
        conditional_probability(m, fam, {"t1": "c"}, {"t2": "C*"})
    assert info.value.report.offdiag_max_abs == pytest.approx(0.25)


def test_zero_probability_condition():
    m = build_standard_model("recombined")
    fam = m.family({"t1": ["c+d", "c-d"], "t2": ["C*", "D*"]})
    with pytest.raises(ZeroProbabilityCondition):
        conditional_probability(m, fam, {"t1": "c+d"}, {"t2": "D*"})


def test_one_framework_rule_with_t3():
    m = build_standard_model("with_t3")
    mixed = m.family({"t1": ["c", "d"], "t3": ["c+d", "c-d"], "t2": ["C*", "D*"]})
    assert not consistency_report(m, mixed).consistent_medium


def test_weak_consistency_mode():
    # an imaginary off-diagonal term passes weak but fails medium consistency
    m = build_detector_model(1.0, 1j)
    rep = consistency_report(m, m.family(WHICH_ARM))
    assert not rep.consistent_medium
    assert rep.consistent_weak
    conditional_probability(m, m.family(WHICH_ARM), {"t1": "c"}, {"t2": "C*"}, mode="weak")


def test_unknown_time_and_projector():
    m = build_standard_model("plain")
    with pytest.raises(TimeLabelUnknown):
        m.family({"t9": ["c"]})
    with pytest.raises(KeyError):
        m.projector("nope")
    fam = m.family(WHICH_ARM)
    with pytest.raises(TimeLabelUnknown):
        fam.select({"t3": "c"})


def test_non_orthogonal_projectors_rejected():
    m = build_standard_model("with_t3")
    with pytest.raises(NonOrthogonalSet):
        m.family({"t1": ["c", "c+d"]})


def test_unknown_variant():
    with pytest.raises(ValueError):
        build_standard_model("bogus")


def test_completions_differ_but_results_agree():
    a = build_standard_model("recombined", "gram_schmidt")
    b = build_standard_model("recombined", "rotated")
    ua = a.unitaries[("t1", "t3")].matrix
    ub = b.unitaries[("t1", "t3")].matrix
    assert np.max(np.abs(ua - ub)) > 0.1
    for sets in (WHICH_ARM, {"t1": ["c+d", "c-d"], "t2": ["C*", "D*"]}):
        da = consistency_report(a, a.family(sets)).decoherence_matrix
        db = consistency_report(b, b.family(sets)).decoherence_matrix
        assert np.max(np.abs(da - db)) < 1e-12


def test_detector_model_limits():
    plain = build_standard_model("plain")
    local = build_detector_model(1.0, 0.0)
    for h_p, h_l in zip(plain.family(WHICH_ARM).histories, local.family(WHICH_ARM).histories):
        assert weight(plain, h_p) == pytest.approx(weight(local, h_l), abs=1e-15)
    node = build_detector_model(1.0, -1.0)
    assert weight(node, node.history({"t2": "C*"})) < 1e-30
    with pytest.raises(ZeroProbabilityCondition):
        conditional_probability(node, node.family({"t1": ["c+d", "c-d"], "t2": ["C*", "D*"]}),
                                {"t1": "c+d"}, {"t2": "C*"})


def test_complete_unitary_rejects_non_orthonormal_images():
    a = basis_state(BASIS, "cCD")
    with pytest.raises(NonOrthogonalSet):
        complete_unitary({"sCD": a, "dCD": a}, BASIS)


def _random_unit(rng, dim):
    z = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return z / np.linalg.norm(z)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_decoherence_functional_hermitian_and_additive(seed):
    """Random detector responses: D is Hermitian, PSD, and sums to 1."""
    rng = np.random.default_rng(seed)
    a = _random_unit(rng, 2)
    m = build_detector_model(a[0], a[1], COMPLETIONS[seed % 2])
    fam = m.family(WHICH_ARM)
    rep = consistency_report(m, fam)
    d = rep.decoherence_matrix
    assert_allclose(d, d.conj().T, atol=1e-14)
    assert np.min(np.linalg.eigvalsh(d)) > -1e-14
    # the family's projectors resolve the final state's support, so the
    # full decoherence functional sums to the norm of the initial state
    assert abs(d.sum() - 1.0) < 1e-12
    h1, h2 = fam.histories[0], fam.histories[3]
    assert abs(decoherence_functional(m, h1, h2) - np.conj(decoherence_functional(m, h2, h1))) < 1e-14


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_even_split_bounds_off_diagonal_by_quarter(seed):
    """With an even split into two arms, every unitary detector response gives
    |D(c x C*, d x C*)| <= |c-branch| |d-branch| = 1/2 * 1/2."""
    rng = np.random.default_rng(seed)
    a = _random_unit(rng, 2)
    m = build_detector_model(a[0], a[1])
    rep = consistency_report(m, m.family(WHICH_ARM))
    assert abs(rep.offdiag_max_abs - abs(a[0] * a[1]) / 2) < 1e-12
    assert rep.offdiag_max_abs <= 0.25 + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_consistent_families_have_additive_probabilities(seed):
    """In a consistent family, weights of coarse-grained events add up."""
    m = build_standard_model(["plain", "with_t3", "recombined"][seed % 3], COMPLETIONS[seed % 2])
    fam = m.family({"t1": ["c+d", "c-d"], "t2": ["C*", "D*"]}) if m.variant != "plain" else m.family(WHICH_ARM)
    rep = consistency_report(m, fam)
    if not rep.consistent_medium:
        return
    total = event_probability(m, fam, {"t2": ["C*", "D*"]})
    parts = event_probability(m, fam, {"t2": "C*"}) + event_probability(m, fam, {"t2": "D*"})
    assert abs(total - parts) < 1e-12


def test_chain_vector_validates_times():
    m = build_standard_model("with_t3")
    h = m.history({"t3": "c+d", "t2": "C*"})
    assert chain_vector(m, h).norm() == pytest.approx(np.sqrt(0.5))
    other = build_standard_model("plain")
    with pytest.raises(TimeLabelUnknown):
        chain_vector(other, h)


def test_model_rejects_non_unitary_step():
    base = build_standard_model("plain")
    with pytest.raises(ValueError):
        Model(base.basis_labels, base.initial_state, ("t0", "t1"), {}, base.projectors)


def test_all_unitaries_are_unitary():
    for variant, comp in itertools.product(["plain", "with_t3", "recombined"], COMPLETIONS):
        m = build_standard_model(variant, comp)
        for op in m.unitaries.values():
            assert check_unitary(op, 1e-12)
