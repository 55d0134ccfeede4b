import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chbohm.curves import Segment
from chbohm.scan import (
    DetectorSpec,
    aperture_decoherence,
    aperture_terms,
    check_resolution,
    count_rate,
    fringe_spacing,
    sweep,
)
from chbohm.wavefield import default_field, density

import oracles

T = 4.0
FIELD = default_field()
ACROSS = Segment((40.0, -3.0), (40.0, 3.0))
ALONG_C = Segment((4.0, 18.0), (20.0, 10.0))


def test_fringe_spacing_formula():
    assert fringe_spacing(FIELD) == pytest.approx(np.pi / 5)


def test_rate_additivity_at_sweep_positions():
    s, pts = ACROSS.samples(50)
    for p in pts:
        d = DetectorSpec(tuple(p), 0.002, T)
        terms = aperture_terms(FIELD, d)
        assert abs(count_rate(FIELD, d) - (terms.diag_c + terms.diag_d + 2 * terms.overlap.real)) < 1e-10


def test_small_aperture_matches_grid_quadrature():
    d = DetectorSpec((40.0, 0.2), 0.1, T)
    box = ((39.9, 40.1), (0.1, 0.3))
    coarse, fine = (oracles.grid_integral(lambda x: density(FIELD, x, T), box, n=n) for n in (801, 1601))
    # trapezoid error is O(h^2): one Richardson step
    ref = (4.0 * fine - coarse) / 3.0
    assert count_rate(FIELD, d) == pytest.approx(ref, rel=1e-9)


def test_large_aperture_collects_one_beam():
    d = DetectorSpec((10.0, 15.0), 15.0, 1.0)
    assert count_rate(FIELD, d) == pytest.approx(0.5, abs=1e-6)


def test_sweep_across_overlap_finds_nodes():
    start = time.perf_counter()
    curve = sweep(FIELD, ACROSS, DetectorSpec(ACROSS.start, 0.002, T), 241)
    assert time.perf_counter() - start < 10.0
    assert curve.nodes.size >= 4
    assert curve.spacing() == pytest.approx(np.pi / 5, rel=0.05)
    assert curve.overlaps is not None


def test_incoherent_sweep_has_no_nodes():
    curve = sweep(FIELD.with_mode("incoherent"), ACROSS, DetectorSpec(ACROSS.start, 0.002, T), 241)
    assert curve.nodes.size == 0
    assert curve.overlaps is None


def test_pre_region_sweep_is_flat():
    curve = sweep(FIELD, ALONG_C, DetectorSpec(ALONG_C.start, 0.05, (0.0, 8.0)), 21)
    lo, hi = curve.rates.min(), curve.rates.max()
    assert (hi - lo) / hi < 0.05
    assert curve.nodes.size == 0


@pytest.mark.parametrize("center, t, small", [
    ((10.0, 15.0), 1.0, True),      # beam c alone, before the overlap
    ((70.0, -15.0), 7.0, True),     # beam c after the beams have separated again
    ((40.0, 0.0), T, False),        # antinode in the overlap region
])
def test_overlap_term(center, t, small):
    d = DetectorSpec(center, 0.002, t)
    ov = aperture_decoherence(FIELD, d)
    terms = aperture_terms(FIELD, d)
    if small:
        assert abs(ov) < 1e-10
    else:
        # the relative phase varies across the aperture: |overlap| < diag by O((k a)^2)
        assert abs(ov) == pytest.approx(terms.diag_c, rel=1e-3)


def test_incoherent_field_has_no_decoherence_term():
    with pytest.raises(ValueError):
        aperture_decoherence(FIELD.with_mode("incoherent"), DetectorSpec((40.0, 0.0), 0.01, T))


def test_resolution_warning():
    with pytest.warns(UserWarning):
        assert not check_resolution(FIELD, DetectorSpec((40.0, 0.0), 0.5, T))
    assert check_resolution(FIELD, DetectorSpec((40.0, 0.0), 0.01, T))


@pytest.mark.parametrize("kwargs", [
    {"aperture": 0.0},
    {"sample_time": (2.0, 1.0)},
    {"sample_time": (1.0, 2.0, 3.0)},
])
def test_detector_spec_validation(kwargs):
    base = {"center": (0.0, 0.0), "aperture": 0.1, "sample_time": 1.0}
    base.update(kwargs)
    with pytest.raises(ValueError):
        DetectorSpec(**base)


def test_windowed_rate_is_time_average():
    d = DetectorSpec((20.0, 10.0), 0.05, (1.5, 2.5))
    ts = np.linspace(1.5, 2.5, 2001)
    inst = [count_rate(FIELD, DetectorSpec(d.center, d.aperture, t)) for t in ts]
    assert count_rate(FIELD, d) == pytest.approx(np.trapezoid(inst, ts), rel=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(30, 50), st.floats(-5, 5), st.floats(3, 5))
def test_rate_nonnegative_and_additive(x, y, t):
    d = DetectorSpec((x, y), 0.01, t)
    terms = aperture_terms(FIELD, d)
    r = count_rate(FIELD, d)
    assert r >= 0.0
    assert abs(r - (terms.diag_c + terms.diag_d + 2 * terms.overlap.real)) <= 1e-10
    # Cauchy-Schwarz on the aperture
    assert abs(terms.overlap) <= np.sqrt(terms.diag_c * terms.diag_d) * (1 + 1e-9) + 1e-300
