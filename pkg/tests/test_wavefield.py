import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from chbohm.curves import Segment
from chbohm.wavefield import (
    FieldConfig,
    PacketParams,
    branch_amplitudes,
    default_field,
    density,
    field_amplitude,
    fringe_profile,
    packet_amplitude,
    packet_terms,
    psi,
)

import oracles

T = 4.0
FIELD = default_field()


def _mp_packets(f):
    return [(p.center0, p.velocity, p.sigma0) for p in f.packets]


@pytest.mark.parametrize("x, t", [((1.3, 18.2), 0.7), ((40.0, 0.4), 4.0), ((70.0, -14.0), 7.5)])
def test_packet_matches_momentum_space_integral(x, t):
    p = FIELD.c
    ref = (oracles.mp_packet_1d_fourier(x[0], t, p.center0[0], p.velocity[0], p.sigma0)
           * oracles.mp_packet_1d_fourier(x[1], t, p.center0[1], p.velocity[1], p.sigma0))
    got = packet_amplitude(p, np.array(x), t)
    assert abs(got - complex(ref)) < 1e-12 * max(1.0, abs(complex(ref)))


def test_field_matches_arbitrary_precision_oracle():
    rng = np.random.default_rng(11)
    pts = rng.uniform([0, -25], [80, 25], size=(60, 2))
    ts = rng.uniform(0, 8, size=60)
    w = [complex(a) for a in FIELD.amplitudes]
    for x, t in zip(pts, ts):
        ref = complex(oracles.mp_psi(_mp_packets(FIELD), w, x[0], x[1], t))
        assert abs(psi(FIELD, x, t) - ref) < 1e-13


@pytest.mark.parametrize("t", [0.0, T / 2, T, 2 * T])
def test_normalization(t):
    box = ((-20.0, 110.0), (-60.0, 60.0))
    total = oracles.grid_integral(lambda x: density(FIELD, x, t), box, n=1201)
    assert total == pytest.approx(1.0, abs=1e-6)
    assert FIELD.total_norm() == pytest.approx(1.0, abs=1e-12)


def test_packet_overlap_matches_quadrature():
    c = PacketParams((0.0, 1.0), (1.0, -0.5), 1.5, "c")
    d = PacketParams((0.5, -1.0), (0.3, 0.5), 1.5, "d")
    f = FieldConfig((c, d))
    box = ((-15.0, 15.0), (-15.0, 15.0))
    re = oracles.grid_integral(lambda x: (np.conj(packet_amplitude(c, x, 0.0)) * packet_amplitude(d, x, 0.0)).real, box)
    im = oracles.grid_integral(lambda x: (np.conj(packet_amplitude(c, x, 0.0)) * packet_amplitude(d, x, 0.0)).imag, box)
    assert abs(f.packet_overlap() - complex(re, im)) < 1e-10


def test_schrodinger_residual():
    """i dpsi/dt = -(1/2) lap psi with 4th-order finite differences, h = 1e-4."""
    rng = np.random.default_rng(5)
    h = 1e-4
    pts = rng.uniform([5, -20], [75, 20], size=(100, 2))
    ts = rng.uniform(0.5, 8.0, size=100)
    stencil = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
    deriv = np.array([1, -8, 0, 8, -1]) / (12 * h)
    offs = np.arange(-2, 3) * h
    worst = 0.0
    for x, t in zip(pts, ts):
        vt = np.array([psi(FIELD, x, t + o) for o in offs])
        vx = np.array([psi(FIELD, x + [o, 0], t) for o in offs])
        vy = np.array([psi(FIELD, x + [0, o], t) for o in offs])
        resid = 1j * deriv @ vt + 0.5 * (stencil @ vx + stencil @ vy)
        scale = np.sqrt(FIELD.peak_density(t))
        worst = max(worst, abs(resid) / scale)
    assert worst < 1e-5


@settings(max_examples=80, deadline=None)
@given(st.floats(-10, 90), st.floats(-40, 40), st.floats(0, 10), st.sampled_from(["coherent", "incoherent"]))
def test_mirror_symmetry(x, y, t, mode):
    f = FIELD.with_mode(mode)
    p = np.array([x, y])
    assert abs(density(f, p, t) - density(f, f.mirror(p), t)) <= 1e-12 * max(1.0, density(f, p, t))


@settings(max_examples=80, deadline=None)
@given(st.floats(-10, 90), st.floats(-40, 40), st.floats(0, 10))
def test_coherent_density_decomposition(x, y, t):
    p = np.array([x, y])
    b = branch_amplitudes(FIELD, p, t)
    incoh = density(FIELD.with_mode("incoherent"), p, t)
    coh = density(FIELD, p, t)
    assert coh >= 0.0
    assert coh == pytest.approx(incoh + 2.0 * (np.conj(b[0]) * b[1]).real, abs=1e-15)


def test_axis_is_antinode_line():
    xs = np.linspace(0, 80, 50)
    for t in (1.0, T, 6.0):
        pts = np.stack([xs, np.zeros_like(xs)], axis=-1)
        c = packet_amplitude(FIELD.c, pts, t)
        d = packet_amplitude(FIELD.d, pts, t)
        assert_allclose(np.abs(c), np.abs(d), rtol=1e-12, atol=0)
        single = 0.5 * np.abs(c) ** 2
        # constructive doubling: twice the incoherent density, four single terms
        assert_allclose(density(FIELD, pts, t), 2.0 * density(FIELD.with_mode("incoherent"), pts, t), rtol=1e-12)
        assert_allclose(density(FIELD, pts, t), 4.0 * single, rtol=1e-12)


def test_crossing_geometry():
    assert FIELD.crossing_time() == pytest.approx(T)
    assert_allclose(FIELD.crossing_point(), [40.0, 0.0])
    assert FIELD.is_mirror_symmetric()
    assert FIELD.transverse(np.array([0.0, 20.0])) > 0


def test_symmetric_flag_validated():
    c = PacketParams((0.0, 20.0), (10.0, -5.0), 2.0, "c")
    d = PacketParams((0.0, -20.0), (10.0, 4.0), 2.0, "d")
    with pytest.raises(ValueError):
        FieldConfig((c, d), symmetric=True)
    FieldConfig((c, d))


@pytest.mark.parametrize("kwargs", [{"mode": "mixed"}, {"packets": None}])
def test_bad_configs(kwargs):
    base = {"packets": FIELD.packets, "mode": "coherent"}
    base.update(kwargs)
    if base["packets"] is None:
        base["packets"] = (FIELD.d, FIELD.c)
    with pytest.raises(ValueError):
        FieldConfig(**base)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        packet_amplitude(FIELD.c, np.zeros(2), -0.1)
    with pytest.raises(ValueError):
        field_amplitude(FIELD, np.zeros(2), -1.0)


def test_field_amplitude_incoherent_returns_pair():
    s = field_amplitude(FIELD.with_mode("incoherent"), np.array([40.0, 0.3]), T)
    assert isinstance(s.psi, tuple)
    assert s.density == pytest.approx(abs(s.psi[0]) ** 2 + abs(s.psi[1]) ** 2)


def test_packet_terms_broadcast():
    x = np.zeros((3, 1, 4, 2))
    t = np.linspace(0, 1, 5).reshape(5, 1)
    terms = packet_terms(FIELD.c, x, t)
    assert terms.log_psi.shape == (3, 5, 4)
    assert terms.grad_log.shape == (3, 5, 4, 2)


def test_analytic_gradient_matches_mpmath():
    p = FIELD.c
    x, t = np.array([38.5, 1.3]), 3.7
    g = packet_terms(p, x, t).grad_log
    for k in range(2):
        def f(u, k=k):
            q = [mp.mpf(x[0]), mp.mpf(x[1])]
            q[k] = u
            return mp.log(oracles.mp_packet_1d(q[0], t, p.center0[0], p.velocity[0], p.sigma0)
                          * oracles.mp_packet_1d(q[1], t, p.center0[1], p.velocity[1], p.sigma0))
        ref = complex(mp.diff(f, mp.mpf(x[k])))
        assert abs(g[k] - ref) < 1e-12


def test_fringe_spacing_at_crossing():
    line = Segment((40.0, -6.0), (40.0, 6.0))
    curve = fringe_profile(FIELD, line, T, 601)
    assert curve.nodes.size >= 10
    assert curve.spacing() == pytest.approx(np.pi / 5, rel=0.05)
    flat = fringe_profile(FIELD.with_mode("incoherent"), line, T, 601)
    assert flat.minima.size == 0
    assert flat.meta["fringe_free"]
