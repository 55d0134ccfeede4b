"""Small-aperture detector moved through the beam-overlap region.

Count rates are aperture integrals of the density, either at one instant or
averaged over a time window.  Aperture and time integrals use composite
Gauss-Legendre quadrature on a shared node set, so the per-beam decomposition

    rate = diag_c + diag_d + 2 Re(overlap)

holds to rounding error.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .curves import NODE_TOL, ScanCurve, Segment, build_curve
from .wavefield import FieldConfig, branch_amplitudes

APERTURE_PANEL = 0.5
TIME_PANEL = 0.05
TIME_ORDER = 6


@dataclass(frozen=True)
class DetectorSpec:
    """Square top-hat detector of half-width ``aperture`` centred at ``center``.

    ``sample_time`` is an instant or a ``(t_start, t_end)`` window; in the
    latter case the rate is the time average over the window.
    """
    center: tuple[float, float]
    aperture: float
    sample_time: Union[float, tuple[float, float]]
    order: Optional[int] = None

    def __post_init__(self):
        if not self.aperture > 0:
            raise ValueError("aperture must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        st = self.sample_time
        if isinstance(st, (tuple, list)):
            if len(st) != 2 or not st[1] > st[0]:
                raise ValueError("time window must be (start, end) with end > start")
            object.__setattr__(self, "sample_time", (float(st[0]), float(st[1])))
        else:
            object.__setattr__(self, "sample_time", float(st))

    @property
    def windowed(self) -> bool:
        return isinstance(self.sample_time, tuple)

    def moved_to(self, center) -> DetectorSpec:
        return DetectorSpec(tuple(center), self.aperture, self.sample_time, self.order)


def fringe_spacing(f: FieldConfig) -> float:
    """Plane-wave fringe spacing 2 pi / |v_c - v_d| (hbar = m = 1)."""
    dv = np.subtract(f.c.velocity, f.d.velocity)
    return float(2.0 * np.pi / np.linalg.norm(dv))


def check_resolution(f: FieldConfig, d: DetectorSpec) -> bool:
    ok = d.aperture < fringe_spacing(f) / 4.0
    if not ok:
        warnings.warn(
            f"aperture {d.aperture:g} cannot resolve fringes of spacing {fringe_spacing(f):.4g}",
            stacklevel=3,
        )
    return ok


def _composite_gl(lo: float, hi: float, panel: float, order: int):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    k = max(1, math.ceil((hi - lo) / panel - 1e-12))
    edges = np.linspace(lo, hi, k + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * nodes).ravel(), (half[:, None] * weights).ravel()


def _aperture_order(d: DetectorSpec) -> int:
    if d.order is not None:
        return d.order
    w = 2.0 * d.aperture
    return 4 if w <= 0.01 else 8 if w <= 0.1 else 12


class ApertureTerms(NamedTuple):
    diag_c: float
    diag_d: float
    overlap: complex   # integral of conj(w_c psi_c) * w_d psi_d


def aperture_terms(f: FieldConfig, d: DetectorSpec) -> ApertureTerms:
    order = _aperture_order(d)
    a = d.aperture
    xs, xw = _composite_gl(d.center[0] - a, d.center[0] + a, APERTURE_PANEL, order)
    ys, yw = _composite_gl(d.center[1] - a, d.center[1] + a, APERTURE_PANEL, order)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    w2 = np.outer(xw, yw)
    pts = np.stack([X, Y], axis=-1)
    if d.windowed:
        t0, t1 = d.sample_time
        ts, tw = _composite_gl(t0, t1, TIME_PANEL, TIME_ORDER)
        tw = tw / (t1 - t0)
    else:
        ts, tw = np.array([d.sample_time]), np.array([1.0])

    dc = dd = 0.0
    ov = 0j
    chunk = max(1, 200_000 // pts[..., 0].size)
    for k in range(0, len(ts), chunk):
        t = ts[k:k + chunk]
        wt = tw[k:k + chunk]
        b = branch_amplitudes(f, pts[None], t[:, None, None])
        wgt = wt[:, None, None] * w2
        dc += float(np.sum(wgt * np.abs(b[0]) ** 2))
        dd += float(np.sum(wgt * np.abs(b[1]) ** 2))
        ov += complex(np.sum(wgt * np.conj(b[0]) * b[1]))
    return ApertureTerms(dc, dd, ov)


def count_rate(f: FieldConfig, d: DetectorSpec) -> float:
    """Aperture integral of the density (time-averaged for a window)."""
    terms = aperture_terms(f, d)
    rate = terms.diag_c + terms.diag_d
    if f.mode == "coherent":
        rate += 2.0 * terms.overlap.real
    return max(rate, 0.0)


def aperture_decoherence(f: FieldConfig, d: DetectorSpec) -> complex:
    """Cross term of the two beams over the aperture.

    Its size measures how far the which-beam histories fail to decohere at
    this detector position.
    """
    if f.mode != "coherent":
        raise ValueError("aperture_decoherence needs a coherent field")
    return aperture_terms(f, d).overlap


def sweep(f: FieldConfig, line: Segment, d_template: DetectorSpec, n: int,
          node_tol: float = NODE_TOL, refine: bool = True) -> ScanCurve:
    """Count rates at ``n`` detector positions along ``line``, with nodes."""
    if n < 3:
        raise ValueError("need at least 3 positions")
    check_resolution(f, d_template)
    s, pts = line.samples(n)
    rates = np.empty(n)
    overlaps = np.empty(n, complex)
    for i, p in enumerate(pts):
        terms = aperture_terms(f, d_template.moved_to(p))
        r = terms.diag_c + terms.diag_d
        if f.mode == "coherent":
            r += 2.0 * terms.overlap.real
        rates[i] = max(r, 0.0)
        overlaps[i] = terms.overlap

    def rate_at(u):
        return count_rate(f, d_template.moved_to(line.point(np.array([u]))[0]))

    return build_curve(
        s, pts, rates, fn=rate_at if refine else None, node_tol=node_tol,
        overlaps=overlaps if f.mode == "coherent" else None,
        meta={"mode": f.mode, "aperture": d_template.aperture,
              "sample_time": d_template.sample_time},
    )
