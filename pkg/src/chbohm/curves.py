"""Sampled curves along a straight segment, with minimum/node location."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

NODE_TOL = 1e-3


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float]
    end: tuple[float, float]

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    def point(self, s):
        """Point(s) at arc length ``s`` from ``start``."""
        a = np.asarray(self.start, float)
        d = (np.asarray(self.end, float) - a) / self.length
        s = np.asarray(s, float)
        return a + s[..., None] * d

    def samples(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if n < 3:
            raise ValueError("need at least 3 samples")
        s = np.linspace(0.0, self.length, n)
        return s, self.point(s)


@dataclass(frozen=True)
class ScanCurve:
    s: np.ndarray                 # arc length along the segment
    positions: np.ndarray         # (n, 2)
    rates: np.ndarray             # density or count rate, >= 0
    minima: np.ndarray            # refined local minima (arc length), sorted
    minima_values: np.ndarray
    nodes: np.ndarray             # minima below node_tol * max(rates), sorted
    node_tol: float = NODE_TOL
    overlaps: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def max_rate(self) -> float:
        return float(np.max(self.rates))

    def spacing(self, which: str = "nodes", around: Optional[float] = None, count: int = 4) -> float:
        """Median spacing of the ``count`` minima (or nodes) closest to ``around``.

        ``around`` defaults to the arc-length midpoint of the segment.
        """
        pts = self.nodes if which == "nodes" else self.minima
        if pts.size < 2:
            return float("nan")
        if around is None:
            around = 0.5 * (self.s[0] + self.s[-1])
        order = np.argsort(np.abs(pts - around))[: max(count, 2)]
        chosen = np.sort(pts[order])
        return float(np.median(np.diff(chosen)))


def locate_minima(s: np.ndarray, values: np.ndarray,
                  fn: Optional[Callable[[float], float]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Interior local minima of a sampled curve.

    When ``fn`` is given each sampled minimum is refined by a bounded scalar
    search between its neighbouring samples.
    """
    v = np.asarray(values)
    idx = np.nonzero((v[1:-1] <= v[:-2]) & (v[1:-1] < v[2:]))[0] + 1
    where, vals = [], []
    for i in idx:
        if fn is None:
            where.append(s[i])
            vals.append(v[i])
            continue
        res = minimize_scalar(fn, bounds=(s[i - 1], s[i + 1]), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, abs(s[-1]))})
        if res.fun <= v[i]:
            where.append(float(res.x))
            vals.append(float(res.fun))
        else:
            where.append(s[i])
            vals.append(v[i])
    return np.array(where, float), np.array(vals, float)


def build_curve(s, positions, rates, fn=None, node_tol: float = NODE_TOL,
                overlaps=None, meta=None) -> ScanCurve:
    rates = np.asarray(rates, float)
    minima, minima_values = locate_minima(s, rates, fn)
    peak = float(np.max(rates)) if rates.size else 0.0
    nodes = minima[minima_values < node_tol * peak] if peak > 0 else np.array([])
    return ScanCurve(
        s=np.asarray(s, float),
        positions=np.asarray(positions, float),
        rates=rates,
        minima=minima,
        minima_values=minima_values,
        nodes=np.sort(nodes),
        node_tol=node_tol,
        overlaps=None if overlaps is None else np.asarray(overlaps),
        meta=dict(meta or {}),
    )
