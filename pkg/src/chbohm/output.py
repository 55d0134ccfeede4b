"""Deterministic CSV, JSON and SVG writers.

SVG is written by hand (no plotting dependency); plots are meant to be
faithful to the data, not pretty.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .wavefield import FieldConfig, density

PALETTE = {"c": "#c0392b", "d": "#2463a8"}


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([float(v) if isinstance(v, (np.floating, float)) else v for v in row])


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    """Maps data coordinates into an SVG viewport with margins."""

    def __init__(self, xlim, ylim, width=720, height=360, margin=48, equal=False):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        self.w, self.h, self.m = width, height, margin
        sx = (width - 2 * margin) / (self.x1 - self.x0)
        sy = (height - 2 * margin) / (self.y1 - self.y0)
        if equal:
            sx = sy = min(sx, sy)
        self.sx, self.sy = sx, sy

    def px(self, x):
        return self.m + (np.asarray(x) - self.x0) * self.sx

    def py(self, y):
        return self.h - self.m - (np.asarray(y) - self.y0) * self.sy

    def polyline(self, xs, ys, stroke, width=1.0, opacity=1.0) -> str:
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(self.px(xs), self.py(ys))
                       if math.isfinite(a) and math.isfinite(b))
        return (f'<polyline fill="none" stroke="{stroke}" stroke-width="{width}" '
                f'stroke-opacity="{opacity}" points="{pts}"/>')

    def axes(self, xlabel: str, ylabel: str, title: str) -> list[str]:
        x_lo, x_hi = self.px(self.x0), self.px(self.x1)
        y_lo, y_hi = self.py(self.y0), self.py(self.y1)
        out = [
            f'<rect x="{_fmt(x_lo)}" y="{_fmt(y_hi)}" width="{_fmt(x_hi - x_lo)}" '
            f'height="{_fmt(y_lo - y_hi)}" fill="none" stroke="#333"/>',
            f'<text x="{_fmt((x_lo + x_hi) / 2)}" y="{self.h - 10}" text-anchor="middle" '
            f'font-size="12">{xlabel}</text>',
            f'<text x="14" y="{_fmt((y_lo + y_hi) / 2)}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 14 {_fmt((y_lo + y_hi) / 2)})">{ylabel}</text>',
            f'<text x="{_fmt((x_lo + x_hi) / 2)}" y="20" text-anchor="middle" font-size="13">{title}</text>',
        ]
        for val, anchor in ((self.x0, "start"), (self.x1, "end")):
            out.append(f'<text x="{_fmt(self.px(val))}" y="{_fmt(y_lo + 14)}" font-size="10" '
                       f'text-anchor="{anchor}">{val:.4g}</text>')
        for val in (self.y0, self.y1):
            out.append(f'<text x="{_fmt(x_lo - 4)}" y="{_fmt(self.py(val) + 3)}" font-size="10" '
                       f'text-anchor="end">{val:.4g}</text>')
        return out


def _svg(frame: _Frame, body: list[str]) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.w}" height="{frame.h}" '
            f'viewBox="0 0 {frame.w} {frame.h}">\n' + "\n".join(body) + "\n</svg>\n")


def line_plot_svg(path: Path, x, y, title: str, xlabel: str, ylabel: str,
                  markers: Optional[Sequence[float]] = None) -> None:
    x, y = np.asarray(x, float), np.asarray(y, float)
    top = float(np.max(y)) if y.size and np.max(y) > 0 else 1.0
    frame = _Frame((float(x[0]), float(x[-1])), (0.0, 1.05 * top))
    body = frame.axes(xlabel, ylabel, title)
    body.append(frame.polyline(x, y, "#222", 1.2))
    for m in (() if markers is None else markers):
        body.append(f'<circle cx="{_fmt(frame.px(m))}" cy="{_fmt(frame.py(0.0))}" r="2.5" fill="#c0392b"/>')
    path.write_text(_svg(frame, body))


def comoving_slice(f: FieldConfig, xs, ys) -> np.ndarray:
    """Density at (x, y, t(x)) where t(x) is when the beams' group motion
    along the crossing axis reaches x; shows both beams and the fringes in a
    single picture."""
    point, u = f.axis()
    speed = float(np.mean([np.dot(p.velocity, u) for p in f.packets]))
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    t = np.clip(((pts - point) @ u) / speed, 0.0, None)
    return density(f, pts, t)


def overlay_svg(path: Path, f: FieldConfig, trajectories: Sequence[tuple[np.ndarray, str]],
                title: str, nx: int = 120, ny: int = 60) -> None:
    """Trajectories drawn over a co-moving density slice of the field."""
    allpts = np.concatenate([p for p, _ in trajectories]) if trajectories else np.zeros((1, 2))
    allpts = allpts[np.all(np.isfinite(allpts), axis=1)]
    lo = allpts.min(axis=0) - 4.0
    hi = allpts.max(axis=0) + 4.0
    frame = _Frame((lo[0], hi[0]), (lo[1], hi[1]), width=900, height=480, equal=True)
    xe = np.linspace(lo[0], hi[0], nx + 1)
    ye = np.linspace(lo[1], hi[1], ny + 1)
    rho = comoving_slice(f, 0.5 * (xe[1:] + xe[:-1]), 0.5 * (ye[1:] + ye[:-1]))
    shade = np.sqrt(rho / rho.max()) if rho.max() > 0 else rho
    body = []
    for i in range(nx):
        for j in range(ny):
            level = int(round(255 * (1.0 - 0.85 * shade[i, j])))
            if level >= 250:
                continue
            x0, x1 = frame.px(xe[i]), frame.px(xe[i + 1])
            y0, y1 = frame.py(ye[j + 1]), frame.py(ye[j])
            body.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0 + 0.3)}" '
                        f'height="{_fmt(y1 - y0 + 0.3)}" fill="rgb({level},{level},{level})"/>')
    body += frame.axes("x", "y", title)
    for pts, label in trajectories:
        body.append(frame.polyline(pts[:, 0], pts[:, 1], PALETTE.get(label, "#000"), 0.8, 0.8))
    path.write_text(_svg(frame, body))
