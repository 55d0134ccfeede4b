"""Closed-form wavefield of two free Gaussian beams (hbar = m = 1).

Each beam is a freely spreading 2D Gaussian packet, the product of two 1D
closed forms

    psi(x, t) = (2 pi s0^2)^(-1/4) a^(-1/2)
                exp(-(x - x0 - v t)^2 / (4 s0^2 a) + i v (x - x0 - v t / 2)),
    a = 1 + i t / (2 s0^2).

All derivatives are analytic: per axis d(log psi)/dx = -(x - x0 - v t)/(2 s0^2 a) + i v
and d^2(log psi)/dx^2 = -1/(2 s0^2 a).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .curves import NODE_TOL, ScanCurve, Segment, build_curve

MODES = ("coherent", "incoherent")
LABELS = ("c", "d")


@dataclass(frozen=True)
class PacketParams:
    center0: tuple[float, float]
    velocity: tuple[float, float]
    sigma0: float
    label: str = "c"

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        object.__setattr__(self, "center0", tuple(float(c) for c in self.center0))
        object.__setattr__(self, "velocity", tuple(float(c) for c in self.velocity))

    def center(self, t):
        t = np.asarray(t, float)
        return np.asarray(self.center0) + t[..., None] * np.asarray(self.velocity)

    def width(self, t):
        """Position-space standard deviation of |psi|^2 per axis."""
        t = np.asarray(t, float)
        return self.sigma0 * np.sqrt(1.0 + (t / (2.0 * self.sigma0**2)) ** 2)

    def peak_density(self, t):
        return 1.0 / (2.0 * np.pi * self.width(t) ** 2)

    def mirrored(self, point, direction, label=None) -> PacketParams:
        return PacketParams(
            tuple(_reflect(np.asarray(self.center0), point, direction, affine=True)),
            tuple(_reflect(np.asarray(self.velocity), point, direction, affine=False)),
            self.sigma0,
            label or self.label,
        )


def _reflect(v, point, direction, affine=True):
    u = np.asarray(direction, float)
    u = u / np.linalg.norm(u)
    p = np.asarray(point, float) if affine else np.zeros(2)
    r = np.asarray(v, float) - p
    return p + 2.0 * (r @ u) * u - r


class PacketTerms(NamedTuple):
    """log psi and its analytic derivatives for one packet."""
    log_psi: np.ndarray       # (...)
    grad_log: np.ndarray      # (..., 2)  gradient of log psi
    lap_over_psi: np.ndarray  # (...)     laplacian(psi) / psi


def packet_terms(p: PacketParams, x, t, need_lap: bool = True) -> PacketTerms:
    x = np.asarray(x, float)
    t = np.asarray(t, float)
    shape = np.broadcast_shapes(x.shape[:-1], t.shape)
    x = np.broadcast_to(x, shape + (2,))
    t = np.broadcast_to(t, shape)
    s2 = p.sigma0**2
    tau = t / (2.0 * s2)
    inv_a = (1.0 - 1j * tau) / (1.0 + tau * tau)
    (x0, y0), (vx, vy) = p.center0, p.velocity
    ux = x[..., 0] - x0 - vx * t
    uy = x[..., 1] - y0 - vy * t
    log_psi = (-0.5 * np.log(2.0 * np.pi * s2) - 0.5 * np.log1p(tau * tau)
               - (ux * ux + uy * uy) * inv_a / (4.0 * s2))
    log_psi = log_psi + 1j * (vx * (ux + 0.5 * vx * t) + vy * (uy + 0.5 * vy * t) - np.arctan(tau))
    k = -inv_a / (2.0 * s2)
    grad = np.empty(x.shape, complex)
    grad[..., 0] = k * ux + 1j * vx
    grad[..., 1] = k * uy + 1j * vy
    lap = None
    if need_lap:
        lap = grad[..., 0] ** 2 + grad[..., 1] ** 2 + 2.0 * k
    return PacketTerms(log_psi, grad, lap)


def packet_amplitude(p: PacketParams, x, t):
    """Exact free-particle Gaussian packet value at position(s) ``x``, time ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be >= 0")
    return np.exp(packet_terms(p, x, t).log_psi)


@dataclass(frozen=True)
class FieldConfig:
    packets: tuple[PacketParams, PacketParams]
    mode: str = "coherent"
    amplitudes: tuple[complex, complex] = (np.sqrt(0.5), np.sqrt(0.5))
    symmetric: bool = field(default=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if tuple(p.label for p in self.packets) != LABELS:
            raise ValueError("packets must be labelled ('c', 'd') in that order")
        object.__setattr__(self, "amplitudes", tuple(complex(a) for a in self.amplitudes))
        if self.symmetric and not self.is_mirror_symmetric():
            raise ValueError("symmetric flag set but the geometry is not mirror-symmetric")

    @property
    def c(self) -> PacketParams:
        return self.packets[0]

    @property
    def d(self) -> PacketParams:
        return self.packets[1]

    def with_mode(self, mode: str) -> FieldConfig:
        return FieldConfig(self.packets, mode, self.amplitudes, self.symmetric)

    # -- geometry -------------------------------------------------------
    def crossing_time(self) -> float:
        """Time of closest approach of the two packet centres."""
        dx = np.subtract(self.c.center0, self.d.center0)
        dv = np.subtract(self.c.velocity, self.d.velocity)
        vv = float(dv @ dv)
        return 0.0 if vv == 0.0 else max(0.0, float(-(dx @ dv) / vv))

    def crossing_point(self) -> np.ndarray:
        t = self.crossing_time()
        return 0.5 * (self.c.center(t) + self.d.center(t))

    def axis(self) -> tuple[np.ndarray, np.ndarray]:
        """(point, unit direction) of the beam-crossing axis."""
        direction = np.add(self.c.velocity, self.d.velocity)
        n = np.linalg.norm(direction)
        if n == 0.0:
            direction = np.subtract(self.c.center0, self.d.center0)[::-1] * (1, -1)
            n = np.linalg.norm(direction)
        point = 0.5 * np.add(self.c.center0, self.d.center0)
        return point, direction / n

    def transverse(self, x) -> np.ndarray:
        """Signed distance from the axis, positive on the side beam c starts on."""
        point, u = self.axis()
        normal = np.array([-u[1], u[0]])
        if (np.subtract(self.c.center0, point) @ normal) < 0:
            normal = -normal
        x = np.asarray(x, float)
        return (x[..., 0] - point[0]) * normal[0] + (x[..., 1] - point[1]) * normal[1]

    def mirror(self, x) -> np.ndarray:
        point, u = self.axis()
        x = np.asarray(x, float)
        r = x - point
        along = r[..., 0] * u[0] + r[..., 1] * u[1]
        return point + 2.0 * along[..., None] * u - r

    def is_mirror_symmetric(self, tol: float = 1e-12) -> bool:
        point, u = self.axis()
        m = self.c.mirrored(point, u, "d")
        return (np.allclose(m.center0, self.d.center0, atol=tol)
                and np.allclose(m.velocity, self.d.velocity, atol=tol)
                and abs(m.sigma0 - self.d.sigma0) < tol
                and abs(self.amplitudes[0] - self.amplitudes[1]) < tol)

    def packet_overlap(self) -> complex:
        """<psi_c | psi_d>, time independent under free evolution."""
        out = 1.0 + 0j
        a1 = 1.0 / (4.0 * self.c.sigma0**2)
        a2 = 1.0 / (4.0 * self.d.sigma0**2)
        for k in range(2):
            x1, p1 = self.c.center0[k], self.c.velocity[k]
            x2, p2 = self.d.center0[k], self.d.velocity[k]
            dx, dp = x1 - x2, p1 - p2
            real = (a1 * a2 * dx**2 + 0.25 * dp**2) / (a1 + a2)
            pref = np.sqrt(2.0 * np.sqrt(a1 * a2) / (a1 + a2))
            xc = (a1 * x1 + a2 * x2) / (a1 + a2)
            imag = (p1 * x1 - p2 * x2) - xc * dp
            out *= pref * np.exp(-real + 1j * imag)
        return complex(out)

    def total_norm(self) -> float:
        """Exact total probability of the field (cross term included)."""
        w = self.amplitudes
        n = abs(w[0]) ** 2 + abs(w[1]) ** 2
        if self.mode == "coherent":
            n += 2.0 * (np.conj(w[0]) * w[1] * self.packet_overlap()).real
        return float(n)

    def peak_density(self, t):
        """Largest density among the packet centres and their midpoint at ``t``.

        Vectorised over ``t``; used as the reference scale for density floors.
        """
        t = np.asarray(t, float)
        cc, cd = self.c.center(t), self.d.center(t)
        cands = np.stack([cc, cd, 0.5 * (cc + cd)])
        peak = np.max(density(self, cands, t), axis=0)
        return float(peak) if peak.ndim == 0 else peak


class FieldSample(NamedTuple):
    psi: Union[complex, tuple[complex, complex]]
    density: float
    at: tuple[tuple[float, float], float]


def branch_amplitudes(f: FieldConfig, x, t) -> np.ndarray:
    """Weighted per-beam amplitudes w_c psi_c and w_d psi_d, shape (2, ...)."""
    return np.stack([w * packet_amplitude(p, x, t) for w, p in zip(f.amplitudes, f.packets)])


def density(f: FieldConfig, x, t) -> np.ndarray:
    b = branch_amplitudes(f, x, t)
    if f.mode == "coherent":
        return np.abs(b[0] + b[1]) ** 2
    return np.abs(b[0]) ** 2 + np.abs(b[1]) ** 2


def psi(f: FieldConfig, x, t) -> np.ndarray:
    """Coherent superposition (only meaningful in coherent mode)."""
    b = branch_amplitudes(f, x, t)
    return b[0] + b[1]


def field_amplitude(f: FieldConfig, x, t: float) -> FieldSample:
    if t < 0:
        raise ValueError("t must be >= 0")
    x = np.asarray(x, float)
    b = branch_amplitudes(f, x, t)
    if f.mode == "coherent":
        amp = complex(b[0] + b[1])
        dens = abs(amp) ** 2
    else:
        amp = (complex(b[0]), complex(b[1]))
        dens = abs(amp[0]) ** 2 + abs(amp[1]) ** 2
    return FieldSample(amp, float(dens), ((float(x[0]), float(x[1])), float(t)))


def fringe_profile(f: FieldConfig, line: Segment, t: float, n: int,
                   node_tol: float = NODE_TOL) -> ScanCurve:
    """Density sampled along ``line`` at time ``t`` with located minima."""
    s, pts = line.samples(n)
    rates = density(f, pts, t)
    curve = build_curve(
        s, pts, rates,
        fn=lambda u: float(density(f, line.point(np.array([u]))[0], t)),
        node_tol=node_tol,
        meta={"mode": f.mode, "t": float(t), "fringe_free": f.mode == "incoherent"},
    )
    return curve


def default_field(mode: str = "coherent", sigma0: float = 2.0, offset: float = 20.0,
                  speed: tuple[float, float] = (10.0, 5.0), phase: float = 0.0) -> FieldConfig:
    """Symmetric two-beam scenario.

    Beam c leaves (0, +offset) with velocity (vx, -vy); beam d leaves
    (0, -offset) with (vx, +vy).  With the defaults the beams cross at (40, 0)
    at t = 4 with transverse wavenumber 5, i.e. fringe spacing pi/5.
    """
    vx, vy = speed
    c = PacketParams((0.0, offset), (vx, -vy), sigma0, "c")
    d = PacketParams((0.0, -offset), (vx, vy), sigma0, "d")
    w = np.sqrt(0.5)
    amps = (w, w * np.exp(1j * phase))
    return FieldConfig((c, d), mode, amps, symmetric=(phase == 0.0))
