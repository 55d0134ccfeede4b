"""Bohm guidance dynamics on the two-beam wavefield.

With psi = R exp(iS) and hbar = m = 1 the particle velocity is
v = grad S = Im(grad psi / psi), and the quantum potential is
Q = -(1/2) lap R / R = -(1/2) [Re(lap psi / psi) + |Im(grad psi / psi)|^2].

In incoherent mode each particle carries a label (0 = beam c, 1 = beam d)
and is guided by its own beam only.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import NodeEncountered, NodeRegion
from .wavefield import FieldConfig, density, packet_terms

COHERENT = -1
PACKET_INDEX = {"c": 0, "d": 1}
ENDPOINT_CLASSES = ("C_side", "D_side", "undecided")

# Fehlberg 4(5) tableau; the 4th-order solution is propagated.
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_B5 = np.array([16 / 135, 0.0, 6656 / 12825, 28561 / 56430, -9 / 50, 2 / 55])


@dataclass(frozen=True)
class GuidanceField:
    source: FieldConfig
    density_floor: float = 1e-12   # relative to the instantaneous peak density

    @property
    def mode(self) -> str:
        return self.source.mode

    @property
    def beam_speed(self) -> float:
        return float(max(np.hypot(*p.velocity) for p in self.source.packets))

    def peak_scale(self, t, assign=None):
        """Analytic peak-density scale at time(s) ``t``.

        Coherent: (sum_p |w_p| sqrt(peak_p))^2, the exact peak when the beams
        coincide and at most 4x the true peak otherwise.  Incoherent with an
        assignment: the assigned beam's own peak.
        """
        f = self.source
        t = np.asarray(t, float)
        peaks = np.stack([abs(w) ** 2 * p.peak_density(t) for w, p in zip(f.amplitudes, f.packets)])
        if self.mode == "coherent" or assign is None:
            return np.sum(np.sqrt(peaks), axis=0) ** 2
        return np.take_along_axis(peaks, np.asarray(assign)[None, ...], axis=0)[0]

    def floor(self, t, assign=None):
        """Absolute density floor at time(s) ``t``."""
        return self.density_floor * self.peak_scale(t, assign)


@dataclass(frozen=True)
class StepControl:
    tol: float = 1e-8            # local error per step (length units)
    h0: float = 1e-2
    h_min: float = 1e-10
    h_max: float = 0.05
    caution_density: float = 1e-6    # relative to peak
    caution_speed: float = 10.0      # multiple of the beam speed
    h_caution: float = 1e-3
    max_iterations: int = 2_000_000


class _Guide(NamedTuple):
    velocity: np.ndarray   # (N, 2)
    density: np.ndarray    # (N,) density the velocity was derived from
    ok: np.ndarray         # (N,) density above floor and finite velocity


def _assignments(g: GuidanceField, assign, n):
    if assign is None:
        if g.mode == "incoherent":
            raise ValueError("incoherent guidance needs a packet assignment ('c' or 'd')")
        return np.full(n, COHERENT)
    if isinstance(assign, str):
        assign = PACKET_INDEX[assign]
    a = np.broadcast_to(np.asarray(assign, int), (n,))
    if g.mode == "coherent":
        # the summed wavefunction guides every particle
        return np.full(n, COHERENT)
    return a


def _derivatives(g: GuidanceField, x, t, assign, need_lap: bool = True):
    """grad psi / psi, lap psi / psi and the guiding density at each point."""
    f = g.source
    tc = packet_terms(f.c, x, t, need_lap)
    td = packet_terms(f.d, x, t, need_lap)
    lc = tc.log_psi + np.log(f.amplitudes[0])
    ld = td.log_psi + np.log(f.amplitudes[1])
    coh = assign == COHERENT
    if np.all(coh):
        m = np.maximum(lc.real, ld.real)
        ec = np.exp(lc - m)
        ed = np.exp(ld - m)
        s = ec + ed
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = (ec[:, None] * tc.grad_log + ed[:, None] * td.grad_log) / s[:, None]
            lap = (ec * tc.lap_over_psi + ed * td.lap_over_psi) / s if need_lap else None
        dens = (s.real**2 + s.imag**2) * np.exp(2.0 * m)
        return grad, lap, dens
    if np.any(coh):
        raise ValueError("mixed coherent and assigned guidance in one call")
    is_c = (assign == 0)
    grad = np.where(is_c[:, None], tc.grad_log, td.grad_log)
    lap = np.where(is_c, tc.lap_over_psi, td.lap_over_psi) if need_lap else None
    dens = np.exp(2.0 * np.where(is_c, lc.real, ld.real))
    return grad, lap, dens


def _guide(g: GuidanceField, x, t, assign) -> _Guide:
    grad, _, dens = _derivatives(g, x, t, assign, need_lap=False)
    v = grad.imag
    floor = g.floor(t, None if g.mode == "coherent" else assign)
    ok = (dens > floor) & np.all(np.isfinite(v), axis=-1)
    return _Guide(v, dens, ok)


def _as_points(x):
    x = np.asarray(x, float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def velocity(g: GuidanceField, x, t: float, assignment=None) -> np.ndarray:
    """Guidance velocity Im(grad psi / psi) at point(s) ``x``.

    Raises NodeRegion if any point lies where the density is below the floor.
    """
    pts, single = _as_points(x)
    a = _assignments(g, assignment, len(pts))
    res = _guide(g, pts, np.full(len(pts), float(t)), a)
    if not np.all(res.ok):
        raise NodeRegion(f"density below floor at {pts[~res.ok][0].tolist()}, t={t}")
    return res.velocity[0] if single else res.velocity


class QuantumPotentialSample(NamedTuple):
    q: float
    at: tuple[tuple[float, float], float]


def quantum_potential_values(g: GuidanceField, x, t, assignment=None) -> np.ndarray:
    pts, single = _as_points(x)
    t = np.broadcast_to(np.asarray(t, float), (len(pts),))
    a = _assignments(g, assignment, len(pts))
    grad, lap, dens = _derivatives(g, pts, t, a)
    floor = g.floor(t, None if g.mode == "coherent" else a)
    if np.any(~(dens > floor)):
        raise NodeRegion("amplitude below floor")
    q = -0.5 * (lap.real + np.sum(grad.imag**2, axis=-1))
    return q[0] if single else q


def quantum_potential(g: GuidanceField, x, t: float, assignment=None) -> QuantumPotentialSample:
    q = quantum_potential_values(g, x, t, assignment)
    return QuantumPotentialSample(float(q), ((float(x[0]), float(x[1])), float(t)))


# -- trajectories ------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    densities: np.ndarray
    start: tuple[tuple[float, float], str]
    endpoint_class: str
    min_density_seen: float
    axis_crossings: int = 0
    n_steps: int = 0
    truncated: bool = False

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]


@dataclass
class _Batch:
    t_out: np.ndarray
    points: np.ndarray        # (N, n_out, 2), NaN after truncation
    min_density: np.ndarray
    crossings: np.ndarray
    n_steps: np.ndarray
    truncated: np.ndarray
    last_point: np.ndarray    # (N, 2)
    last_time: np.ndarray


def _combine(b, ks):
    # fixed-order elementwise sum: BLAS reductions may round differently with
    # batch size, which would make results depend on the thread split
    acc = b[0] * ks[0]
    for bi, ki in zip(b[1:], ks[1:]):
        if bi != 0.0:
            acc = acc + bi * ki
    return acc


def _integrate_batch(g: GuidanceField, starts, assign, t_out, ctrl: StepControl) -> _Batch:
    f = g.source
    n, n_out = len(starts), len(t_out)
    pos = np.array(starts, float)
    t = np.full(n, t_out[0])
    h = np.full(n, ctrl.h0)
    nxt = np.ones(n, int)
    out = np.full((n, n_out, 2), np.nan)
    out[:, 0] = pos
    status = np.zeros(n, int)          # 0 running, 1 done, 2 truncated
    crossings = np.zeros(n, int)
    steps = np.zeros(n, int)
    side = np.sign(f.transverse(pos))
    speed_lim = ctrl.caution_speed * g.beam_speed
    min_dens = _guide(g, pos, t, assign).density.copy()
    if n_out == 1:
        status[:] = 1

    for _ in range(ctrl.max_iterations):
        act = np.nonzero(status == 0)[0]
        if act.size == 0:
            break
        ta, xa, aa = t[act], pos[act], assign[act]
        target = t_out[nxt[act]]
        ha = np.minimum(h[act], target - ta)
        clipped = ha < h[act]

        ks = []
        bad = np.zeros(act.size, bool)
        caution = np.zeros(act.size, bool)
        dmin = np.full(act.size, np.inf)
        for i in range(6):
            xi = xa.copy()
            for j, aij in enumerate(_A[i]):
                xi += (ha * aij)[:, None] * ks[j]
            ti = ta + _C[i] * ha
            res = _guide(g, xi, ti, aa)
            v = np.where(res.ok[:, None], res.velocity, 0.0)
            ks.append(v)
            bad |= ~res.ok
            peak = g.peak_scale(ti, None if g.mode == "coherent" else aa)
            caution |= (res.density < ctrl.caution_density * peak) | (np.hypot(v[:, 0], v[:, 1]) > speed_lim)
            dmin = np.minimum(dmin, res.density)
        y4 = xa + ha[:, None] * _combine(_B4, ks)
        y5 = xa + ha[:, None] * _combine(_B5, ks)
        err = np.hypot(*(y5 - y4).T)
        bad |= ~np.isfinite(err)
        too_bold = caution & (ha > ctrl.h_caution)
        accept = ~bad & ~too_bold & (err <= ctrl.tol)

        with np.errstate(divide="ignore"):
            fac = np.clip(0.9 * (ctrl.tol / err) ** 0.2, 0.2, 5.0)
        fac = np.where(bad | too_bold | ~np.isfinite(fac), 0.5, fac)
        h_new = np.minimum(ha * fac, ctrl.h_max)
        # a step shortened to land on an output time should not shrink h
        h_new = np.where(accept & clipped & ~bad, np.maximum(h_new, np.minimum(h[act], ctrl.h_max)), h_new)
        h[act] = h_new

        acc = act[accept]
        if acc.size:
            new_pos = y4[accept]
            reached = clipped[accept] | (ha[accept] >= target[accept] - ta[accept])
            t_new = np.where(reached, target[accept], ta[accept] + ha[accept])
            new_side = np.sign(f.transverse(new_pos))
            crossings[acc] += (new_side * side[acc] < 0)
            side[acc] = np.where(new_side != 0, new_side, side[acc])
            pos[acc] = new_pos
            t[acc] = t_new
            steps[acc] += 1
            min_dens[acc] = np.minimum(min_dens[acc], dmin[accept])
            hit = acc[reached]
            out[hit, nxt[hit]] = pos[hit]
            nxt[hit] += 1
            status[hit[nxt[hit] >= n_out]] = 1

        failed = act[~accept & (h_new < ctrl.h_min)]
        status[failed] = 2
    else:
        raise RuntimeError("trajectory integration exceeded max_iterations")

    return _Batch(t_out, out, min_dens, crossings, steps, status == 2, pos, t)


def _classify(f: FieldConfig, end_points, t1: float, band: Optional[float] = None) -> np.ndarray:
    if band is None:
        band = f.c.sigma0 / 10.0
    tr = f.transverse(end_points)
    c_sign = np.sign(f.transverse(f.c.center(t1)))
    if c_sign == 0:
        c_sign = -1.0
    out = np.where(tr * c_sign > band, "C_side", np.where(tr * c_sign < -band, "D_side", "undecided"))
    return np.where(np.isfinite(tr), out, "undecided")


def integrate_trajectory(g: GuidanceField, start, assignment=None, t0: float = 0.0,
                         t1: float = 8.0, ctrl: StepControl = StepControl(),
                         n_out: int = 401, raise_on_node: bool = True) -> Trajectory:
    """Integrate one Bohm trajectory from ``start`` at ``t0`` to ``t1``.

    The polyline is recorded at ``n_out`` equally spaced times (the adaptive
    stepper lands exactly on each of them).
    """
    start = np.asarray(start, float)
    a = _assignments(g, assignment, 1)
    t_out = np.linspace(t0, t1, n_out)
    res = _guide(g, start[None], np.array([t0]), a)
    if not res.ok[0]:
        raise NodeRegion(f"start {start.tolist()} lies below the density floor")
    batch = _integrate_batch(g, start[None], a, t_out, ctrl)
    traj = _trajectory_from_batch(g, batch, 0, start, _label(g, assignment, start))
    if traj.truncated and raise_on_node:
        err = NodeEncountered(f"trajectory from {start.tolist()} truncated at t={traj.times[-1]:.6g}")
        err.trajectory = traj
        raise err
    return traj


def _label(g: GuidanceField, assignment, start) -> str:
    if isinstance(assignment, str):
        return assignment
    if assignment is not None and int(assignment) in (0, 1):
        return "cd"[int(assignment)]
    return "c" if g.source.transverse(start) > 0 else "d"


def _trajectory_from_batch(g: GuidanceField, b: _Batch, i: int, start, label: str) -> Trajectory:
    f = g.source
    keep = np.all(np.isfinite(b.points[i]), axis=-1)
    times = b.t_out[keep]
    pts = b.points[i][keep]
    if b.truncated[i]:
        times = np.append(times, b.last_time[i])
        pts = np.vstack([pts, b.last_point[i]])
        cls = "undecided"
    else:
        cls = str(_classify(f, pts[-1], times[-1]))
    dens = density(f, pts, times)
    return Trajectory(
        times=times, points=pts, densities=dens,
        start=((float(start[0]), float(start[1])), label),
        endpoint_class=cls,
        min_density_seen=float(b.min_density[i]),
        axis_crossings=int(b.crossings[i]),
        n_steps=int(b.n_steps[i]),
        truncated=bool(b.truncated[i]),
    )


# -- bundles -----------------------------------------------------------------

def sample_initial(f: FieldConfig, n: int, t0: float = 0.0, seed: int = 0,
                   method: str = "sobol", assignment: str = "mixture"):
    """Draw ``n`` start points from the beam mixture density at ``t0``.

    Returns (points (n, 2), packet index (n,)).  The mixture
    sum_p |w_p|^2 |psi_p|^2 equals |psi|^2 up to the packet cross term,
    which is negligible while the beams are separated.  ``method`` is
    "sobol" (scrambled, seeded low-discrepancy points) or "iid".
    """
    if method == "sobol":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            u = qmc.Sobol(d=3, scramble=True, seed=np.random.default_rng(seed)).random(n)
    elif method == "iid":
        u = np.random.default_rng(seed).random((n, 3))
    else:
        raise ValueError(f"unknown sampler {method!r}")
    u = np.clip(u, 1e-16, 1 - 1e-16)
    w2 = np.array([abs(a) ** 2 for a in f.amplitudes])
    if assignment == "mixture":
        packet = np.where(u[:, 0] < w2[0] / w2.sum(), 0, 1)
    elif assignment in PACKET_INDEX:
        packet = np.full(n, PACKET_INDEX[assignment])
    else:
        raise ValueError(f"unknown assignment {assignment!r}")
    pts = np.empty((n, 2))
    for idx, p in enumerate(f.packets):
        sel = packet == idx
        pts[sel] = p.center(t0) + p.width(t0) * ndtri(u[sel, 1:])
    return pts, packet


@dataclass
class BundleReport:
    mode: str
    t_out: np.ndarray
    starts: np.ndarray
    start_packet: np.ndarray
    points: np.ndarray
    endpoint_class: np.ndarray
    axis_crossings: np.ndarray
    truncated: np.ndarray
    min_density: np.ndarray
    n_steps: np.ndarray
    max_turning_angle: np.ndarray     # radians, vs the initial heading
    transverse_reversals: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.starts)

    def fractions(self, packet: Optional[str] = None) -> dict[str, float]:
        sel = np.ones(self.n, bool) if packet is None else self.start_packet == PACKET_INDEX[packet]
        cls = self.endpoint_class[sel]
        total = max(cls.size, 1)
        return {k: float(np.count_nonzero(cls == k)) / total for k in ENDPOINT_CLASSES}

    def decided_fraction(self, cls: str, packet: Optional[str] = None) -> float:
        """Fraction ending in ``cls`` among trajectories that are not undecided."""
        sel = np.ones(self.n, bool) if packet is None else self.start_packet == PACKET_INDEX[packet]
        c = self.endpoint_class[sel]
        decided = c[c != "undecided"]
        return float(np.mean(decided == cls)) if decided.size else float("nan")

    def positions_at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.t_out - t)))
        if abs(self.t_out[k] - t) > 1e-12:
            raise ValueError(f"t={t} is not an output time")
        pts = self.points[:, k]
        return pts[np.all(np.isfinite(pts), axis=-1)]

    def trajectory(self, g: GuidanceField, i: int) -> Trajectory:
        pts = self.points[i]
        keep = np.all(np.isfinite(pts), axis=-1)
        return Trajectory(
            times=self.t_out[keep], points=pts[keep],
            densities=density(g.source, pts[keep], self.t_out[keep]),
            start=(tuple(map(float, self.starts[i])), "cd"[self.start_packet[i]]),
            endpoint_class=str(self.endpoint_class[i]),
            min_density_seen=float(self.min_density[i]),
            axis_crossings=int(self.axis_crossings[i]),
            n_steps=int(self.n_steps[i]),
            truncated=bool(self.truncated[i]),
        )

    def summary(self) -> dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "fractions": self.fractions(),
            "fractions_from_c": self.fractions("c") if np.any(self.start_packet == 0) else None,
            "fractions_from_d": self.fractions("d") if np.any(self.start_packet == 1) else None,
            "axis_crossings_total": int(self.axis_crossings.sum()),
            "trajectories_crossing_axis": int(np.count_nonzero(self.axis_crossings)),
            "truncated": int(self.truncated.sum()),
            "max_turning_angle_deg": {
                "mean": float(np.degrees(np.mean(self.max_turning_angle))),
                "max": float(np.degrees(np.max(self.max_turning_angle))),
            },
            "transverse_reversals_mean": float(np.mean(self.transverse_reversals)),
            **self.meta,
        }


def kink_statistics(points: np.ndarray, f: FieldConfig) -> tuple[np.ndarray, np.ndarray]:
    """(max turning angle vs initial heading, transverse-velocity sign reversals)."""
    seg = np.diff(points, axis=1)
    ang = np.arctan2(seg[..., 1], seg[..., 0])
    turn = np.abs(np.angle(np.exp(1j * (ang - ang[:, :1]))))
    turn = np.where(np.isfinite(turn), turn, 0.0)
    tr = f.transverse(points)
    dtr = np.sign(np.diff(tr, axis=1))
    dtr = np.where(np.isfinite(dtr), dtr, 0.0)
    rev = np.zeros(len(points), int)
    for i, row in enumerate(dtr):
        nz = row[row != 0]
        rev[i] = int(np.count_nonzero(nz[1:] != nz[:-1]))
    return np.max(turn, axis=1), rev


def trajectory_bundle(g: GuidanceField, n: int, t0: float = 0.0, t1: float = 8.0,
                      ctrl: StepControl = StepControl(), seed: int = 0,
                      sampler: str = "sobol", assignment: str = "mixture",
                      n_out: int = 401, threads: int = 1,
                      extra_times: Sequence[float] = ()) -> BundleReport:
    """Integrate ``n`` trajectories with starts sampled from the density at ``t0``.

    Per-trajectory integration is independent, so the result does not depend
    on ``threads``; chunks are contiguous index ranges of the same sample.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    f = g.source
    starts, packet = sample_initial(f, n, t0, seed, sampler, assignment)
    t_out = np.union1d(np.linspace(t0, t1, n_out), np.asarray(extra_times, float))
    a = packet if g.mode == "incoherent" else np.full(n, COHERENT)

    chunks = np.array_split(np.arange(n), max(1, min(threads, n)))
    if len(chunks) == 1:
        batches = [_integrate_batch(g, starts, a, t_out, ctrl)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            batches = list(ex.map(lambda idx: _integrate_batch(g, starts[idx], a[idx], t_out, ctrl), chunks))

    pts = np.concatenate([b.points for b in batches])
    truncated = np.concatenate([b.truncated for b in batches])
    ends = pts[:, -1]
    cls = _classify(f, ends, t1)
    cls = np.where(truncated, "undecided", cls)
    turn, rev = kink_statistics(pts, f)
    return BundleReport(
        mode=g.mode,
        t_out=t_out,
        starts=starts,
        start_packet=packet,
        points=pts,
        endpoint_class=cls,
        axis_crossings=np.concatenate([b.crossings for b in batches]),
        truncated=truncated,
        min_density=np.concatenate([b.min_density for b in batches]),
        n_steps=np.concatenate([b.n_steps for b in batches]),
        max_turning_angle=turn,
        transverse_reversals=rev,
        meta={"seed": seed, "sampler": sampler, "assignment": assignment,
              "t0": float(t0), "t1": float(t1), "tol": ctrl.tol},
    )


# -- equivariance ------------------------------------------------------------

def support_box(f: FieldConfig, t: float, widths: float = 5.0) -> tuple[tuple[float, float], tuple[float, float]]:
    """Bounding box of both packets' +-``widths`` standard deviations at ``t``."""
    lo, hi = np.full(2, np.inf), np.full(2, -np.inf)
    for p in f.packets:
        c, s = p.center(t), p.width(t)
        lo = np.minimum(lo, c - widths * s)
        hi = np.maximum(hi, c + widths * s)
    return (float(lo[0]), float(hi[0])), (float(lo[1]), float(hi[1]))


def bin_probabilities(f: FieldConfig, t: float, xedges, yedges, order: int = 10) -> np.ndarray:
    """Integral of the density over each rectangular bin (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(order)

    def axis_nodes(edges):
        lo, hi = np.asarray(edges[:-1]), np.asarray(edges[1:])
        half = 0.5 * (hi - lo)
        pts = 0.5 * (hi + lo)[:, None] + half[:, None] * nodes
        return pts, half[:, None] * weights

    xp, xw = axis_nodes(xedges)
    yp, yw = axis_nodes(yedges)
    X = np.broadcast_to(xp[:, None, :, None], (len(xp), len(yp), order, order))
    Y = np.broadcast_to(yp[None, :, None, :], X.shape)
    rho = density(f, np.stack([X, Y], axis=-1), t)
    return np.einsum("ijab,ia,jb->ij", rho, xw, yw)


def equivariance_tv(f: FieldConfig, positions: np.ndarray, t: float, bins: int = 40,
                    box=None) -> float:
    """Total-variation distance between the particle histogram and |psi(t)|^2."""
    if box is None:
        box = support_box(f, t)
    xedges = np.linspace(*box[0], bins + 1)
    yedges = np.linspace(*box[1], bins + 1)
    counts, _, _ = np.histogram2d(positions[:, 0], positions[:, 1], bins=(xedges, yedges))
    p_hat = counts / len(positions)
    p = bin_probabilities(f, t, xedges, yedges)
    p = p / p.sum()
    return float(0.5 * np.abs(p_hat - p).sum())
