"""Experiments runnable from a scenario file.

Each experiment returns an ``Outcome`` whose report is written as
``<experiment>.json``; data files go next to it.  Reports contain no
timings or paths so that a fixed seed gives byte-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import output
from .bohm import GuidanceField, StepControl, trajectory_bundle
from .curves import Segment
from .errors import InconsistentFamily, ZeroProbabilityCondition
from .histories import (
    COMPLETIONS,
    build_detector_model,
    build_standard_model,
    conditional_probability,
    consistency_report,
    weight,
)
from .scan import DetectorSpec, sweep
from .scenario import Scenario
from .wavefield import FieldConfig, branch_amplitudes, density, fringe_profile


@dataclass
class Outcome:
    result: dict
    checks: list[dict] = field(default_factory=list)
    numerical_failure: Optional[str] = None

    def check(self, name: str, value, expected, ok: bool) -> None:
        self.checks.append({"name": name, "value": value, "expected": expected, "pass": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks) and self.numerical_failure is None


def _other_completion(c: str) -> str:
    return next(x for x in COMPLETIONS if x != c)


# -- discrete histories ------------------------------------------------------

def histories_report(sc: Scenario, out: Path, threads: int = 1) -> Outcome:
    tol, ctol = sc.model["tol"], sc.model["check_tol"]
    m = build_standard_model(sc.model["variant"], sc.model["completion"])
    alt = build_standard_model(sc.model["variant"], _other_completion(sc.model["completion"]))
    res = Outcome({"variant": m.variant, "completion": sc.model["completion"], "families": {}})
    for spec in sc.families:
        fam = m.family(spec["sets"])
        rep = consistency_report(m, fam, tol)
        rep_alt = consistency_report(alt, alt.family(spec["sets"]), tol)
        diff = float(np.max(np.abs(rep.decoherence_matrix - rep_alt.decoherence_matrix)))
        entry = rep.to_dict()
        entry["histories"] = [h.label for h in fam.histories]
        entry["completion_difference"] = diff
        res.result["families"][spec["name"]] = entry
        nm = spec["name"]
        res.check(f"{nm}: completion independence", diff, f"< {ctol:g}", diff < ctol)
        if spec["expect_consistent"] is not None:
            res.check(f"{nm}: consistent", rep.consistent_medium, spec["expect_consistent"],
                      rep.consistent_medium == spec["expect_consistent"])
        if spec["expect_weights"] is not None:
            w = list(rep.weights.values())
            exp = [float(x) for x in spec["expect_weights"]]
            ok = len(w) == len(exp) and max(abs(a - b) for a, b in zip(w, exp)) < ctol
            res.check(f"{nm}: weights", w, exp, ok)
        if spec["expect_offdiag"] is not None:
            v, e = rep.offdiag_max_abs, spec["expect_offdiag"]
            res.check(f"{nm}: max |off-diagonal|", v, e, abs(v - e) < ctol)
    return res


def _conditional(m, sets, c, tol):
    try:
        return conditional_probability(m, m.family(sets), c["given"], c["condition"], tol)
    except (InconsistentFamily, ZeroProbabilityCondition) as exc:
        return type(exc).__name__


def conditional_probabilities(sc: Scenario, out: Path, threads: int = 1) -> Outcome:
    tol, ctol = sc.model["tol"], sc.model["check_tol"]
    m = build_standard_model(sc.model["variant"], sc.model["completion"])
    alt = build_standard_model(sc.model["variant"], _other_completion(sc.model["completion"]))
    families = {f["name"]: f["sets"] for f in sc.families}
    res = Outcome({"variant": m.variant, "conditionals": []})
    for c in sc.conditionals:
        sets = families[c["family"]]
        value = _conditional(m, sets, c, tol)
        other = _conditional(alt, sets, c, tol)
        label = f"Pr({_event(c['given'])} | {_event(c['condition'])}) in {c['family']}"
        res.result["conditionals"].append({"label": label, "value": value, "other_completion": other})
        if c["expect"] is not None:
            ok = all(isinstance(v, float) and abs(v - c["expect"]) < ctol for v in (value, other))
            res.check(label, value, c["expect"], ok)
        else:
            res.check(label, value, c["expect_error"], value == other == c["expect_error"])
    return res


def _event(ev: dict) -> str:
    parts = []
    for t, names in ev.items():
        names = [names] if isinstance(names, str) else names
        parts.append("|".join(names) + f"@{t}")
    return " & ".join(parts)


# -- wavefield and detector ----------------------------------------------------

def _curve_rows(curve):
    for i in range(len(curve.s)):
        row = [curve.s[i], curve.positions[i, 0], curve.positions[i, 1], curve.rates[i]]
        if curve.overlaps is not None:
            row.append(abs(curve.overlaps[i]))
        yield row


def _spacing_check(res: Outcome, label: str, curve, expected: Optional[float]) -> None:
    if expected is None:
        return
    sp = curve.spacing("nodes")
    ok = bool(np.isfinite(sp)) and abs(sp / expected - 1.0) < 0.05
    res.check(f"{label}: node spacing", sp, f"{expected:.6g} +- 5%", ok)


def _node_count_checks(res: Outcome, label: str, k: int, lo: Optional[int], hi: Optional[int]) -> None:
    if lo is not None:
        res.check(f"{label}: nodes >= {lo}", k, lo, k >= lo)
    if hi is not None:
        res.check(f"{label}: nodes <= {hi}", k, hi, k <= hi)


def fringe_profile_experiment(sc: Scenario, out: Path, threads: int = 1) -> Outcome:
    f = sc.field_config()
    spec = sc.fringe
    t = f.crossing_time() if spec["t"] is None else spec["t"]
    line = Segment(tuple(spec["start"]), tuple(spec["end"]))
    curve = fringe_profile(f, line, t, spec["n"])
    output.write_csv(out / "fringe_profile.csv", ["s", "x", "y", "density"], _curve_rows(curve))
    output.line_plot_svg(out / "fringe_profile.svg", curve.s, curve.rates,
                         f"density along the profile at t = {t:g} ({f.mode})",
                         "arc length", "density", markers=curve.nodes)
    res = Outcome({
        "mode": f.mode, "t": t, "start": spec["start"], "end": spec["end"], "n": spec["n"],
        "minima": curve.minima, "nodes": curve.nodes, "max_density": curve.max_rate,
        "node_spacing": curve.spacing("nodes") if curve.nodes.size >= 2 else None,
    })
    _node_count_checks(res, "profile", int(curve.nodes.size), spec["expect_nodes_min"], spec["expect_nodes_max"])
    _spacing_check(res, "profile", curve, spec["expect_spacing"])
    return res


def local_histories(f: FieldConfig, point, t: float, completion: str, tol: float) -> dict:
    """Discrete detector model whose C-response mirrors the beam amplitudes at ``point``.

    Reports Pr(C fires), the which-path family's consistency and two
    conditionals: Pr(c at t1 | C fired) in the which-path family and
    Pr(c+d at t1 | C fired) in the superposition family.
    """
    b = branch_amplitudes(f, np.asarray(point, float), t)
    # the discrete split has equal moduli; any relative phase stays in a_d
    a_c, a_d = b[0] / abs(f.amplitudes[0]), b[1] / abs(f.amplitudes[1])
    m = build_detector_model(complex(a_c), complex(a_d), completion)
    which = m.family({"t1": ["c", "d"], "t2": ["C*", "D*"]})
    rep = consistency_report(m, which, tol)
    pr_c_fired = weight(m, m.history({"t2": "C*"}))
    out = {"position": [float(point[0]), float(point[1])], "t": float(t),
           "pr_C_fired": pr_c_fired, "which_path_offdiag": rep.offdiag_max_abs}
    for key, sets, given in (
        ("which_path", {"t1": ["c", "d"], "t2": ["C*", "D*"]}, {"t1": "c"}),
        ("superposition", {"t1": ["c+d", "c-d"], "t2": ["C*", "D*"]}, {"t1": "c+d"}),
    ):
        try:
            out[key] = conditional_probability(m, m.family(sets), given, {"t2": "C*"}, tol)
        except (InconsistentFamily, ZeroProbabilityCondition) as exc:
            out[key] = type(exc).__name__
    return out


def _point_node(f: FieldConfig, line: Segment, s: float, t: float, halfwidth: float = 0.01):
    """Zero of the point density next to a count-rate node.

    The aperture-averaged rate is flat to rounding error within about 1e-6
    of a node, so the node is re-located on the density itself.
    """
    res = minimize_scalar(lambda u: float(density(f, line.point(np.array([u]))[0], t)),
                          bounds=(s - halfwidth, s + halfwidth), method="bounded",
                          options={"xatol": 1e-12})
    return line.point(np.array([res.x]))[0]


def detector_sweep(sc: Scenario, out: Path, threads: int = 1) -> Outcome:
    f = sc.field_config()
    res = Outcome({"mode": f.mode, "sweeps": {}})
    for spec in sc.sweeps:
        nm = spec["name"]
        when = spec["time"] if spec["time"] is not None else tuple(spec["window"])
        d = DetectorSpec(tuple(spec["start"]), spec["aperture"], when)
        line = Segment(tuple(spec["start"]), tuple(spec["end"]))
        curve = sweep(f, line, d, spec["n"], node_tol=spec["node_tol"])
        header = ["s", "x", "y", "rate"] + (["overlap_abs"] if curve.overlaps is not None else [])
        output.write_csv(out / f"sweep_{nm}.csv", header, _curve_rows(curve))
        output.line_plot_svg(out / f"sweep_{nm}.svg", curve.s, curve.rates,
                             f"count rate, sweep {nm} ({f.mode})", "arc length", "rate",
                             markers=curve.nodes)
        lo, hi = float(np.min(curve.rates)), float(np.max(curve.rates))
        variation = (hi - lo) / hi if hi > 0 else float("nan")
        entry = {
            "start": spec["start"], "end": spec["end"], "n": spec["n"], "aperture": spec["aperture"],
            "sample_time": when, "nodes": curve.nodes, "minima": curve.minima,
            "max_rate": hi, "min_rate": lo, "variation": variation,
            "node_spacing": curve.spacing("nodes") if curve.nodes.size >= 2 else None,
            "max_overlap_abs": float(np.max(np.abs(curve.overlaps))) if curve.overlaps is not None else None,
        }
        _node_count_checks(res, nm, int(curve.nodes.size), spec["expect_nodes_min"], spec["expect_nodes_max"])
        _spacing_check(res, nm, curve, spec["expect_spacing"])
        if spec["expect_variation_max"] is not None:
            res.check(f"{nm}: rate variation", variation, f"< {spec['expect_variation_max']:g}",
                      variation < spec["expect_variation_max"])
        if spec["histories_at_nodes"]:
            if isinstance(when, tuple):
                raise ValueError("histories_at_nodes needs an instantaneous sweep")
            tol = sc.model["tol"]
            ref = local_histories(f, curve.positions[0], when, sc.model["completion"], tol)
            at_nodes = [local_histories(f, _point_node(f, line, s, when), when, sc.model["completion"], tol)
                        for s in curve.nodes]
            entry["histories_reference"] = ref
            entry["histories_at_nodes"] = at_nodes
            if spec["expect_reference_which_path"] is not None:
                v, e = ref["which_path"], spec["expect_reference_which_path"]
                res.check(f"{nm}: which-arm conditional at sweep start", v, e,
                          isinstance(v, float) and abs(v - e) < sc.model["check_tol"])
            if at_nodes:
                undefined = [h["superposition"] for h in at_nodes]
                res.check(f"{nm}: conditioning on C fired undefined at every node",
                          sorted(set(undefined)), "ZeroProbabilityCondition",
                          all(u == "ZeroProbabilityCondition" for u in undefined))
        res.result["sweeps"][nm] = entry
    return res


# -- trajectories --------------------------------------------------------------

def lone_beam_path(f: FieldConfig, packet: int, start, times, t0: float) -> np.ndarray:
    """Bohm path in a single free Gaussian: the start's offset from the packet
    centre scales with the packet width."""
    p = f.packets[packet]
    offset = np.asarray(start, float) - p.center(t0)
    scale = p.width(np.asarray(times)) / p.width(t0)
    return p.center(np.asarray(times)) + scale[:, None] * offset


def straightness(f: FieldConfig, bundle, t0: float) -> dict:
    """Deviation of each trajectory from its undeflected lone-beam path, and
    from the chord joining its ends, outside a sigma0 neighbourhood of launch."""
    dev_path = np.zeros(bundle.n)
    dev_chord = np.zeros(bundle.n)
    sigma0 = f.c.sigma0
    for i in range(bundle.n):
        pts = bundle.points[i]
        keep = np.all(np.isfinite(pts), axis=-1)
        pts, times = pts[keep], bundle.t_out[keep]
        far = np.hypot(*(pts - pts[0]).T) > sigma0
        if not np.any(far):
            continue
        ref = lone_beam_path(f, int(bundle.start_packet[i]), bundle.starts[i], times, t0)
        dev_path[i] = np.max(np.hypot(*(pts[far] - ref[far]).T))
        chord = pts[-1] - pts[0]
        u = chord / np.linalg.norm(chord)
        rel = pts[far] - pts[0]
        dev_chord[i] = np.max(np.abs(rel[:, 0] * u[1] - rel[:, 1] * u[0]))
    return {"max_deviation_from_free_path": float(dev_path.max()),
            "max_deviation_from_chord": float(dev_chord.max()),
            "mean_deviation_from_chord": float(dev_chord.mean())}


def trajectory_bundle_experiment(sc: Scenario, out: Path, threads: int = 1) -> Outcome:
    f = sc.field_config()
    spec = sc.bundle
    g = GuidanceField(f)
    ctrl = StepControl(tol=spec["tol"])
    b = trajectory_bundle(g, spec["n"], spec["t0"], spec["t1"], ctrl, seed=sc.seed,
                          sampler=spec["sampler"], assignment=spec["assignment"],
                          n_out=spec["n_out"], threads=threads)
    rows = []
    for i in range(min(spec["csv_trajectories"], b.n)):
        for t, (x, y) in zip(b.t_out, b.points[i]):
            if np.isfinite(x):
                rows.append([i, "cd"[b.start_packet[i]], t, x, y])
    pts = np.array([[r[3], r[4]] for r in rows]) if rows else np.zeros((0, 2))
    rho = density(f, pts, np.array([r[2] for r in rows])) if rows else np.zeros(0)
    output.write_csv(out / "trajectories.csv", ["traj_id", "start_packet", "t", "x", "y", "density"],
                     ([*r, d] for r, d in zip(rows, rho)))
    drawn = []
    for i in range(min(spec["svg_trajectories"], b.n)):
        keep = np.all(np.isfinite(b.points[i]), axis=-1)
        drawn.append((b.points[i][keep], "cd"[b.start_packet[i]]))
    output.overlay_svg(out / "overlay.svg", f, drawn, f"Bohm trajectories ({f.mode})")

    summary = b.summary()
    res = Outcome({"summary": summary})
    truncated = float(np.mean(b.truncated))
    if truncated > spec["max_truncated_fraction"]:
        res.numerical_failure = (f"{truncated:.3%} of trajectories truncated at nodes "
                                 f"(threshold {spec['max_truncated_fraction']:.3%})")
    res.result["truncated_fraction"] = truncated
    if spec["expect_axis_crossings"] is not None:
        k = int(b.axis_crossings.sum())
        res.check("symmetry-axis crossings", k, spec["expect_axis_crossings"], k == spec["expect_axis_crossings"])
    from_c = b.start_packet == 0
    undecided_c = float(np.mean(b.endpoint_class[from_c] == "undecided")) if np.any(from_c) else 0.0
    for key, cls in (("expect_c_to_d", "D_side"), ("expect_c_to_c", "C_side")):
        if spec[key] is not None:
            frac = b.decided_fraction(cls, "c")
            res.check(f"beam c ends {cls}", frac, spec[key], abs(frac - spec[key]) < 1e-12)
            res.check("beam c undecided fraction", undecided_c, f"< {spec['max_undecided']:g}",
                      undecided_c < spec["max_undecided"])
    if spec["expect_split"] is not None:
        frac = b.decided_fraction("C_side")
        res.check("overall C_side fraction", frac, f"{spec['expect_split']:g} +- {spec['split_tol']:g}",
                  abs(frac - spec["expect_split"]) <= spec["split_tol"])
    if spec["expect_straight_dev"] is not None:
        st = straightness(f, b, spec["t0"])
        res.result["straightness"] = st
        v = st["max_deviation_from_free_path"]
        res.check("deviation from undeflected path", v, f"< {spec['expect_straight_dev']:g}",
                  v < spec["expect_straight_dev"])
    return res


RUNNERS: dict[str, Callable[[Scenario, Path, int], Outcome]] = {
    "histories-report": histories_report,
    "conditional-probabilities": conditional_probabilities,
    "fringe-profile": fringe_profile_experiment,
    "trajectory-bundle": trajectory_bundle_experiment,
    "detector-sweep": detector_sweep,
}
