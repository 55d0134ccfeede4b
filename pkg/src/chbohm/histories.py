"""Consistent-histories calculus for the two-beam interferometer.

The discrete model lives on five kets:

    sCD   particle before the beam splitter, both detectors ready
    cCD   particle in arm c,               both detectors ready
    dCD   particle in arm d,               both detectors ready
    C*D   detector C has fired
    CD*   detector D has fired

A history is a chain of projectors at increasing times, starting with the
initial-state projector at ``t0``.  Its chain vector is obtained by
alternating unitary evolution and projection; the decoherence functional is
the inner product of two chain vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    InconsistentFamily,
    NonOrthogonalSet,
    TimeLabelUnknown,
    ZeroProbabilityCondition,
)
from .hilbert import (
    Operator,
    StateVector,
    apply,
    basis_state,
    check_unitary,
    identity,
    inner,
    projector_from,
)

DEFAULT_TOL = 1e-10

BASIS = ("sCD", "cCD", "dCD", "C*D", "CD*")
VARIANTS = ("plain", "with_t3", "recombined")
COMPLETIONS = ("gram_schmidt", "rotated")

# Fixed seed for the "rotated" completion: any non-trivial unitary on the
# complement will do, it only has to be reproducible.
_ROTATION_SEED = 1729


def complete_unitary(
    partial: Mapping[str, StateVector],
    labels: Sequence[str],
    method: str = "gram_schmidt",
    name: str = "",
) -> Operator:
    """Extend an isometry defined on some basis kets to a full unitary.

    ``partial`` maps input basis labels to their (orthonormal) images.  The
    orthogonal complement of the images is built by Gram-Schmidt over the
    standard basis in label order.  With ``method="gram_schmidt"`` the
    complement vectors are assigned, in order, to the unspecified inputs;
    with ``method="rotated"`` they are first mixed by a fixed random unitary,
    giving a second, different completion.
    """
    labels = tuple(labels)
    n = len(labels)
    u = np.zeros((n, n), dtype=complex)
    images = []
    for lab, img in partial.items():
        if img.basis_labels != labels:
            raise DimensionMismatch("image basis does not match operator basis")
        u[:, labels.index(lab)] = img.amplitudes
        images.append(img.amplitudes)

    gram = np.array([[np.vdot(a, b) for b in images] for a in images]) if images else np.eye(0)
    if images and np.max(np.abs(gram - np.eye(len(images)))) > 1e-12:
        raise NonOrthogonalSet(f"images of {name!r} are not orthonormal")

    complement = []
    basis_vecs = list(images)
    for k in range(n):
        v = np.zeros(n, dtype=complex)
        v[k] = 1.0
        for b in basis_vecs:
            v = v - np.vdot(b, v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v = v / nv
            basis_vecs.append(v)
            complement.append(v)

    free = [lab for lab in labels if lab not in partial]
    assert len(free) == len(complement)
    if complement:
        comp = np.array(complement).T
        if method == "rotated":
            rng = np.random.default_rng(_ROTATION_SEED)
            z = rng.normal(size=(len(free), len(free))) + 1j * rng.normal(size=(len(free), len(free)))
            q, r = np.linalg.qr(z)
            q = q * (np.diag(r) / np.abs(np.diag(r)))
            comp = comp @ q
        elif method != "gram_schmidt":
            raise ValueError(f"unknown completion method {method!r}")
        for j, lab in enumerate(free):
            u[:, labels.index(lab)] = comp[:, j]
    return Operator(u, labels, kind="unitary", name=name)


@dataclass(frozen=True, eq=False)
class Model:
    basis_labels: tuple[str, ...]
    initial_state: StateVector
    times: tuple[str, ...]
    unitaries: Mapping[tuple[str, str], Operator]
    projectors: Mapping[str, Operator] = field(default_factory=dict)
    variant: str = "custom"

    def __post_init__(self):
        if abs(self.initial_state.norm() - 1.0) > 1e-12:
            raise ValueError("initial state must be normalized")
        if len(set(self.times)) != len(self.times):
            raise ValueError("model times must be distinct")
        for a, b in zip(self.times, self.times[1:]):
            op = self.unitaries.get((a, b))
            if op is None:
                raise ValueError(f"missing unitary for {a}->{b}")
            if not check_unitary(op, 1e-12):
                raise ValueError(f"U({b},{a}) is not unitary")

    @property
    def space_dim(self) -> int:
        return len(self.basis_labels)

    def propagator(self, t_from: str, t_to: str) -> Operator:
        """U(t_to, t_from) composed from the adjacent-time unitaries."""
        i, j = self._index(t_from), self._index(t_to)
        if j < i:
            raise ValueError(f"{t_to} precedes {t_from}")
        u = identity(self.basis_labels)
        for a, b in zip(self.times[i:j], self.times[i + 1:j + 1]):
            u = self.unitaries[(a, b)] @ u
        return u

    def projector(self, name: str) -> Operator:
        try:
            return self.projectors[name]
        except KeyError:
            raise KeyError(f"model has no projector named {name!r}; "
                           f"known: {sorted(self.projectors)}") from None

    def history(self, choices: Mapping[str, str]) -> History:
        """History from a ``{time: projector name}`` mapping; ``t0`` is implicit."""
        steps = [(self.times[0], "psi0", self.projector("psi0"))]
        for t in sorted(choices, key=self._index):
            steps.append((t, choices[t], self.projector(choices[t])))
        return History(tuple(steps))

    def family(self, per_time: Mapping[str, Sequence[str]]) -> Family:
        sets = {t: [(nm, self.projector(nm)) for nm in per_time[t]]
                for t in sorted(per_time, key=self._index)}
        return enumerate_family_histories(sets, (self.times[0], "psi0", self.projector("psi0")))

    def _index(self, t: str) -> int:
        try:
            return self.times.index(t)
        except ValueError:
            raise TimeLabelUnknown(f"time {t!r} not in model times {self.times}") from None


@dataclass(frozen=True, eq=False)
class History:
    steps: tuple[tuple[str, str, Operator], ...]

    @property
    def times(self) -> tuple[str, ...]:
        return tuple(s[0] for s in self.steps)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s[1] for s in self.steps)

    def at(self, t: str) -> Optional[str]:
        for time, nm, _ in self.steps:
            if time == t:
                return nm
        return None

    @property
    def label(self) -> str:
        return " x ".join(f"{nm}@{t}" for t, nm, _ in self.steps)

    def __repr__(self):
        return f"History({self.label})"


@dataclass(frozen=True, eq=False)
class Family:
    histories: tuple[History, ...]
    per_time: Mapping[str, tuple[tuple[str, Operator], ...]]

    @property
    def times(self) -> tuple[str, ...]:
        return self.histories[0].times

    def completeness(self) -> dict[str, bool]:
        """Whether the projectors at each time sum to the identity."""
        out = {}
        for t, ops in self.per_time.items():
            total = sum(op.matrix for _, op in ops)
            out[t] = bool(np.allclose(total, np.eye(total.shape[0]), atol=1e-12))
        return out

    def select(self, event: Event) -> list[int]:
        return [i for i, h in enumerate(self.histories) if _matches(h, event)]


Event = Mapping[str, Union[str, Iterable[str]]]


def _matches(h: History, event: Event) -> bool:
    for t, names in event.items():
        if t not in h.times:
            raise TimeLabelUnknown(f"event refers to {t!r}, family times are {h.times}")
        allowed = {names} if isinstance(names, str) else set(names)
        if h.at(t) not in allowed:
            return False
    return True


def enumerate_family_histories(
    per_time_projector_sets: Mapping[str, Sequence[tuple[str, Operator]]],
    initial: tuple[str, str, Operator],
) -> Family:
    """All histories of the Cartesian product of per-time projector choices."""
    for t, ops in per_time_projector_sets.items():
        for (n1, p1), (n2, p2) in itertools.combinations(ops, 2):
            if np.max(np.abs(p1.matrix @ p2.matrix)) > 1e-12:
                raise NonOrthogonalSet(f"projectors {n1!r} and {n2!r} at {t} are not orthogonal")
    times = list(per_time_projector_sets)
    histories = []
    for combo in itertools.product(*(per_time_projector_sets[t] for t in times)):
        steps = [initial] + [(t, nm, op) for t, (nm, op) in zip(times, combo)]
        histories.append(History(tuple(steps)))
    per_time = {t: tuple(ops) for t, ops in per_time_projector_sets.items()}
    return Family(tuple(histories), per_time)


def build_standard_model(variant: str = "plain", completion: str = "gram_schmidt") -> Model:
    """The interferometer model in one of three variants.

    plain       t0 -> t1 -> t2: beam splitter, then each arm fires its detector.
    with_t3     t0 -> t1 -> t3 -> t2 with identity evolution t1 -> t3.
    recombined  t0 -> t1 -> t3 -> t2 where t1 -> t3 is a 50/50 mixer of the
                two arms, standing in for a detector placed inside the
                overlap region.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    ket = {lab: basis_state(BASIS, lab) for lab in BASIS}
    r2 = np.sqrt(0.5)

    split = complete_unitary({"sCD": (ket["cCD"] + ket["dCD"]) * r2}, BASIS, completion, "U_split")
    detect = complete_unitary({"cCD": ket["C*D"], "dCD": ket["CD*"]}, BASIS, completion, "U_detect")

    if variant == "plain":
        times = ("t0", "t1", "t2")
        unitaries = {("t0", "t1"): split, ("t1", "t2"): detect}
    else:
        times = ("t0", "t1", "t3", "t2")
        if variant == "with_t3":
            middle = identity(BASIS)
        else:
            middle = complete_unitary(
                {"cCD": (ket["cCD"] + ket["dCD"]) * r2, "dCD": (ket["cCD"] - ket["dCD"]) * r2},
                BASIS, completion, "U_mix",
            )
        unitaries = {("t0", "t1"): split, ("t1", "t3"): middle, ("t3", "t2"): detect}

    c_fired = projector_from(ket["C*D"], "C*")
    d_fired = projector_from(ket["CD*"], "D*")
    eye = np.eye(len(BASIS))
    projectors = {
        "psi0": projector_from(ket["sCD"], "psi0"),
        "s": projector_from(ket["sCD"], "s"),
        "c": projector_from(ket["cCD"], "c"),
        "d": projector_from(ket["dCD"], "d"),
        "c+d": projector_from((ket["cCD"] + ket["dCD"]) * r2, "c+d"),
        "c-d": projector_from((ket["cCD"] - ket["dCD"]) * r2, "c-d"),
        "C*": c_fired,
        "D*": d_fired,
        # detector C (D) has not fired
        "C": Operator(eye - c_fired.matrix, BASIS, kind="projector", name="C"),
        "D": Operator(eye - d_fired.matrix, BASIS, kind="projector", name="D"),
    }
    return Model(BASIS, ket["sCD"], times, unitaries, projectors, variant)


def build_detector_model(alpha_c: complex, alpha_d: complex,
                         completion: str = "gram_schmidt") -> Model:
    """Plain-variant model whose detector C responds to both arms.

    Arm c (d) reaches "C fired" with amplitude proportional to ``alpha_c``
    (``alpha_d``); the pair is normalized and the orthogonal combination
    goes to "D fired".  ``(1, 0)`` reproduces the plain model; equal and
    opposite amplitudes put detector C on a node of the interference pattern.
    """
    a = np.array([alpha_c, alpha_d], complex)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("detector amplitudes cannot both vanish")
    a_c, a_d = a / n
    base = build_standard_model("plain", completion)
    ket = {lab: basis_state(BASIS, lab) for lab in BASIS}
    detect = complete_unitary(
        {"cCD": ket["C*D"] * a_c - ket["CD*"] * np.conj(a_d),
         "dCD": ket["C*D"] * a_d + ket["CD*"] * np.conj(a_c)},
        BASIS, completion, "U_local",
    )
    unitaries = {("t0", "t1"): base.unitaries[("t0", "t1")], ("t1", "t2"): detect}
    return Model(BASIS, base.initial_state, base.times, unitaries, base.projectors, "local")


def _check_history(m: Model, h: History) -> None:
    idx = [m._index(t) for t in h.times]
    if idx[0] != 0:
        raise TimeLabelUnknown(f"history must start at {m.times[0]}, starts at {h.times[0]}")
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise TimeLabelUnknown(f"history times {h.times} are not increasing in {m.times}")
    for _, _, op in h.steps:
        if op.basis_labels != m.basis_labels:
            raise DimensionMismatch("history projector basis does not match the model")


def chain_vector(m: Model, h: History) -> StateVector:
    """P_n U(t_n, t_{n-1}) ... P_1 U(t_1, t_0) P_0 |initial>, unnormalized."""
    _check_history(m, h)
    t_prev, _, p0 = h.steps[0]
    vec = apply(p0, m.initial_state)
    for t, _, p in h.steps[1:]:
        vec = apply(p, apply(m.propagator(t_prev, t), vec))
        t_prev = t
    return vec


def weight(m: Model, h: History) -> float:
    v = chain_vector(m, h)
    return float(np.real(inner(v, v)))


def decoherence_functional(m: Model, h1: History, h2: History) -> complex:
    if h1.times != h2.times:
        raise TimeLabelUnknown(f"histories have different times: {h1.times} vs {h2.times}")
    return inner(chain_vector(m, h2), chain_vector(m, h1))


@dataclass(frozen=True)
class ConsistencyReport:
    offdiag_max_abs: float
    offdiag_max_realpart: float
    consistent_medium: bool
    consistent_weak: bool
    weights: dict[str, float]
    decoherence_matrix: np.ndarray = field(repr=False)
    dynamically_impossible: tuple[str, ...] = ()
    complete: dict[str, bool] = field(default_factory=dict)
    tol: float = DEFAULT_TOL

    def consistent(self, mode: str = "medium") -> bool:
        if mode == "medium":
            return self.consistent_medium
        if mode == "weak":
            return self.consistent_weak
        raise ValueError(f"unknown consistency mode {mode!r}")

    def to_dict(self) -> dict:
        d = self.decoherence_matrix
        return {
            "offdiag_max_abs": self.offdiag_max_abs,
            "offdiag_max_realpart": self.offdiag_max_realpart,
            "consistent_medium": self.consistent_medium,
            "consistent_weak": self.consistent_weak,
            "tol": self.tol,
            "weights": dict(self.weights),
            "dynamically_impossible": list(self.dynamically_impossible),
            "complete": dict(self.complete),
            "decoherence_matrix": {
                "real": d.real.tolist(),
                "imag": d.imag.tolist(),
            },
        }


def decoherence_matrix(m: Model, f: Family) -> np.ndarray:
    vecs = np.array([chain_vector(m, h).amplitudes for h in f.histories])
    # D[i, j] = <chain_j | chain_i>
    return vecs @ vecs.conj().T


def consistency_report(m: Model, f: Family, tol: float = DEFAULT_TOL) -> ConsistencyReport:
    d = decoherence_matrix(m, f)
    n = d.shape[0]
    off = d[~np.eye(n, dtype=bool)]
    max_abs = float(np.max(np.abs(off))) if off.size else 0.0
    max_re = float(np.max(np.abs(off.real))) if off.size else 0.0
    diag = np.real(np.diag(d))
    weights = {h.label: float(w) for h, w in zip(f.histories, diag)}
    impossible = tuple(h.label for h, w in zip(f.histories, diag) if w < tol)
    return ConsistencyReport(
        offdiag_max_abs=max_abs,
        offdiag_max_realpart=max_re,
        consistent_medium=max_abs < tol,
        consistent_weak=max_re < tol,
        weights=weights,
        decoherence_matrix=d,
        dynamically_impossible=impossible,
        complete=f.completeness(),
        tol=tol,
    )


def event_probability(m: Model, f: Family, event: Event, tol: float = DEFAULT_TOL,
                      mode: str = "medium") -> float:
    report = consistency_report(m, f, tol)
    if not report.consistent(mode):
        raise InconsistentFamily(
            f"family is not {mode}-consistent (max |D| off-diagonal = {report.offdiag_max_abs:.3g})",
            report,
        )
    w = list(report.weights.values())
    return float(sum(w[i] for i in f.select(event)))


def conditional_probability(
    m: Model,
    f: Family,
    given: Event,
    condition: Event,
    tol: float = DEFAULT_TOL,
    mode: str = "medium",
) -> float:
    """Pr(given | condition) within a single consistent family.

    Events are ``{time: name or names}`` constraints; an event is the union
    of all histories of ``f`` that satisfy every constraint.
    """
    report = consistency_report(m, f, tol)
    if not report.consistent(mode):
        raise InconsistentFamily(
            f"family is not {mode}-consistent (max |D| off-diagonal = {report.offdiag_max_abs:.3g})",
            report,
        )
    w = list(report.weights.values())
    cond = set(f.select(condition))
    both = cond & set(f.select(given))
    denom = sum(w[i] for i in cond)
    if denom < tol:
        raise ZeroProbabilityCondition(f"Pr(condition) = {denom:.3g} is below tol = {tol:g}")
    return float(sum(w[i] for i in both) / denom)
