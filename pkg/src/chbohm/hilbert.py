"""Dense complex linear algebra on small labelled Hilbert spaces.

Vectors and operators carry their basis labels; every binary operation checks
that the labels agree so that kets from different stages of the
interferometer cannot be mixed up silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NotNormalized

UNITARY_TOL = 1e-12
PROJECTOR_TOL = 1e-12
NORMALIZATION_TOL = 1e-9


def _frozen(a, dtype=complex):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    basis_labels: tuple[str, ...]

    def __post_init__(self):
        amps = _frozen(self.amplitudes)
        labels = tuple(self.basis_labels)
        if amps.ndim != 1 or amps.size < 1:
            raise DimensionMismatch("amplitudes must be a non-empty 1D array")
        if amps.size != len(labels):
            raise DimensionMismatch(
                f"{amps.size} amplitudes but {len(labels)} basis labels"
            )
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def __getitem__(self, label: str) -> complex:
        return complex(self.amplitudes[self.basis_labels.index(label)])

    def __add__(self, other: StateVector) -> StateVector:
        _check_basis(self.basis_labels, other.basis_labels)
        return StateVector(self.amplitudes + other.amplitudes, self.basis_labels)

    def __sub__(self, other: StateVector) -> StateVector:
        _check_basis(self.basis_labels, other.basis_labels)
        return StateVector(self.amplitudes - other.amplitudes, self.basis_labels)

    def __mul__(self, scalar) -> StateVector:
        return StateVector(self.amplitudes * scalar, self.basis_labels)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> StateVector:
        return StateVector(self.amplitudes / scalar, self.basis_labels)

    def normalized(self) -> StateVector:
        n = self.norm()
        if n == 0.0:
            raise NotNormalized("cannot normalize the zero vector")
        return self / n

    def allclose(self, other: StateVector, atol: float = 1e-12) -> bool:
        _check_basis(self.basis_labels, other.basis_labels)
        return bool(np.allclose(self.amplitudes, other.amplitudes, rtol=0.0, atol=atol))

    def __repr__(self):
        terms = [
            f"({a.real:+.6g}{a.imag:+.6g}j)|{lab}>"
            for a, lab in zip(self.amplitudes, self.basis_labels)
            if a != 0
        ]
        return "StateVector(" + (" ".join(terms) or "0") + ")"


@dataclass(frozen=True, eq=False)
class Operator:
    """Square matrix on a labelled basis.

    ``kind`` is an optional tag ("unitary" or "projector"); tagged operators
    are validated at construction.
    """

    matrix: np.ndarray
    basis_labels: tuple[str, ...]
    kind: Optional[str] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        mat = _frozen(self.matrix)
        labels = tuple(self.basis_labels)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"operator matrix must be square, got {mat.shape}")
        if mat.shape[0] != len(labels):
            raise DimensionMismatch(
                f"{mat.shape[0]}-dimensional matrix but {len(labels)} basis labels"
            )
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "basis_labels", labels)
        if self.kind == "unitary" and not check_unitary(self, UNITARY_TOL):
            raise ValueError(f"operator {self.name!r} tagged unitary is not unitary")
        if self.kind == "projector" and not is_projector(self, PROJECTOR_TOL):
            raise ValueError(f"operator {self.name!r} tagged projector is not a projector")
        if self.kind not in (None, "unitary", "projector"):
            raise ValueError(f"unknown operator kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dagger(self) -> Operator:
        return Operator(self.matrix.conj().T, self.basis_labels, self.kind, self.name + "†")

    def __matmul__(self, other: Operator) -> Operator:
        _check_basis(self.basis_labels, other.basis_labels)
        return Operator(self.matrix @ other.matrix, self.basis_labels)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


def _check_basis(a: Sequence[str], b: Sequence[str]) -> None:
    if tuple(a) != tuple(b):
        raise DimensionMismatch(f"basis mismatch: {tuple(a)} vs {tuple(b)}")


def basis_state(labels: Sequence[str], which: str) -> StateVector:
    labels = tuple(labels)
    amps = np.zeros(len(labels), dtype=complex)
    amps[labels.index(which)] = 1.0
    return StateVector(amps, labels)


def identity(labels: Sequence[str]) -> Operator:
    labels = tuple(labels)
    return Operator(np.eye(len(labels)), labels, kind="unitary", name="I")


def inner(a: StateVector, b: StateVector) -> complex:
    """<a|b>, antilinear in the first argument."""
    _check_basis(a.basis_labels, b.basis_labels)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def apply(op: Operator, s: StateVector) -> StateVector:
    _check_basis(op.basis_labels, s.basis_labels)
    return StateVector(op.matrix @ s.amplitudes, s.basis_labels)


def projector_from(s: StateVector, name: str = "") -> Operator:
    """|s><s| for a normalized ``s``."""
    n = s.norm()
    if abs(n - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"state has norm {n!r}; projector_from needs a unit vector")
    return Operator(np.outer(s.amplitudes, s.amplitudes.conj()), s.basis_labels,
                    kind="projector", name=name)


def projector_onto(states: Sequence[StateVector], name: str = "") -> Operator:
    """Projector onto the span of mutually orthonormal states."""
    if not states:
        raise ValueError("need at least one state")
    labels = states[0].basis_labels
    mat = np.zeros((len(labels), len(labels)), dtype=complex)
    for s in states:
        mat = mat + projector_from(s).matrix
    return Operator(mat, labels, kind="projector", name=name)


def check_unitary(op: Operator, tol: float) -> bool:
    m = op.matrix
    err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
    return bool(err < tol)


def is_projector(op: Operator, tol: float = PROJECTOR_TOL) -> bool:
    m = op.matrix
    return bool(np.max(np.abs(m @ m - m)) < tol and np.max(np.abs(m - m.conj().T)) < tol)
