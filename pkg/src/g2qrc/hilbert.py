"""Truncated-Fock-space and two-level operator algebra.

Dense complex matrices on composite Hilbert spaces: mode operators embedded
by identity factors, tensor products, common single-mode states, expectation
values and the zero-delay second-order coherence g2(0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.special

from .errors import (
    AnnihilatedStateError,
    SpaceMismatchError,
    TruncationLeakError,
    VacuumStateError,
)

BOSON = "boson"
TWO_LEVEL = "two_level"

HERMITICITY_TOL = 1e-9
TRACE_TOL = 1e-7
PSD_TOL = 1e-7
N_FLOOR = 1e-8


@dataclass(frozen=True)
class ModeSpec:
    """One mode of a composite space: a truncated boson or a two-level system."""

    label: str
    kind: str
    truncation: int = 2

    def __post_init__(self):
        if self.kind not in (BOSON, TWO_LEVEL):
            raise ValueError(f"unknown mode kind {self.kind!r}")
        if self.kind == BOSON and self.truncation < 2:
            raise ValueError("boson truncation must be >= 2")
        if self.kind == TWO_LEVEL and self.truncation != 2:
            raise ValueError("two-level modes have dimension exactly 2")

    @property
    def dim(self) -> int:
        return self.truncation


def boson(label: str, truncation: int) -> ModeSpec:
    return ModeSpec(label, BOSON, truncation)


def two_level(label: str) -> ModeSpec:
    return ModeSpec(label, TWO_LEVEL, 2)


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of modes; all operators agree on the ordering."""

    modes: tuple[ModeSpec, ...]

    def __post_init__(self):
        labels = [m.label for m in self.modes]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels: {labels}")
        if self.dim < 2:
            raise ValueError("space dimension must be >= 2")

    @property
    def dim(self) -> int:
        d = 1
        for m in self.modes:
            d *= m.dim
        return d

    def index(self, label: str) -> int:
        for i, m in enumerate(self.modes):
            if m.label == label:
                return i
        raise KeyError(f"no mode labeled {label!r}")

    def mode(self, label: str) -> ModeSpec:
        return self.modes[self.index(label)]

    def subspace(self, labels) -> "HilbertSpace":
        """Space of the given modes, preserving this space's ordering."""
        keep = set(labels)
        return HilbertSpace(tuple(m for m in self.modes if m.label in keep))


def space(*modes: ModeSpec) -> HilbertSpace:
    return HilbertSpace(tuple(modes))


@dataclass(frozen=True)
class Operator:
    """Dense operator on a HilbertSpace."""

    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} != space dim {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __add__(self, other: "Operator") -> "Operator":
        _check_space(self, other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_space(self, other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_space(self, other)
        return Operator(self.space, self.matrix @ other.matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite state on a HilbertSpace."""

    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise ValueError(f"matrix shape {m.shape} != space dim {self.space.dim}")
        object.__setattr__(self, "matrix", m)

    def validate(self, check_psd: bool = True) -> "DensityMatrix":
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > HERMITICITY_TOL:
            raise ValueError(f"density matrix not Hermitian: max|rho-rho^dag|={herm:.3e}")
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr:.12g} deviates from 1")
        if check_psd and min_eigenvalue(self) < -PSD_TOL:
            raise ValueError(f"density matrix not PSD: min eig {min_eigenvalue(self):.3e}")
        return self


def _check_space(a, b):
    if a.space != b.space:
        raise SpaceMismatchError("operands live on different spaces")


def identity(hs: HilbertSpace) -> Operator:
    return Operator(hs, np.eye(hs.dim, dtype=complex))


def _single_mode_matrix(mode: ModeSpec, which: str) -> np.ndarray:
    d = mode.dim
    if mode.kind == BOSON:
        if which == "annihilate":
            return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
        if which == "create":
            return np.diag(np.sqrt(np.arange(1, d, dtype=float)), -1).astype(complex)
        if which == "number":
            return np.diag(np.arange(d, dtype=float)).astype(complex)
        raise ValueError(f"operator {which!r} undefined for boson mode {mode.label!r}")
    if which == "lower":
        return np.array([[0, 1], [0, 0]], dtype=complex)
    if which == "raise":
        return np.array([[0, 0], [1, 0]], dtype=complex)
    raise ValueError(f"operator {which!r} undefined for two-level mode {mode.label!r}")


def embed(hs: HilbertSpace, label: str, local: np.ndarray) -> Operator:
    """Embed a single-mode matrix into the full space by identity factors."""
    idx = hs.index(label)
    mat = np.eye(1, dtype=complex)
    for i, m in enumerate(hs.modes):
        factor = local if i == idx else np.eye(m.dim, dtype=complex)
        mat = np.kron(mat, factor)
    return Operator(hs, mat)


def mode_operator(hs: HilbertSpace, label: str, which: str) -> Operator:
    """Single-mode ladder/number operator embedded in the full space."""
    mode = hs.mode(label)
    return embed(hs, label, _single_mode_matrix(mode, which))


def tensor(*objs):
    """Kronecker product of Operators or DensityMatrices on disjoint spaces."""
    if not objs:
        raise ValueError("tensor of nothing")
    kinds = {type(o) for o in objs}
    if len(kinds) != 1:
        raise TypeError("tensor arguments must all be Operators or all DensityMatrices")
    modes: list[ModeSpec] = []
    for o in objs:
        modes.extend(o.space.modes)
    joint = HilbertSpace(tuple(modes))  # raises on label collision
    mat = np.eye(1, dtype=complex)
    for o in objs:
        mat = np.kron(mat, o.matrix)
    return type(objs[0])(joint, mat)


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr[op rho]."""
    _check_space(rho, op)
    return complex(np.einsum("ij,ji->", op.matrix, rho.matrix))


def occupation(rho: DensityMatrix, a: Operator) -> float:
    """Tr[a^dag a rho], real part."""
    return expectation(rho, a.dag() @ a).real


def second_order_coherence(rho: DensityMatrix, a: Operator) -> float:
    """g2(0) = Tr[a^dag a^dag a a rho] / Tr[a^dag a rho]^2 for the given mode."""
    _check_space(rho, a)
    n = expectation(rho, a.dag() @ a)
    if n.real < N_FLOOR:
        raise VacuumStateError(
            f"vacuum-dominated state, g2 undefined (occupation {n.real:.3e})"
        )
    num = expectation(rho, a.dag() @ a.dag() @ a @ a)
    if abs(num.imag) > 1e-9 or abs(n.imag) > 1e-9:
        raise ValueError(f"non-real moment in g2: {num!r}, {n!r}")
    return num.real / n.real**2


def matrix_exp(op: Operator) -> Operator:
    """Matrix exponential (scaling-and-squaring, via scipy)."""
    if not np.all(np.isfinite(op.matrix)):
        raise ValueError("non-finite entries in matrix_exp input")
    return Operator(op.space, scipy.linalg.expm(op.matrix))


def apply_and_normalize(rho: DensityMatrix, op: Operator) -> DensityMatrix:
    """op rho op^dag renormalized to unit trace."""
    _check_space(rho, op)
    out = op.matrix @ rho.matrix @ op.matrix.conj().T
    tr = np.trace(out).real
    if tr < 1e-12:
        raise AnnihilatedStateError(f"state annihilated by operator (trace {tr:.3e})")
    return DensityMatrix(rho.space, out / tr)


def min_eigenvalue(rho: DensityMatrix) -> float:
    """Smallest eigenvalue of the Hermitian part of rho."""
    herm = (rho.matrix + rho.matrix.conj().T) / 2
    return float(np.linalg.eigvalsh(herm)[0])


def partial_trace(rho: DensityMatrix, keep_labels) -> DensityMatrix:
    """Trace out all modes not in keep_labels (order preserved)."""
    keep = [m.label in set(keep_labels) for m in rho.space.modes]
    dims = [m.dim for m in rho.space.modes]
    n = len(dims)
    t = rho.matrix.reshape(dims + dims)
    # contract dropped modes pairwise, starting from the last axis
    for i in reversed(range(n)):
        if not keep[i]:
            t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    sub = rho.space.subspace(keep_labels)
    return DensityMatrix(sub, t.reshape(sub.dim, sub.dim))


def reduce_operator(op: Operator, keep_labels) -> Operator:
    """Restrict an operator acting trivially outside keep_labels to that subspace.

    Valid only when op = A (x) identity on the dropped modes; this is checked
    by reconstructing the embedding.
    """
    sub = op.space.subspace(keep_labels)
    drop_dim = op.space.dim // sub.dim
    keep = [m.label in set(keep_labels) for m in op.space.modes]
    dims = [m.dim for m in op.space.modes]
    n = len(dims)
    t = op.matrix.reshape(dims + dims)
    for i in reversed(range(n)):
        if not keep[i]:
            t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    reduced = Operator(sub, t.reshape(sub.dim, sub.dim) / drop_dim)
    check = _embed_on(op.space, keep, reduced.matrix)
    if np.max(np.abs(check - op.matrix)) > 1e-10:
        raise ValueError("operator acts nontrivially on a dropped mode")
    return reduced


def _embed_on(hs: HilbertSpace, keep: list[bool], sub_matrix: np.ndarray) -> np.ndarray:
    """Embed a matrix acting on the kept modes (in space order) back into hs."""
    dims = [m.dim for m in hs.modes]
    n = len(dims)
    kept_dims = [d for d, k in zip(dims, keep) if k]
    drop_dims = [d for d, k in zip(dims, keep) if not k]
    drop_dim = int(np.prod(drop_dims)) if drop_dims else 1
    # kron puts kept axes first, dropped axes last; permute back to space order
    perm = [i for i, k in enumerate(keep) if k] + [i for i, k in enumerate(keep) if not k]
    inv = list(np.argsort(perm))
    t = np.kron(sub_matrix, np.eye(drop_dim)).reshape(
        kept_dims + drop_dims + kept_dims + drop_dims
    )
    return t.transpose(inv + [n + j for j in inv]).reshape(hs.dim, hs.dim)


# ---------------------------------------------------------------------------
# common single-mode states

def fock_state(n: int, truncation: int, label: str = "a") -> DensityMatrix:
    if n >= truncation:
        raise ValueError("Fock level outside truncation")
    hs = space(boson(label, truncation))
    mat = np.zeros((truncation, truncation), dtype=complex)
    mat[n, n] = 1.0
    return DensityMatrix(hs, mat)


def coherent_state(alpha: complex, truncation: int, label: str = "a",
                   leak_tol: float = 1e-10) -> DensityMatrix:
    """|alpha><alpha| in the truncated Fock basis, renormalized."""
    k = np.arange(truncation)
    log_coeff = k * np.log(np.abs(alpha) + (np.abs(alpha) == 0)) - 0.5 * scipy.special.gammaln(k + 1)
    amps = np.exp(log_coeff - np.abs(alpha) ** 2 / 2) * np.exp(1j * k * np.angle(alpha))
    if alpha == 0:
        amps = np.zeros(truncation, dtype=complex)
        amps[0] = 1.0
    norm = np.sum(np.abs(amps) ** 2)
    if 1.0 - norm > leak_tol:
        raise TruncationLeakError(
            f"coherent state tail {1 - norm:.3e} exceeds {leak_tol:g} at truncation {truncation}"
        )
    amps = amps / np.sqrt(norm)
    hs = space(boson(label, truncation))
    return DensityMatrix(hs, np.outer(amps, amps.conj()))


def thermal_state(nbar: float, truncation: int, label: str = "a",
                  leak_tol: float = 1e-10) -> DensityMatrix:
    """Geometric photon-number distribution with mean nbar, renormalized."""
    hs = space(boson(label, truncation))
    if nbar == 0:
        return fock_state(0, truncation, label)
    k = np.arange(truncation)
    w = (nbar / (nbar + 1.0)) ** k / (nbar + 1.0)
    tail = 1.0 - w.sum()
    if tail > leak_tol:
        raise TruncationLeakError(
            f"thermal state tail {tail:.3e} exceeds {leak_tol:g} at truncation {truncation}"
        )
    return DensityMatrix(hs, np.diag(w / w.sum()).astype(complex))


def vacuum_state(hs: HilbertSpace) -> DensityMatrix:
    mat = np.zeros((hs.dim, hs.dim), dtype=complex)
    mat[0, 0] = 1.0
    return DensityMatrix(hs, mat)
