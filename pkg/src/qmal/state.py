"""Sparse Hermitian density matrices over MAL bases and derived quantities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .basis import BasisIndex
from .errors import (
    BasisMismatch,
    NotInBasis,
    OutOfRangeExpectation,
    RefNotPure,
    UnweightedPattern,
    ZeroProbabilityMass,
)

ALGEBRA_TOL = 1e-12


class _SparseHermitian:
    """Shared storage: only the upper triangle (row <= col) plus diagonal is
    kept; mirrored cells are reached through conjugation."""

    __slots__ = ("basis", "entries")

    def __init__(self, basis: BasisIndex, entries: dict | None = None):
        self.basis = basis
        self.entries = entries if entries is not None else {}

    def get(self, row: int, col: int) -> complex:
        if row <= col:
            return self.entries.get((row, col), 0.0 + 0.0j)
        return self.entries.get((col, row), 0.0 + 0.0j).conjugate()

    def accumulate(self, row: int, col: int, value: complex):
        """Fold a cell into triangular storage, preserving Hermiticity."""
        if row > col:
            row, col, value = col, row, value.conjugate()
        key = (row, col)
        new = self.entries.get(key, 0.0 + 0.0j) + value
        if new == 0.0:
            self.entries.pop(key, None)
        else:
            self.entries[key] = new

    def items_upper(self) -> Iterator[tuple]:
        return iter(self.entries.items())

    def items_full(self) -> Iterator[tuple]:
        """Yield ((row, col), value) for both triangles."""
        for (i, j), v in self.entries.items():
            yield (i, j), v
            if i != j:
                yield (j, i), v.conjugate()

    def trace(self) -> float:
        t = sum(v for (i, j), v in self.entries.items() if i == j)
        return float(np.real(t))

    @property
    def nnz(self) -> int:
        return len(self.entries)

    def prune(self, threshold: float):
        if threshold <= 0.0:
            self.entries = {k: v for k, v in self.entries.items() if v != 0.0}
        else:
            self.entries = {
                k: v for k, v in self.entries.items() if abs(v) > threshold
            }

    def scaled(self, factor: complex):
        out = {k: v * factor for k, v in self.entries.items()}
        return type(self)(self.basis, out)

    def add_into(self, other: "_SparseHermitian"):
        """Accumulate ``other``'s entries into self (same basis required)."""
        if other.basis != self.basis:
            raise BasisMismatch("cannot mix states over different bases")
        for key, v in other.entries.items():
            new = self.entries.get(key, 0.0 + 0.0j) + v
            if new == 0.0:
                self.entries.pop(key, None)
            else:
                self.entries[key] = new

    def to_dense(self) -> np.ndarray:
        d = self.basis.dim
        mat = np.zeros((d, d), dtype=np.complex128)
        for (i, j), v in self.entries.items():
            mat[i, j] = v
            if i != j:
                mat[j, i] = v.conjugate()
        return mat


class MALDensity(_SparseHermitian):
    """Density matrix over a mode-assignment-list basis.

    Values are coefficients of |m_i)(m_j| outer products; physical
    normalization is carried by the symmetrized overlaps applied at
    resolution time, not stored here.
    """

    def rebased(self, new_basis: BasisIndex) -> "MALDensity":
        """Re-index entries into a larger basis covering the same photons."""
        if new_basis.n_photons != self.basis.n_photons:
            raise BasisMismatch("photon count changed in rebase")
        out = MALDensity(new_basis)
        for (i, j), v in self.entries.items():
            a = new_basis.index_of(self.basis.mal_of(i))
            b = new_basis.index_of(self.basis.mal_of(j))
            out.accumulate(a, b, v)
        return out

    def with_photon_appended(self, mode: int) -> "MALDensity":
        """Tensor a fresh photon, pure in ``mode``, onto the state."""
        new_basis = self.basis.with_photon_appended((mode,))
        # appended photon is the least significant digit with radix 1
        return MALDensity(new_basis, dict(self.entries))


def init_pure(mal: Sequence[int], basis: BasisIndex) -> MALDensity:
    """Pure MAL state |m)(m| as a density matrix."""
    if not basis.contains(mal):
        raise NotInBasis(f"mal {tuple(mal)} not representable in basis")
    idx = basis.index_of(mal)
    return MALDensity(basis, {(idx, idx): 1.0 + 0.0j})


class ExternalDensity(_SparseHermitian):
    """Reduced external density matrix over the N-photon tensor basis.

    Uses the same mixed-radix index scheme as the MAL basis; generally not
    permutation-symmetric, so it has no second-quantized form.
    """

    def renormalized(self) -> "ExternalDensity":
        t = self.trace()
        if t <= 0.0:
            raise ZeroProbabilityMass("external density has no trace to normalize")
        return self.scaled(1.0 / t)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.to_dense())[0])

    def purity(self) -> float:
        s = 0.0
        for (i, j), v in self.entries.items():
            s += abs(v) ** 2 if i == j else 2.0 * abs(v) ** 2
        return s


def fidelity(rho_ref: ExternalDensity, rho: ExternalDensity,
             tol: float = 1e-9) -> float:
    """Fidelity Tr(rho_ref rho) against a pure, unit-trace reference."""
    if rho_ref.basis != rho.basis:
        raise BasisMismatch("fidelity requires a common basis")
    t = rho_ref.trace()
    if abs(rho_ref.purity() - t * t) > max(tol, tol * t * t):
        raise RefNotPure(
            f"reference purity {rho_ref.purity():.6f} != trace^2 {t * t:.6f}"
        )
    acc = 0.0 + 0.0j
    small, big = (rho_ref, rho) if rho_ref.nnz <= rho.nnz else (rho, rho_ref)
    for (i, j), v in small.items_full():
        w = big.get(j, i)
        if w != 0.0:
            acc += v * w
    value = float(np.real(acc))
    if abs(np.imag(acc)) > tol:
        raise ValueError(f"fidelity has imaginary part {np.imag(acc):.3e}")
    return value


@dataclass(frozen=True, eq=False)
class EncodedQubit:
    """2x2 density matrix reconstructed from encoded expectation values."""

    matrix: np.ndarray

    @property
    def bloch(self) -> tuple:
        m = self.matrix
        x = float(np.real(m[0, 1] + m[1, 0]))
        y = float(np.real(1j * (m[0, 1] - m[1, 0])))
        z = float(np.real(m[0, 0] - m[1, 1]))
        return (x, y, z)


_SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_SY = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=np.complex128)
_SZ = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)


def encoded_density(exp_x: float, exp_y: float, exp_z: float,
                    tol: float = 1e-9) -> EncodedQubit:
    """Qubit density matrix (I + <X> sx + <Y> sy + <Z> sz) / 2."""
    for name, v in (("X", exp_x), ("Y", exp_y), ("Z", exp_z)):
        if abs(v) > 1.0 + tol:
            raise OutOfRangeExpectation(f"<{name}> = {v} outside [-1, 1]")
    length = (exp_x ** 2 + exp_y ** 2 + exp_z ** 2) ** 0.5
    if length > 1.0 + tol:
        warnings.warn(
            f"Bloch vector length {length:.6f} exceeds 1; state is unphysical",
            RuntimeWarning,
            stacklevel=2,
        )
    mat = 0.5 * (np.eye(2, dtype=np.complex128)
                 + exp_x * _SX + exp_y * _SY + exp_z * _SZ)
    return EncodedQubit(matrix=mat)


def expectation(probs: Mapping, weights: Mapping, tol: float = 1e-12) -> float:
    """Post-selected expectation sum(w_d p_d) / sum(p_d) over weighted patterns.

    Every pattern carrying probability above ``tol`` must be weighted.
    """
    mass = 0.0
    acc = 0.0
    for pattern, p in probs.items():
        if pattern in weights:
            acc += weights[pattern] * p
            mass += p
        elif p > tol:
            raise UnweightedPattern(f"pattern {pattern} has probability {p:.3e}")
    if mass <= tol:
        raise ZeroProbabilityMass("no probability mass on weighted patterns")
    return acc / mass
