"""Internal-state overlap kernels.

Everything downstream of the distinguishability data funnels through this
module: Gram-matrix validation, exact matrix permanents, Gram-Schmidt
expansion coefficients, and the symmetrized overlaps of photon groups that
weight loss and detection events.

Photons are identified by 0-based labels (injection order). Two photons share
an internal state only when their ``internal_ids`` entries are equal; the ids
exist so that invariance counts are taken from configured identity, never from
overlaps that happen to be close to 1.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BadDiagonal,
    NonHermitian,
    NonSquare,
    NotPSD,
    NumericalBreakdown,
    OverUnitOverlap,
    SizeMismatch,
)

VALIDATION_TOL = 1e-9

PhotonGroup = tuple  # ordered tuple of 0-based photon labels


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Validated Hermitian PSD matrix of pairwise internal-state overlaps.

    ``entries[i, j]`` is the overlap of photon i's internal state with photon
    j's internal state (bra i, ket j). The diagonal is exactly 1.
    """

    entries: np.ndarray
    rank: int
    internal_ids: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_photons(self) -> int:
        return self.entries.shape[0]

    def overlap(self, bra: int, ket: int) -> complex:
        return complex(self.entries[bra, ket])

    def relabeled(self, labels: Sequence[int]) -> "GramMatrix":
        """Per-photon Gram for photons whose internal states are rows of this
        matrix. ``labels[p]`` is photon p's internal-state index; repeats mean
        identical internal states."""
        idx = np.asarray(labels, dtype=int)
        sub = self.entries[np.ix_(idx, idx)].copy()
        ids = tuple(int(i) for i in idx)
        eig = np.linalg.eigvalsh(sub)
        rank = int(np.sum(eig > VALIDATION_TOL))
        return GramMatrix(entries=sub, rank=rank, internal_ids=ids)


def validate_gram(raw, tol: float = VALIDATION_TOL) -> GramMatrix:
    """Check and package a raw overlap matrix.

    Requires a square, Hermitian matrix with unit diagonal, entries of
    magnitude at most 1, and no eigenvalue below ``-tol``. Slightly negative
    eigenvalues are rejected rather than clipped. The diagonal is snapped to
    exactly 1 in the returned matrix.
    """
    a = np.asarray(raw, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        raise NonSquare("Gram matrix must have at least one photon")
    herm_err = np.max(np.abs(a - a.conj().T)) if n else 0.0
    if herm_err > tol:
        raise NonHermitian(f"max |S - S^dag| = {herm_err:.3e} > {tol:.1e}")
    diag_err = np.max(np.abs(np.diag(a) - 1.0))
    if diag_err > tol:
        raise BadDiagonal(f"max |S_ii - 1| = {diag_err:.3e} > {tol:.1e}")
    over = np.max(np.abs(a))
    if over > 1.0 + tol:
        raise OverUnitOverlap(f"max |S_ij| = {over:.6f} > 1")
    s = 0.5 * (a + a.conj().T)
    np.fill_diagonal(s, 1.0)
    eig = np.linalg.eigvalsh(s)
    if eig[0] < -tol:
        raise NotPSD(f"smallest eigenvalue {eig[0]:.3e} < -{tol:.1e}")
    rank = int(np.sum(eig > tol))
    return GramMatrix(entries=s, rank=rank, internal_ids=tuple(range(n)))


def permanent(a) -> complex:
    """Exact matrix permanent via Ryser's formula with Gray-code updates.

    O(2^k k) time; exact for k <= 16 in double precision. perm of the empty
    matrix is 1.
    """
    mat = np.asarray(a, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise NonSquare(f"permanent needs a square matrix, got shape {mat.shape}")
    n = mat.shape[0]
    if n == 0:
        return 1.0 + 0.0j
    if n == 1:
        return complex(mat[0, 0])
    if n == 2:
        return complex(mat[0, 0] * mat[1, 1] + mat[0, 1] * mat[1, 0])
    row_sums = np.zeros(n, dtype=np.complex128)
    total = 0.0 + 0.0j
    gray = 0
    for k in range(1, 1 << n):
        bit = k & -k
        j = bit.bit_length() - 1
        if gray & bit:
            row_sums -= mat[:, j]
        else:
            row_sums += mat[:, j]
        gray ^= bit
        if gray.bit_count() & 1:
            total -= row_sums.prod()
        else:
            total += row_sums.prod()
    if n & 1:
        total = -total
    return complex(total)


@dataclass(frozen=True, eq=False)
class OrthoCoefficients:
    """Lower-triangular expansion of internal states over their Gram-Schmidt
    orthonormal basis: row i of ``gamma`` expands state i, and
    ``gamma @ gamma.conj().T`` reconstructs the Gram matrix."""

    gamma: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.sum(np.real(np.diag(self.gamma)) > 0.0))

    def reconstruct(self) -> np.ndarray:
        return self.gamma @ self.gamma.conj().T


def gram_schmidt(gram: GramMatrix, tol: float = 1e-12) -> OrthoCoefficients:
    """Gram-Schmidt expansion coefficients, rows in ascending photon order.

    Works entirely from pairwise overlaps. Linearly dependent internal states
    produce a zero diagonal entry and a zero row tail (reduced effective
    rank), which is how rank-deficient Gram matrices are supported.
    """
    s = gram.entries
    n = s.shape[0]
    gamma = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(i):
            if gamma[j, j] == 0.0:
                continue
            num = s[i, j] - np.dot(gamma[i, :j], gamma[j, :j].conj())
            gamma[i, j] = num / gamma[j, j]
        residual = float(np.real(s[i, i])) - float(np.sum(np.abs(gamma[i, :i]) ** 2))
        if residual < -tol:
            raise NumericalBreakdown(
                f"negative residual norm^2 {residual:.3e} at row {i}"
            )
        d = math.sqrt(max(residual, 0.0))
        gamma[i, i] = 0.0 if d * d <= tol else d
    return OrthoCoefficients(gamma=gamma)


def _invariance_count(gram: GramMatrix, group: Sequence[int]) -> int:
    """|I| = prod over repeated internal states of N_phi! within the group."""
    counts = Counter(gram.internal_ids[p] for p in group)
    out = 1
    for c in counts.values():
        out *= math.factorial(c)
    return out


def group_overlap(group_a: Sequence[int], group_b: Sequence[int],
                  gram: GramMatrix) -> complex:
    """Overlap of two symmetrized-within-a-mode photon groups.

    Returns perm(G) / sqrt(|I_A| |I_B|) with G[a, b] the overlap of photon
    A_a's internal state (bra) with photon B_b's (ket). Empty groups give 1.
    """
    a = tuple(group_a)
    b = tuple(group_b)
    if len(a) != len(b):
        raise SizeMismatch(f"group sizes differ: {len(a)} vs {len(b)}")
    if not a:
        return 1.0 + 0.0j
    key = (a, b)
    cache = gram._cache
    hit = cache.get(key)
    if hit is not None:
        return hit
    g = gram.entries[np.ix_(a, b)]
    val = permanent(g) / math.sqrt(
        _invariance_count(gram, a) * _invariance_count(gram, b)
    )
    cache[key] = val
    return val


def mal_overlap(bra_mal: Sequence[int], ket_mal: Sequence[int],
                gram: GramMatrix, modes=None) -> complex:
    """Product of per-mode group overlaps between two mode assignment lists.

    Groups are formed per external mode over the given mode subset (default:
    every physical mode present in either list). Photons parked in mode 0
    carry no internal weight. Mismatched per-mode photon counts give 0.
    """
    if modes is None:
        modes = sorted({m for m in bra_mal if m > 0} | {m for m in ket_mal if m > 0})
    out = 1.0 + 0.0j
    for m in modes:
        if m == 0:
            continue
        pa = tuple(p for p, mm in enumerate(bra_mal) if mm == m)
        pb = tuple(p for p, mm in enumerate(ket_mal) if mm == m)
        if len(pa) != len(pb):
            return 0.0 + 0.0j
        out *= group_overlap(pa, pb, gram)
        if out == 0.0:
            return 0.0 + 0.0j
    return out
