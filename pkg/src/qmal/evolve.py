"""Evolution of MAL density matrices.

Circuit components act on external modes only, so the N-photon unitary
factorizes into identical single-photon unitaries applied slot by slot.
Kets transform by rows: |m) -> sum_m' U[m, m'] |m'), matching the convention
in which a balanced splitter sends |12) to (-|11) + |12) - |21) + |22)) / 2.

Loss on a targeted mode enumerates every pairing of equally-sized lost
subsets on the ket and bra sides, weights them with transmission factors and
the symmetrized internal overlap of the lost groups, and parks lost photons
in mode 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .basis import BasisIndex
from .errors import BadModes, BasisTooSmall, NonUnitaryCustom
from .overlaps import GramMatrix, group_overlap
from .state import MALDensity

UNITARITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SinglePhotonUnitary:
    """(M+1) x (M+1) unitary over modes {0, 1..M}; mode 0 is untouched."""

    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise BadModes(f"unitary must be square, got shape {m.shape}")
        err = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
        if err > 1e-10:
            raise NonUnitaryCustom(f"deviation from unitarity {err:.3e}")
        if (abs(m[0, 0] - 1.0) > UNITARITY_TOL
                or np.max(np.abs(m[0, 1:])) > UNITARITY_TOL
                or np.max(np.abs(m[1:, 0])) > UNITARITY_TOL):
            raise BadModes("mode 0 must be left untouched")

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def support(self) -> tuple:
        """Physical modes on which the unitary differs from the identity."""
        m = self.matrix
        out = []
        for k in range(1, m.shape[0]):
            row = m[k].copy()
            row[k] -= 1.0
            col = m[:, k].copy()
            col[k] -= 1.0
            if np.max(np.abs(row)) > UNITARITY_TOL or np.max(np.abs(col)) > UNITARITY_TOL:
                out.append(k)
        return tuple(out)


def _identity(n_modes: int) -> np.ndarray:
    return np.eye(n_modes + 1, dtype=np.complex128)


def _check_modes(n_modes: int, *modes: int):
    if len(set(modes)) != len(modes):
        raise BadModes(f"modes must be distinct, got {modes}")
    for m in modes:
        if not 1 <= m <= n_modes:
            raise BadModes(f"mode {m} outside 1..{n_modes}")


def beam_splitter(theta: float, m1: int, m2: int, n_modes: int) -> SinglePhotonUnitary:
    """Beam splitter exp(i theta sigma_y) on (m1, m2); theta = pi/4 is balanced."""
    _check_modes(n_modes, m1, m2)
    u = _identity(n_modes)
    c, s = np.cos(theta), np.sin(theta)
    u[m1, m1] = c
    u[m1, m2] = s
    u[m2, m1] = -s
    u[m2, m2] = c
    return SinglePhotonUnitary(matrix=u)


def phase_shift(phi: float, mode: int, n_modes: int) -> SinglePhotonUnitary:
    _check_modes(n_modes, mode)
    u = _identity(n_modes)
    u[mode, mode] = np.exp(1j * phi)
    return SinglePhotonUnitary(matrix=u)


def swap_modes(m1: int, m2: int, n_modes: int) -> SinglePhotonUnitary:
    _check_modes(n_modes, m1, m2)
    u = _identity(n_modes)
    u[m1, m1] = u[m2, m2] = 0.0
    u[m1, m2] = u[m2, m1] = 1.0
    return SinglePhotonUnitary(matrix=u)


def custom_unitary(matrix, n_modes: int) -> SinglePhotonUnitary:
    """Embed an M x M unitary over the physical modes 1..M.

    ``matrix[a][b]`` is the amplitude for mode a+1 -> mode b+1.
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.shape != (n_modes, n_modes):
        raise BadModes(f"custom matrix must be {n_modes}x{n_modes}, got {m.shape}")
    err = np.max(np.abs(m.conj().T @ m - np.eye(n_modes)))
    if err > 1e-10:
        raise NonUnitaryCustom(f"deviation from unitarity {err:.3e}")
    u = _identity(n_modes)
    u[1:, 1:] = m
    return SinglePhotonUnitary(matrix=u)


@dataclass(frozen=True)
class LossElement:
    """Loss on one external mode with transmission probability eta."""

    mode: int
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise BadModes(f"transmission eta={self.eta} outside [0, 1]")
        if self.mode < 1:
            raise BadModes(f"loss target mode {self.mode} must be physical")


def _expanded_for_unitary(mu: MALDensity, u1: SinglePhotonUnitary,
                          expand: bool) -> MALDensity:
    support = set(u1.support)
    if not support:
        return mu
    mat = u1.matrix
    extra = {}
    for p, allowed in enumerate(mu.basis.allowed):
        hit = support.intersection(allowed)
        if not hit:
            continue
        image = set()
        for m in hit:
            image.update(
                int(t) for t in np.nonzero(np.abs(mat[m]) > UNITARITY_TOL)[0]
            )
        missing = image.difference(allowed)
        if missing:
            if not expand:
                raise BasisTooSmall(
                    f"photon {p} needs modes {sorted(missing)} outside its allowed set"
                )
            extra[p] = tuple(missing)
    if not extra:
        return mu
    return mu.rebased(mu.basis.with_modes_added(extra))


def apply_unitary(mu: MALDensity, u1: SinglePhotonUnitary, *,
                  expand: bool = True, prune: float = 0.0) -> MALDensity:
    """Conjugate the state by U1 tensored over every photon.

    Applied as successive single-photon transforms over the sparse entries;
    the full M^N x M^N operator is never materialized. Trace is preserved.
    """
    mu = _expanded_for_unitary(mu, u1, expand)
    support = set(u1.support)
    if not support:
        return mu
    basis = mu.basis
    mat = u1.matrix
    entries = mu.entries
    strides = basis._strides()
    for p in range(basis.n_photons):
        allowed = basis.allowed[p]
        if not support.intersection(allowed):
            continue
        stride = strides[p]
        radix = len(allowed)
        # per allowed mode: list of (digit delta * stride, amplitude)
        moves = []
        for digit, m in enumerate(allowed):
            row = []
            if m in support:
                for d2, m2 in enumerate(allowed):
                    amp = mat[m, m2]
                    if abs(amp) > 0.0:
                        row.append(((d2 - digit) * stride, complex(amp)))
            else:
                row.append((0, 1.0 + 0.0j))
            moves.append(row)
        new = {}
        for (si, sj), sv in entries.items():
            sources = [(si, sj, sv)]
            if si != sj:
                sources.append((sj, si, sv.conjugate()))
            for i, j, v in sources:
                di = (i // stride) % radix
                dj = (j // stride) % radix
                for off_i, amp_i in moves[di]:
                    a = i + off_i
                    vi = v * amp_i
                    for off_j, amp_j in moves[dj]:
                        b = j + off_j
                        if a <= b:
                            val = vi * amp_j.conjugate()
                            cur = new.get((a, b))
                            new[(a, b)] = val if cur is None else cur + val
        entries = new
    out = MALDensity(basis, entries)
    out.prune(prune)
    return out


def _power(base: float, exponent: float) -> float:
    if exponent == 0.0:
        return 1.0
    return float(base) ** exponent


def apply_loss(mu: MALDensity, loss: LossElement, gram: GramMatrix, *,
               expand: bool = True, prune: float = 0.0) -> MALDensity:
    """Apply the MAL-basis loss map for a targeted mode.

    For each entry, sums over equal numbers n of lost photons on ket and bra
    sides and over every lost-subset pairing, with weight
    eta^((|T_i|+|T_j|)/2 - n) (1-eta)^n times the symmetrized internal
    overlap of the lost groups. Cross terms between different lost counts
    vanish. Lost photons are parked in mode 0.
    """
    target = loss.mode
    eta = loss.eta
    if eta == 1.0:
        return mu
    # every photon that can sit in the target mode needs mode 0 available
    extra = {}
    for p, allowed in enumerate(mu.basis.allowed):
        if target in allowed and 0 not in allowed:
            if not expand:
                raise BasisTooSmall(f"photon {p} needs mode 0 for loss")
            extra[p] = (0,)
    if extra:
        mu = mu.rebased(mu.basis.with_modes_added(extra))
    basis = mu.basis
    strides = basis._strides()
    # index shift for moving photon p from the target mode to mode 0
    shift = {}
    for p, allowed in enumerate(basis.allowed):
        if target in allowed:
            shift[p] = (allowed.index(0) - allowed.index(target)) * strides[p]
    out = MALDensity(basis)
    mal_cache = {}

    def mal_for(idx):
        mal = mal_cache.get(idx)
        if mal is None:
            mal = basis.mal_of(idx)
            mal_cache[idx] = mal
        return mal

    for (i, j), v in mu.items_full():
        t_i = tuple(p for p, m in enumerate(mal_for(i)) if m == target)
        t_j = tuple(p for p, m in enumerate(mal_for(j)) if m == target)
        if not t_i and not t_j:
            if i <= j:
                out.accumulate(i, j, v)
            continue
        half = (len(t_i) + len(t_j)) / 2.0
        for n in range(min(len(t_i), len(t_j)) + 1):
            w_eta = _power(eta, half - n) * _power(1.0 - eta, float(n))
            if w_eta == 0.0:
                continue
            for lost_i in combinations(t_i, n):
                a = i + sum(shift[p] for p in lost_i)
                for lost_j in combinations(t_j, n):
                    b = j + sum(shift[p] for p in lost_j)
                    if a > b:
                        continue
                    ov = group_overlap(lost_j, lost_i, gram)
                    if ov == 0.0:
                        continue
                    out.accumulate(a, b, v * w_eta * ov)
    out.prune(prune)
    return out
