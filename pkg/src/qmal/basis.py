"""Restricted mode-assignment-list bases.

A basis is the Cartesian product of per-photon allowed-mode sets, indexed by
a mixed-radix positional code (photon 0 is the most significant digit, modes
ascending within each digit). Mode 0 is the fictitious slot that holds
detected or lost photons.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import DimensionOverflow, EmptyAllowedSet, NotInBasis

DEFAULT_DIM_CAP = 1 << 26
DIM_CAP_ENV = "QMAL_DIM_CAP"


def dim_cap() -> int:
    raw = os.environ.get(DIM_CAP_ENV)
    if raw:
        try:
            return int(raw)
        except ValueError:
            pass
    return DEFAULT_DIM_CAP


@dataclass(frozen=True, eq=True)
class DetectionPattern:
    """Occupation counts over a declared subset of external modes."""

    modes: tuple
    counts: tuple

    @property
    def total(self) -> int:
        return sum(self.counts)

    def count_of(self, mode: int) -> int:
        try:
            return self.counts[self.modes.index(mode)]
        except ValueError:
            return 0

    def restricted(self, modes: Sequence[int]) -> "DetectionPattern":
        modes = tuple(modes)
        return DetectionPattern(modes, tuple(self.count_of(m) for m in modes))

    def __str__(self):
        return ",".join(str(c) for c in self.counts)


@dataclass(frozen=True, eq=True)
class BasisIndex:
    """Bijection between restricted mode assignment lists and 0..dim-1.

    ``allowed[p]`` is photon p's sorted tuple of permitted external modes
    (0 = removed). Enumeration is lexicographic, photon-major.
    """

    n_modes: int
    allowed: tuple  # tuple of per-photon sorted mode tuples

    def __post_init__(self):
        for p, modes in enumerate(self.allowed):
            if not modes:
                raise EmptyAllowedSet(f"photon {p} has no allowed modes")
            if tuple(sorted(set(modes))) != tuple(modes):
                raise ValueError(f"photon {p}: allowed modes must be sorted and unique")
            if any(m < 0 or m > self.n_modes for m in modes):
                raise ValueError(f"photon {p}: mode outside 0..{self.n_modes}")

    @property
    def n_photons(self) -> int:
        return len(self.allowed)

    @property
    def dim(self) -> int:
        d = 1
        for modes in self.allowed:
            d *= len(modes)
        return d

    def _strides(self):
        strides = [1] * self.n_photons
        for p in range(self.n_photons - 2, -1, -1):
            strides[p] = strides[p + 1] * len(self.allowed[p + 1])
        return strides

    def index_of(self, mal: Sequence[int]) -> int:
        if len(mal) != self.n_photons:
            raise NotInBasis(f"mal length {len(mal)} != {self.n_photons} photons")
        idx = 0
        for p, mode in enumerate(mal):
            modes = self.allowed[p]
            try:
                digit = modes.index(mode)
            except ValueError:
                raise NotInBasis(f"photon {p} cannot occupy mode {mode}") from None
            idx = idx * len(modes) + digit
        return idx

    def mal_of(self, index: int):
        if index < 0 or index >= self.dim:
            raise NotInBasis(f"index {index} outside 0..{self.dim - 1}")
        rev = []
        for p in range(self.n_photons - 1, -1, -1):
            modes = self.allowed[p]
            index, digit = divmod(index, len(modes))
            rev.append(modes[digit])
        return tuple(reversed(rev))

    def contains(self, mal: Sequence[int]) -> bool:
        return len(mal) == self.n_photons and all(
            m in self.allowed[p] for p, m in enumerate(mal)
        )

    def all_mals(self) -> Iterator[tuple]:
        for i in range(self.dim):
            yield self.mal_of(i)

    def with_modes_added(self, extra: dict) -> "BasisIndex":
        """New basis whose photon p additionally allows ``extra[p]`` modes."""
        new_allowed = []
        for p, modes in enumerate(self.allowed):
            add = extra.get(p, ())
            new_allowed.append(tuple(sorted(set(modes) | set(add))))
        return build_basis(new_allowed, self.n_modes)

    def with_photon_appended(self, modes: Sequence[int]) -> "BasisIndex":
        return build_basis(self.allowed + (tuple(sorted(set(modes))),), self.n_modes)


def build_basis(allowed, n_modes: int, cap: int | None = None) -> BasisIndex:
    """Validate allowed-mode sets and build the mixed-radix index.

    Raises DimensionOverflow when the product of set sizes exceeds the cap
    (default from QMAL_DIM_CAP or 2^26).
    """
    allowed = tuple(tuple(sorted(set(m))) for m in allowed)
    basis = BasisIndex(n_modes=n_modes, allowed=allowed)
    limit = cap if cap is not None else dim_cap()
    if basis.dim > limit:
        raise DimensionOverflow(f"basis dimension {basis.dim} exceeds cap {limit}")
    return basis


def pattern_of(mal: Sequence[int], modes: Sequence[int]) -> DetectionPattern:
    """Occupation counts of ``mal`` over the listed modes.

    Photons in unlisted modes contribute nothing; detector subsets are drawn
    from {1..M}, so removed photons (mode 0) are never counted there.
    """
    modes = tuple(modes)
    counts = [0] * len(modes)
    pos = {m: k for k, m in enumerate(modes)}
    for m in mal:
        k = pos.get(m)
        if k is not None:
            counts[k] += 1
    return DetectionPattern(modes=modes, counts=tuple(counts))


def full_pattern_of(mal: Sequence[int], n_modes: int) -> DetectionPattern:
    """Pattern over every mode including the fictitious 0th."""
    return pattern_of(mal, tuple(range(0, n_modes + 1)))
