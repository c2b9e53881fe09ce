"""Interference resolution.

States evolve unsymmetrized; physics enters only here, where label-exchange
symmetrization and the trace over internal states are carried out in one
step. Photons parked in mode 0 were already resolved when they left the
circuit, so they behave as carrying a shared internal state orthogonal to
every live photon's: they contribute bookkeeping but no further interference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .basis import BasisIndex, DetectionPattern, build_basis, full_pattern_of
from .errors import DimensionOverflow, HeraldImpossible, QmalError
from .overlaps import GramMatrix, group_overlap
from .state import ExternalDensity, MALDensity

RESOLVE_PHOTON_CAP = 8

_PERM_CACHE: dict = {}


def _perms(n: int) -> np.ndarray:
    arr = _PERM_CACHE.get(n)
    if arr is None:
        arr = np.array(list(permutations(range(n))), dtype=np.intp)
        _PERM_CACHE[n] = arr
    return arr


def _invariance_with_parks(mal, gram: GramMatrix) -> int:
    """|I_{m,phi}|: permutations fixing both mode and internal state.

    Parked photons all share one internal state, so they count together.
    """
    counts: dict = {}
    for p, m in enumerate(mal):
        key = (m, gram.internal_ids[p]) if m > 0 else (0, -1)
        counts[key] = counts.get(key, 0) + 1
    out = 1
    for c in counts.values():
        out *= math.factorial(c)
    return out


def _effective_overlap_matrix(mal_bra, mal_ket, gram: GramMatrix) -> np.ndarray:
    """O[p, q] = overlap of bra photon p's effective internal state with ket
    photon q's; parked photons overlap 1 among themselves, 0 with live ones."""
    n = len(mal_bra)
    o = np.array(gram.entries[:n, :n], dtype=np.complex128)
    bra_parked = np.array([m == 0 for m in mal_bra])
    ket_parked = np.array([m == 0 for m in mal_ket])
    o[bra_parked, :] = 0.0
    o[:, ket_parked] = 0.0
    o[np.ix_(bra_parked, ket_parked)] = 1.0
    return o


def _union_basis(basis: BasisIndex) -> BasisIndex:
    union = sorted(set().union(*[set(a) for a in basis.allowed]))
    return build_basis([union] * basis.n_photons, basis.n_modes)


def resolve_interference(mu: MALDensity, gram: GramMatrix, *,
                         max_photons: int = RESOLVE_PHOTON_CAP) -> ExternalDensity:
    """Symmetrize and trace out internal states, directly in the external
    N-photon tensor space.

    The symmetrized space is never materialized: each stored entry is spread
    over permutation pairs weighted by internal-overlap products and the
    invariance normalization constants.
    """
    n = mu.basis.n_photons
    if n > max_photons:
        raise DimensionOverflow(
            f"full resolution of {n} photons exceeds the cap of {max_photons}"
        )
    out_basis = _union_basis(mu.basis)
    out = ExternalDensity(out_basis)
    perms = _perms(n)
    n_fact = math.factorial(n)
    for (i, j), v in mu.items_full():
        mal_i = mu.basis.mal_of(i)
        mal_j = mu.basis.mal_of(j)
        if sum(1 for m in mal_i if m == 0) != sum(1 for m in mal_j if m == 0):
            continue  # mismatched parked counts: parked overlaps force zero
        o = _effective_overlap_matrix(mal_j, mal_i, gram)
        norm = v / (n_fact * math.sqrt(
            _invariance_with_parks(mal_i, gram) * _invariance_with_parks(mal_j, gram)
        ))
        mal_i_arr = np.array(mal_i)
        mal_j_arr = np.array(mal_j)
        a_idx = [out_basis.index_of(tuple(mal_i_arr[u])) for u in perms]
        b_idx = [out_basis.index_of(tuple(mal_j_arr[w])) for w in perms]
        for k in range(len(perms)):
            # F[w] = prod_s O[w[s], u_k[s]]
            factors = np.prod(o[perms, perms[k][None, :]], axis=1)
            a = a_idx[k]
            for widx in np.nonzero(factors)[0]:
                b = b_idx[widx]
                if a <= b:
                    out.accumulate(a, b, norm * complex(factors[widx]))
    out.prune(0.0)
    return out


def detection_probabilities(mu: MALDensity, gram: GramMatrix,
                            tol: float = 1e-9) -> dict:
    """Probability of each detection pattern over all modes (including 0).

    Uses the permanent-factorized form: per-mode symmetrized group overlaps
    on the pattern's sub-block of the density matrix. The external density
    matrix is never constructed.
    """
    n_modes = mu.basis.n_modes
    acc: dict = {}
    for (i, j), v in mu.items_upper():
        mal_i = mu.basis.mal_of(i)
        mal_j = mu.basis.mal_of(j)
        d_i = full_pattern_of(mal_i, n_modes)
        if d_i != full_pattern_of(mal_j, n_modes):
            continue
        w = 1.0 + 0.0j
        for m in range(1, n_modes + 1):
            ket_group = tuple(p for p, mm in enumerate(mal_i) if mm == m)
            if not ket_group:
                continue
            bra_group = tuple(p for p, mm in enumerate(mal_j) if mm == m)
            w *= group_overlap(bra_group, ket_group, gram)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        term = v * w
        if i != j:
            term = 2.0 * np.real(term)
        acc[d_i] = acc.get(d_i, 0.0 + 0.0j) + term
    out = {}
    for d, val in acc.items():
        if abs(np.imag(val)) > tol:
            raise QmalError(f"pattern {d} probability has imaginary part {val}")
        out[d] = float(np.real(val))
    return out


def physical_mass(mu: MALDensity, gram: GramMatrix) -> float:
    """Total physical probability carried by the state."""
    return float(sum(detection_probabilities(mu, gram).values()))


@dataclass(eq=False)
class HeraldedMixture:
    """Mixture over detection patterns at a traced set of external modes.

    Remainder states are stored unnormalized; their physical mass is the
    branch probability. Normalization is deferred to post-selection.
    """

    modes: tuple
    branches: dict  # DetectionPattern -> (probability, MALDensity)

    def total_probability(self) -> float:
        return float(sum(p for p, _ in self.branches.values()))

    def pattern(self, counts) -> DetectionPattern:
        return DetectionPattern(modes=self.modes, counts=tuple(counts))

    def probabilities(self) -> dict:
        return {d: p for d, (p, _) in self.branches.items()}


def trace_out_modes(mu: MALDensity, modes, gram: GramMatrix) -> HeraldedMixture:
    """Symmetrize and trace out the photons sitting in the given modes.

    Entries are partitioned by the detection pattern restricted to the traced
    modes; ket/bra lost groups are paired per mode and weighted by their
    symmetrized internal overlap. Traced photons are parked in mode 0 and the
    traced modes disappear from the surviving basis.
    """
    modes = tuple(modes)
    mode_set = set(modes)
    if not mode_set.issubset(range(1, mu.basis.n_modes + 1)):
        raise QmalError(f"traced modes {modes} must be physical modes")
    new_allowed = []
    for allowed in mu.basis.allowed:
        kept = [m for m in allowed if m not in mode_set]
        if len(kept) < len(allowed) and 0 not in kept:
            kept.append(0)
        new_allowed.append(tuple(sorted(kept)))
    new_basis = build_basis(new_allowed, mu.basis.n_modes)
    branches: dict = {}
    for (i, j), v in mu.items_full():
        mal_i = list(mu.basis.mal_of(i))
        mal_j = list(mu.basis.mal_of(j))
        counts_i = tuple(sum(1 for m in mal_i if m == d) for d in modes)
        counts_j = tuple(sum(1 for m in mal_j if m == d) for d in modes)
        if counts_i != counts_j:
            continue
        w = 1.0 + 0.0j
        for m in modes:
            ket_group = tuple(p for p, mm in enumerate(mal_i) if mm == m)
            if not ket_group:
                continue
            bra_group = tuple(p for p, mm in enumerate(mal_j) if mm == m)
            w *= group_overlap(bra_group, ket_group, gram)
            if w == 0.0:
                break
        if w == 0.0:
            continue
        rem_i = tuple(0 if m in mode_set else m for m in mal_i)
        rem_j = tuple(0 if m in mode_set else m for m in mal_j)
        a = new_basis.index_of(rem_i)
        b = new_basis.index_of(rem_j)
        if a > b:
            continue
        pattern = DetectionPattern(modes=modes, counts=counts_i)
        branch = branches.get(pattern)
        if branch is None:
            branch = MALDensity(new_basis)
            branches[pattern] = branch
        branch.accumulate(a, b, v * w)
    out = {}
    for pattern, density in branches.items():
        density.prune(0.0)
        prob = float(sum(detection_probabilities(density, gram).values()))
        out[pattern] = (prob, density)
    return HeraldedMixture(modes=modes, branches=out)


def postselect(mix: HeraldedMixture, herald, tol: float = 1e-12):
    """Keep one herald branch and renormalize it to physical probability 1."""
    if isinstance(herald, DetectionPattern):
        pattern = herald
    else:
        pattern = DetectionPattern(modes=mix.modes, counts=tuple(herald))
    entry = mix.branches.get(pattern)
    if entry is None:
        raise HeraldImpossible(f"herald {pattern} never occurs")
    prob, density = entry
    if prob < tol:
        raise HeraldImpossible(f"herald {pattern} has probability {prob:.3e}")
    return prob, density.scaled(1.0 / prob)
