"""Brute-force first-quantization reference simulator.

Used only to validate the main pipeline on small instances. The state is an
ensemble of dense vectors over (external mode x orthonormal internal
coordinate)^N slots, symmetrized explicitly with all N! permutation
operators. Internal states are embedded as concrete coordinate vectors from
the Gram-Schmidt coefficients, so every overlap is realized literally.

Loss couples the targeted mode to a temporary extra mode with amplitudes
sqrt(eta) and sqrt(1-eta) per photon, then traces that mode's content
exactly, sector by sector in lost-photon number, using the occupation-number
(class) basis of the symmetric subspace. Lost photons are re-parked in mode 0
with a shared internal coordinate, which keeps the slot count constant and
the labels aligned. No evolution code is shared with the main pipeline.
"""

from __future__ import annotations

import math
from itertools import permutations

import numpy as np

from .basis import DetectionPattern
from .errors import DenseCapExceeded, QmalError
from .overlaps import GramMatrix, gram_schmidt

DENSE_CAP = 1 << 20
_EIG_TRUNCATION = 1e-13


def _class_key(slot_values) -> tuple:
    return tuple(sorted(slot_values))


def _invariance(key) -> int:
    counts: dict = {}
    for v in key:
        counts[v] = counts.get(v, 0) + 1
    out = 1
    for c in counts.values():
        out *= math.factorial(c)
    return out


class DenseFirstQuantState:
    """Ensemble of symmetric dense slot vectors with scalar weights.

    Total physical probability is sum_b w_b ||psi_b||^2; heralding shrinks
    vector norms rather than renormalizing.
    """

    def __init__(self, n_modes: int, n_photons: int, int_dim: int,
                 dense_cap: int = DENSE_CAP):
        self.n_modes = n_modes
        self.n_photons = n_photons
        # one extra coordinate holds parked photons, orthogonal to every
        # live internal state so bookkeeping slots cannot interfere
        self.live_int_dim = max(int_dim, 1)
        self.int_dim = self.live_int_dim + 1
        self.dense_cap = dense_cap
        self.ext_dim = n_modes + 1  # modes 0..M, 0 = parked
        k = self.ext_dim * self.int_dim
        if k ** n_photons > dense_cap:
            raise DenseCapExceeded(
                f"slot space {k}^{n_photons} exceeds dense cap {dense_cap}"
            )
        self.weights: list = []
        self.vectors: list = []

    # --- construction ---------------------------------------------------

    @property
    def slot_dim(self) -> int:
        return self.ext_dim * self.int_dim

    def slot_value(self, mode: int, coord: int) -> int:
        return mode * self.int_dim + coord

    def inject_product(self, modes, coord_vectors):
        """Initialize from a product state, symmetrized and normalized."""
        n = self.n_photons
        if len(modes) != n or len(coord_vectors) != n:
            raise QmalError("need one mode and one coordinate vector per photon")
        k = self.slot_dim
        psi = np.ones((), dtype=np.complex128)
        for mode, coords in zip(modes, coord_vectors):
            slot = np.zeros(k, dtype=np.complex128)
            base = self.slot_value(mode, 0)
            slot[base:base + len(coords)] = coords
            psi = np.multiply.outer(psi, slot)
        psi = _symmetrize(psi)
        norm = np.linalg.norm(psi.ravel())
        if norm == 0.0:
            raise QmalError("input state vanishes under symmetrization")
        self.weights = [1.0]
        self.vectors = [psi / norm]

    # --- evolution --------------------------------------------------------

    def apply_slot_matrix(self, slot_matrix: np.ndarray):
        for b, psi in enumerate(self.vectors):
            self.vectors[b] = _apply_per_slot(psi, slot_matrix)

    def apply_external_unitary(self, ext_matrix: np.ndarray):
        """ext_matrix[m, m'] is the amplitude for mode m -> mode m'."""
        a = np.kron(ext_matrix.T, np.eye(self.int_dim))
        self.apply_slot_matrix(a)

    def project_pattern(self, modes, counts):
        """Zero out amplitudes whose occupation over ``modes`` differs."""
        mask = None
        for mode, want in zip(modes, counts):
            cnt = self._mode_count_array(mode)
            hit = cnt == want
            mask = hit if mask is None else (mask & hit)
        for b, psi in enumerate(self.vectors):
            self.vectors[b] = np.where(mask, psi, 0.0)

    def _mode_count_array(self, mode: int) -> np.ndarray:
        k = self.slot_dim
        ind = (np.arange(k) // self.int_dim == mode).astype(np.int8)
        n = self.n_photons
        cnt = np.zeros((k,) * n, dtype=np.int8)
        for p in range(n):
            shape = [1] * n
            shape[p] = k
            cnt = cnt + ind.reshape(shape)
        return cnt

    def apply_loss(self, mode: int, eta: float):
        """Couple ``mode`` to a temporary loss mode, trace its content, and
        park the lost photons in mode 0 with a shared internal coordinate."""
        n = self.n_photons
        r = self.int_dim
        ext_new = self.ext_dim + 1
        loss_index = self.ext_dim  # temporary external value
        k_new = ext_new * r
        if k_new ** n > self.dense_cap:
            raise DenseCapExceeded(
                f"loss coupling needs {k_new}^{n} amplitudes > cap {self.dense_cap}"
            )
        coupling = np.eye(ext_new, dtype=np.complex128)
        root_t = math.sqrt(eta)
        root_l = math.sqrt(1.0 - eta)
        coupling[mode, mode] = root_t
        coupling[mode, loss_index] = root_l
        coupling[loss_index, mode] = -root_l
        coupling[loss_index, loss_index] = root_t
        slot_matrix = np.kron(coupling.T, np.eye(r))
        k_old = self.slot_dim
        park = self.slot_value(0, self.int_dim - 1)

        # collect the traced density matrix over parked class keys
        rho: dict = {}
        support: list = []
        support_pos: dict = {}
        for w, psi in zip(self.weights, self.vectors):
            big = np.zeros((k_new,) * n, dtype=np.complex128)
            big[(slice(0, k_old),) * n] = psi
            big = _apply_per_slot(big, slot_matrix)
            amps = _collect_classes(big)
            by_lost: dict = {}
            for key, amp in amps.items():
                lost = tuple(v for v in key if v // r == loss_index)
                kept = tuple(v for v in key if v // r != loss_index)
                parked = _class_key(kept + (park,) * len(lost))
                by_lost.setdefault(lost, []).append((parked, amp))
            for terms in by_lost.values():
                for key_a, amp_a in terms:
                    pos_a = support_pos.get(key_a)
                    if pos_a is None:
                        pos_a = len(support)
                        support_pos[key_a] = pos_a
                        support.append(key_a)
                    for key_b, amp_b in terms:
                        rho[(key_a, key_b)] = rho.get((key_a, key_b), 0.0) \
                            + w * amp_a * np.conj(amp_b)
        if not support:
            self.weights, self.vectors = [], []
            return
        dim = len(support)
        mat = np.zeros((dim, dim), dtype=np.complex128)
        for (ka, kb), val in rho.items():
            mat[support_pos[ka], support_pos[kb]] = val
        eigval, eigvec = np.linalg.eigh(0.5 * (mat + mat.conj().T))
        cut = _EIG_TRUNCATION * max(float(eigval[-1]), 1e-300)
        weights, vectors = [], []
        shape = (k_old,) * n
        for idx in range(dim):
            if eigval[idx] <= cut:
                continue
            class_amps = {support[t]: eigvec[t, idx] for t in range(dim)
                          if eigvec[t, idx] != 0.0}
            weights.append(float(eigval[idx]))
            vectors.append(_expand_classes(class_amps, shape, n))
        self.weights, self.vectors = weights, vectors

    def park_mode(self, mode: int):
        """Move every photon in ``mode`` to the parked slot (a full trace)."""
        self.apply_loss(mode, 0.0)

    # --- read-out ---------------------------------------------------------

    def total_mass(self) -> float:
        return float(sum(
            w * float(np.vdot(psi, psi).real)
            for w, psi in zip(self.weights, self.vectors)
        ))

    def pattern_probabilities(self) -> dict:
        """Joint occupation-pattern probabilities over modes 0..M."""
        n = self.n_photons
        k = self.slot_dim
        ext_of = np.arange(k) // self.int_dim
        base = self.n_photons + 1
        code_slot = np.array([base ** int(e) for e in ext_of], dtype=np.int64)
        code = np.zeros((k,) * n, dtype=np.int64)
        for p in range(n):
            shape = [1] * n
            shape[p] = k
            code = code + code_slot.reshape(shape)
        out: dict = {}
        modes = tuple(range(0, self.n_modes + 1))
        nbins = base ** (self.n_modes + 1)
        hist = np.zeros(nbins, dtype=np.float64)
        for w, psi in zip(self.weights, self.vectors):
            hist += w * np.bincount(
                code.ravel(), weights=(np.abs(psi.ravel()) ** 2), minlength=nbins
            )
        for bin_idx in np.nonzero(hist > 0.0)[0]:
            rem = int(bin_idx)
            counts = []
            for _ in modes:
                rem, c = divmod(rem, base)
                counts.append(c)
            # counts decoded least-significant first = mode 0 first
            pattern = DetectionPattern(modes=modes, counts=tuple(counts))
            out[pattern] = float(hist[bin_idx])
        return out

    def external_density(self) -> np.ndarray:
        """Dense Tr_int of the ensemble, over external tuples (row-major in
        mode values 0..M per slot)."""
        n = self.n_photons
        e, r = self.ext_dim, self.int_dim
        dim = e ** n
        rho = np.zeros((dim, dim), dtype=np.complex128)
        perm = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        for w, psi in zip(self.weights, self.vectors):
            blocks = psi.reshape(sum(((e, r) for _ in range(n)), ()))
            a = np.transpose(blocks, perm).reshape(dim, r ** n)
            rho += w * (a @ a.conj().T)
        return rho

    def external_density_entries(self, tol: float = 0.0) -> dict:
        """Sparse view of external_density keyed by (ket mal, bra mal)."""
        rho = self.external_density()
        n, e = self.n_photons, self.ext_dim
        out = {}
        for a, b in zip(*np.nonzero(np.abs(rho) > tol)):
            mal_a = np.unravel_index(a, (e,) * n)
            mal_b = np.unravel_index(b, (e,) * n)
            out[(tuple(int(x) for x in mal_a), tuple(int(x) for x in mal_b))] = \
                complex(rho[a, b])
        return out

    def class_amplitudes(self) -> list:
        """(weight, {class key -> 2Q amplitude}) per ensemble member."""
        return [(w, _collect_classes(psi))
                for w, psi in zip(self.weights, self.vectors)]

    def povm_probability(self, pattern: DetectionPattern) -> float:
        """Appendix-style measurement: occupation projectors over the
        orthogonalized internal labels, grouped by external pattern."""
        r = self.int_dim
        total = 0.0
        for w, amps in self.class_amplitudes():
            for key, amp in amps.items():
                counts = [0] * (self.n_modes + 1)
                for v in key:
                    counts[v // r] += 1
                ok = all(counts[m] == c for m, c in zip(pattern.modes, pattern.counts))
                if ok:
                    total += w * float(abs(amp) ** 2)
        return total


def _symmetrize(psi: np.ndarray) -> np.ndarray:
    n = psi.ndim
    out = np.zeros_like(psi)
    for perm in permutations(range(n)):
        out += np.transpose(psi, perm)
    return out / math.factorial(n)


def _apply_per_slot(psi: np.ndarray, a: np.ndarray) -> np.ndarray:
    for p in range(psi.ndim):
        psi = np.moveaxis(np.tensordot(a, psi, axes=([1], [p])), 0, p)
    return psi


def _collect_classes(psi: np.ndarray) -> dict:
    """2Q amplitudes <<mu|psi> for a symmetric psi, keyed by sorted slot
    values. a[mu] = sqrt(N!/|I_mu|) psi[x0]."""
    n = psi.ndim
    n_fact = math.factorial(n)
    out: dict = {}
    nz = np.nonzero(psi)
    for x in zip(*nz):
        key = _class_key(int(v) for v in x)
        if key not in out:
            out[key] = complex(psi[x]) * math.sqrt(n_fact / _invariance(key))
    return out


def _expand_classes(class_amps: dict, shape, n: int) -> np.ndarray:
    psi = np.zeros(shape, dtype=np.complex128)
    n_fact = math.factorial(n)
    for key, amp in class_amps.items():
        val = amp * math.sqrt(_invariance(key) / n_fact)
        for arrangement in set(permutations(key)):
            psi[arrangement] = val
    return psi


# --- Kraus-operator cross-check machinery (single external mode) -----------

class FockLossModel:
    """Truncated Fock space over orthonormal internal coordinates for one
    external mode, with the orthogonalized loss Kraus operators."""

    def __init__(self, int_dim: int, max_photons: int):
        self.int_dim = int_dim
        self.max_photons = max_photons
        self.sectors = [list(_multisets(int_dim, n)) for n in range(max_photons + 1)]
        self.index = [
            {key: i for i, key in enumerate(sector)} for sector in self.sectors
        ]

    def annihilate(self, coord: int, n_from: int) -> np.ndarray:
        """Matrix of a(coord) from the n_from sector to the (n_from-1) sector."""
        rows = self.sectors[n_from - 1]
        cols = self.sectors[n_from]
        mat = np.zeros((len(rows), len(cols)), dtype=np.complex128)
        for c, key in enumerate(cols):
            cnt = key.count(coord)
            if cnt == 0:
                continue
            reduced = list(key)
            reduced.remove(coord)
            mat[self.index[n_from - 1][tuple(reduced)], c] = math.sqrt(cnt)
        return mat

    def create_vector(self, coord_vectors) -> np.ndarray:
        """prod_k a^dag(phi_k) |vac> for internal states given as coordinate
        vectors; returned unnormalized in the len(coord_vectors) sector."""
        state = np.zeros(1, dtype=np.complex128)
        state[0] = 1.0
        for n, coords in enumerate(coord_vectors, start=1):
            nxt = np.zeros(len(self.sectors[n]), dtype=np.complex128)
            for c, amp in enumerate(coords):
                if amp == 0.0:
                    continue
                nxt += amp * self.annihilate(c, n).conj().T @ state
            state = nxt
        return state

    def kraus_operators(self, n_photons: int, eta: float) -> list:
        """{K_n}: one operator per vector of lost-photon counts by coordinate,
        mapping the n_photons sector to the (n_photons - n) sector."""
        ops = []
        for loss_vec in _loss_vectors(self.int_dim, n_photons):
            n = sum(loss_vec)
            mat = np.eye(len(self.sectors[n_photons]), dtype=np.complex128)
            level = n_photons
            for coord, times in enumerate(loss_vec):
                for _ in range(times):
                    mat = self.annihilate(coord, level) @ mat
                    level -= 1
            scale = (eta ** ((n_photons - n) / 2.0)) * ((1.0 - eta) ** (n / 2.0))
            scale /= math.sqrt(math.prod(math.factorial(t) for t in loss_vec))
            ops.append((n, scale * mat))
        return ops

    def apply_loss(self, density: np.ndarray, n_photons: int, eta: float) -> dict:
        """Kraus application; returns {remaining photon count: density}."""
        out: dict = {}
        for n, k in self.kraus_operators(n_photons, eta):
            block = k @ density @ k.conj().T
            rem = n_photons - n
            out[rem] = out.get(rem, 0.0) + block
        return out


def _multisets(n_values: int, size: int):
    if size == 0:
        yield ()
        return
    def rec(start, left):
        if left == 0:
            yield ()
            return
        for v in range(start, n_values):
            for rest in rec(v, left - 1):
                yield (v,) + rest
    yield from rec(0, size)


def _loss_vectors(n_values: int, max_total: int):
    def rec(pos, left):
        if pos == n_values:
            yield ()
            return
        for t in range(left + 1):
            for rest in rec(pos + 1, left - t):
                yield (t,) + rest
    yield from rec(0, max_total)


def embedding_vectors(gram: GramMatrix):
    """Concrete orthonormal-coordinate vectors realizing the Gram overlaps."""
    ortho = gram_schmidt(gram)
    r = max(ortho.rank, 1)
    return [np.conj(ortho.gamma[p, :r]) for p in range(gram.n_photons)], r
