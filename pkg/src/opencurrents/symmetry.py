"""Symmetry sectors of Liouville space.

A :class:`LiouvilleSymmetry` lists a group of permutations of the Hilbert
basis (e.g. lattice translations and reflections acting on spin
configurations) together with a Z2 label of every basis state.  Superoperators
built from a symmetric Hamiltonian and a symmetric set of jumps leave the
span of the orbit sums

    e_O = |O|^{-1/2} sum_{(a, b) in O} |a><b|,

invariant, separately for each value of ``parity(a) xor parity(b)``.  The
steady state and the photocurrent vector live in the even sector, the
homodyne vector in the odd one, so every quantity in this package can be
computed inside a sector whose dimension is smaller by roughly
``2 |group|``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class LiouvilleSymmetry:
    perms: np.ndarray
    parity: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        perms = np.atleast_2d(np.asarray(self.perms, dtype=np.int64))
        parity = np.asarray(self.parity, dtype=np.int64) % 2
        d = parity.size
        if perms.shape[1] != d:
            raise ValueError("permutations and parity labels disagree on the dimension")
        for p in perms:
            if not np.array_equal(np.sort(p), np.arange(d)):
                raise ValueError("each group element must be a permutation of the basis")
        object.__setattr__(self, "perms", perms)
        object.__setattr__(self, "parity", parity)

    @property
    def dim(self) -> int:
        return self.parity.size

    @property
    def order(self) -> int:
        return self.perms.shape[0]

    def sector_basis(self, p: int) -> sp.csr_matrix:
        """Real isometry ``P`` (d^2 x m) spanning the symmetric sector of parity ``p``."""
        p = int(p) % 2
        with self._lock:
            if p in self._cache:
                return self._cache[p]
        d = self.dim
        a, b = np.divmod(np.arange(d * d, dtype=np.int64), d)
        a, b = b, a  # column stacking: index = a + b * d
        keep = (self.parity[a] ^ self.parity[b]) == p
        idx = np.flatnonzero(keep)
        aa, bb = a[idx], b[idx]
        rep = aa + bb * d
        for perm in self.perms:
            np.minimum(rep, perm[aa] + perm[bb] * d, out=rep)
        _, orbit, counts = np.unique(rep, return_inverse=True, return_counts=True)
        values = 1.0 / np.sqrt(counts[orbit])
        basis = sp.csr_matrix((values, (idx, orbit)), shape=(d * d, counts.size))
        with self._lock:
            self._cache[p] = basis
        return basis


def trivial_symmetry(parity: np.ndarray) -> LiouvilleSymmetry:
    """Only the Z2 symmetry, no permutations."""
    parity = np.asarray(parity)
    return LiouvilleSymmetry(np.arange(parity.size)[None, :], parity)
