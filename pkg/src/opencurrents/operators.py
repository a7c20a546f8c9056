"""Operator algebra and superoperator assembly.

All superoperators use column stacking: ``vec(rho)`` stacks the columns of
``rho``, so ``vec(A @ rho @ B) = kron(B.T, A) @ vec(rho)`` and the entry
``rho[a, b]`` sits at index ``a + b * d``.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InvalidTruncationError, ShapeError
from .settings import settings

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "+": np.array([[0, 1], [0, 0]], dtype=complex),
    "-": np.array([[0, 0], [1, 0]], dtype=complex),
}
_ALIASES = {"plus": "+", "minus": "-", "−": "-", "up": "+", "down": "-"}


def pauli(axis: str) -> np.ndarray:
    """Return the 2x2 Pauli matrix for ``axis`` in {x, y, z, +, -}.

    The basis is (|up>, |down>), so ``pauli('z') = diag(1, -1)`` and
    ``pauli('+') = (sx + i sy) / 2`` raises |down> to |up>.
    """
    key = _ALIASES.get(axis, axis)
    if key not in _PAULI:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return _PAULI[key].copy()


def boson_ops(nmax: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Annihilation and creation operators truncated to ``nmax`` Fock states."""
    if int(nmax) != nmax or nmax < 2:
        raise InvalidTruncationError(f"Fock truncation must be an integer >= 2, got {nmax}")
    nmax = int(nmax)
    a = sp.diags(np.sqrt(np.arange(1, nmax, dtype=float)), 1, format="csr", dtype=complex)
    return a, a.conj().T.tocsr()


def is_sparse(op) -> bool:
    return sp.issparse(op)


def dimension(op) -> int:
    shape = op.shape
    if len(shape) != 2 or shape[0] != shape[1] or shape[0] < 1:
        raise ShapeError(f"operator must be square with dim >= 1, got shape {shape}")
    return shape[0]


def to_dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=complex)


def to_sparse(op) -> sp.csr_matrix:
    return sp.csr_matrix(op, dtype=complex)


def dagger(op):
    return op.conj().T


def embed_at_site(op, site: int, nsites: int, local_dim: int) -> sp.csr_matrix:
    """Place ``op`` on ``site`` of an ``nsites`` chain; site 0 is the leftmost factor."""
    if not 0 <= site < nsites:
        raise ShapeError(f"site {site} outside 0..{nsites - 1}")
    if dimension(op) != local_dim:
        raise ShapeError(f"operator has dimension {dimension(op)}, expected {local_dim}")
    left = sp.identity(local_dim**site, dtype=complex, format="csr")
    right = sp.identity(local_dim ** (nsites - site - 1), dtype=complex, format="csr")
    return sp.kron(sp.kron(left, to_sparse(op), format="csr"), right, format="csr")


def tensor(*ops) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), (to_sparse(o) for o in ops))


def vec(rho) -> np.ndarray:
    return np.asarray(to_dense(rho)).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ShapeError(f"vector of length {v.size} is not a vectorized {dim}x{dim} matrix")
    return v.reshape(dim, dim, order="F")


def identity_vec(dim: int) -> np.ndarray:
    """``vec(I)``; its (plain) transpose is the trace functional."""
    return np.eye(dim, dtype=complex).reshape(-1, order="F")


def spre(a) -> sp.csr_matrix:
    """Superoperator of left multiplication ``rho -> a rho``."""
    d = dimension(a)
    return sp.kron(sp.identity(d, dtype=complex), to_sparse(a), format="csr")


def spost(b) -> sp.csr_matrix:
    """Superoperator of right multiplication ``rho -> rho b``."""
    d = dimension(b)
    return sp.kron(to_sparse(b).T, sp.identity(d, dtype=complex), format="csr")


def sprepost(a, b) -> sp.csr_matrix:
    """Superoperator ``rho -> a rho b``."""
    return sp.kron(to_sparse(b).T, to_sparse(a), format="csr")


def use_dense(liouville_dim: int) -> bool:
    return liouville_dim <= settings.dense_liouville_max


def storage(matrix, dense: bool | None = None):
    """Return ``matrix`` as dense ndarray or CSR following the dense threshold."""
    if dense is None:
        dense = use_dense(matrix.shape[0])
    if dense:
        return to_dense(matrix)
    return sp.csr_matrix(matrix, dtype=complex)


def assemble_liouvillian(H, jumps: Sequence, dense: bool | None = None):
    """Matrix of ``rho -> -i[H, rho] + sum_j (L rho L^+ - {L^+ L, rho}/2)``.

    Under column stacking this is
    ``-i(I x H - H^T x I) + sum_j [conj(L) x L - I x L^+L / 2 - (L^+L)^T x I / 2]``.
    """
    d = dimension(H)
    for L in jumps:
        if dimension(L) != d:
            raise ShapeError(f"jump operator has dimension {dimension(L)}, Hamiltonian {d}")
    Hs = to_sparse(H)
    eye = sp.identity(d, dtype=complex, format="csr")
    out = -1j * (sp.kron(eye, Hs) - sp.kron(Hs.T, eye))
    for L in jumps:
        Ls = to_sparse(L)
        LdL = (Ls.conj().T @ Ls).tocsr()
        out = out + sp.kron(Ls.conj(), Ls) - 0.5 * sp.kron(eye, LdL) - 0.5 * sp.kron(LdL.T, eye)
    return storage(out.tocsr(), dense)
