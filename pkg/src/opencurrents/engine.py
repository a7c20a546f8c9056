"""Steady states, Liouvillian spectra, propagation and resolvent solves.

Every operation takes full-length vectorized operators (length ``d**2``) but
runs inside the smallest symmetry sector that contains its input whenever the
system carries a :class:`~opencurrents.symmetry.LiouvilleSymmetry`.  Results
are lifted back to the full space, so callers never see the reduction.
"""
from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import operators as ops
from .errors import (
    DegenerateSteadyStateError,
    PropagationError,
    ShapeError,
    SingularSystemError,
    SolverError,
    SpectralError,
)
from .krylov import expv
from .settings import settings
from .symmetry import LiouvilleSymmetry

_HESSENBERG_MIN = 400  # dense generators above this size solve resolvents in Hessenberg form
_LU_CACHE_SIZE = 16


class _Memo:
    """Small thread-safe LRU memo."""

    def __init__(self, maxsize: int | None = None):
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.maxsize = maxsize

    def get(self, key, factory):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = factory()
        with self._lock:
            self._data[key] = value
            if self.maxsize is not None:
                while len(self._data) > self.maxsize:
                    self._data.popitem(last=False)
        return value


class Generator:
    """A Liouvillian restricted to an invariant subspace spanned by ``basis``.

    ``basis`` is a real isometry (``None`` for the full space); vectors are
    mapped in with :meth:`restrict` and out with :meth:`lift`.
    """

    def __init__(self, matrix, basis: sp.csr_matrix | None = None, label: str = "full",
                 dense: bool | None = None):
        self.matrix = ops.storage(matrix, dense)
        if sp.issparse(self.matrix):
            self.matrix = self.matrix.tocsc()
        self.basis = basis
        self.label = label
        self.n = self.matrix.shape[0]
        self.dense = not sp.issparse(self.matrix)
        full_dim = basis.shape[0] if basis is not None else self.n
        d = int(round(np.sqrt(full_dim)))
        self.trace_row = self.restrict_row(ops.identity_vec(d))
        if self.dense:
            self.norm = float(np.abs(self.matrix).sum(axis=1).max())
        else:
            self.norm = float(spl.norm(self.matrix, np.inf))
        self.has_zero_mode = bool(np.linalg.norm(self.trace_row) > 0.5)
        self._lu = _Memo(_LU_CACHE_SIZE)
        self._expm = _Memo(64)
        self._misc = _Memo()
        self._stationary: np.ndarray | None = None

    # --- basis maps -------------------------------------------------------
    def restrict(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        return v if self.basis is None else self.basis.T @ v

    def lift(self, y: np.ndarray) -> np.ndarray:
        return y if self.basis is None else self.basis @ y

    def restrict_row(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        return c if self.basis is None else self.basis.T @ c

    def contains(self, v: np.ndarray, rtol: float = 1e-11) -> bool:
        if self.basis is None:
            return True
        v = np.asarray(v)
        scale = np.linalg.norm(v)
        if scale == 0:
            return True
        return np.linalg.norm(v - self.lift(self.restrict(v))) <= rtol * scale

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x

    # --- stationary vector --------------------------------------------------
    @property
    def stationary(self) -> np.ndarray:
        if self._stationary is None:
            self._stationary = self._solve_stationary()
        return self._stationary

    def _solve_stationary(self) -> np.ndarray:
        if not self.has_zero_mode:
            raise SingularSystemError(f"sector {self.label} has no stationary state")
        t = self.trace_row
        row = int(np.argmax(np.abs(t)))
        rhs = np.zeros(self.n, dtype=complex)
        rhs[row] = 1.0
        try:
            if self.dense:
                M = self.matrix.copy()
                M[row, :] = t
                x = sl.solve(M, rhs, check_finite=False)
            else:
                M = self.matrix.tolil()
                M[row, :] = t
                x = spl.splu(M.tocsc(), permc_spec="MMD_AT_PLUS_A").solve(rhs)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise DegenerateSteadyStateError(
                f"trace-augmented system is singular in sector {self.label}: {exc}"
            ) from exc
        return x / (t @ x)

    def set_stationary(self, x: np.ndarray) -> None:
        self._stationary = np.asarray(x, dtype=complex)

    # --- linear solves --------------------------------------------------------
    def _dense_lu(self, shift: complex):
        return self._lu.get(("lu", shift), lambda: sl.lu_factor(
            shift * np.eye(self.n) - self.matrix, check_finite=False))

    def _hessenberg(self):
        def build():
            Hh, Q = sl.hessenberg(self.matrix, calc_q=True)
            return Hh, Q
        return self._misc.get("hess", build)

    def _sparse_lu(self, shift: complex):
        def build():
            A = (shift * sp.identity(self.n, dtype=complex, format="csc") - self.matrix).tocsc()
            return spl.splu(A, permc_spec="MMD_AT_PLUS_A")
        return self._lu.get(("splu", shift), build)

    def solve_shifted(self, shift: complex, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(shift I - L) y = rhs``."""
        shift = complex(shift)
        if not self.dense:
            try:
                return self._sparse_lu(shift).solve(np.asarray(rhs, dtype=complex))
            except RuntimeError as exc:
                raise SingularSystemError(f"(sI - L) singular at s={shift}: {exc}") from exc
        if self.n < _HESSENBERG_MIN:
            return sl.lu_solve(self._dense_lu(shift), rhs, check_finite=False)
        Hh, Q = self._hessenberg()
        z = Q.conj().T @ rhs
        n = self.n
        # banded storage of (shift I - Hh): one sub-diagonal, full upper triangle
        ab = self._misc.get("hess_band", lambda: _upper_hessenberg_band(-Hh))
        band = ab.copy()
        band[n - 1, :] += shift
        y = sl.solve_banded((1, n - 1), band, z, overwrite_ab=True, check_finite=False)
        return Q @ y

    def solve_drazin(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``-L y = rhs`` for trace-free ``rhs`` with the gauge ``Tr y = 0``."""
        if not self.has_zero_mode:
            return self.solve_shifted(0.0, rhs)
        rho = self.stationary
        t = self.trace_row
        n = self.n
        if self.dense:
            def build():
                B = np.zeros((n + 1, n + 1), dtype=complex)
                B[:n, :n] = -self.matrix
                B[:n, n] = rho
                B[n, :n] = t
                return sl.lu_factor(B, check_finite=False)
            lu = self._misc.get("bordered", build)
            sol = sl.lu_solve(lu, np.append(rhs, 0.0), check_finite=False)
        else:
            def build():
                B = sp.bmat([[-self.matrix, sp.csc_matrix(rho[:, None])],
                             [sp.csr_matrix(t[None, :]), None]], format="csc")
                return spl.splu(B, permc_spec="MMD_AT_PLUS_A")
            lu = self._misc.get("bordered", build)
            sol = lu.solve(np.append(np.asarray(rhs, dtype=complex), 0.0))
        return sol[:n]

    # --- exponentials ------------------------------------------------------------
    def expm_step(self, dt: float) -> np.ndarray:
        key = float(f"{dt:.12e}")
        return self._expm.get(key, lambda: sl.expm(dt * self.matrix))

    def expm_action(self, x: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0.0:
            return x
        if self.dense:
            return self.expm_step(dt) @ x
        return expv(dt, self.matvec, x, anorm=self.norm, m=settings.krylov_maxdim,
                    tol=settings.krylov_tol)


def _upper_hessenberg_band(A: np.ndarray) -> np.ndarray:
    """LAPACK band storage of an upper Hessenberg matrix with (kl, ku) = (1, n-1)."""
    n = A.shape[0]
    ab = np.zeros((n + 1, n), dtype=complex)
    ku = n - 1
    for j in range(n):
        lo = max(0, j - ku)
        hi = min(n, j + 2)
        ab[ku + lo - j: ku + hi - j, j] = A[lo:hi, j]
    return ab


@dataclass(frozen=True)
class Jump:
    operator: object
    weight: float = -1.0


class LindbladSystem:
    """Hamiltonian, weighted jump operators and the assembled Liouvillian.

    Treat instances as immutable: derived generators and factorizations are
    cached on first use.
    """

    def __init__(self, hamiltonian, jumps: Sequence, weights: Sequence[float] | None = None,
                 metadata: dict | None = None, symmetry: LiouvilleSymmetry | None = None,
                 dense: bool | None = None):
        d = ops.dimension(hamiltonian)
        jump_ops = list(jumps)
        if weights is None:
            weights = [-1.0] * len(jump_ops)
        if len(weights) != len(jump_ops):
            raise ShapeError("one weight per jump operator is required")
        for L in jump_ops:
            if ops.dimension(L) != d:
                raise ShapeError("jump operators must share the Hamiltonian dimension")
        if symmetry is not None and symmetry.dim != d:
            raise ShapeError("symmetry acts on a different Hilbert-space dimension")
        self.hamiltonian = hamiltonian
        self.jumps = tuple(Jump(L, float(w)) for L, w in zip(jump_ops, weights))
        self.liouvillian = ops.assemble_liouvillian(hamiltonian, jump_ops, dense=dense)
        self.metadata = dict(metadata or {})
        self.symmetry = symmetry
        self._generators: dict = {}
        self._lock = threading.Lock()

    @property
    def dim(self) -> int:
        return ops.dimension(self.hamiltonian)

    @property
    def liouville_dim(self) -> int:
        return self.dim**2

    @property
    def jump_operators(self) -> list:
        return [j.operator for j in self.jumps]

    @property
    def weights(self) -> np.ndarray:
        return np.array([j.weight for j in self.jumps])

    def with_weights(self, weights: Sequence[float]) -> "LindbladSystem":
        """Copy with new current weights; the Liouvillian and caches are shared."""
        if len(weights) != len(self.jumps):
            raise ShapeError("one weight per jump operator is required")
        clone = object.__new__(LindbladSystem)
        clone.__dict__.update(self.__dict__)
        clone.jumps = tuple(Jump(j.operator, float(w)) for j, w in zip(self.jumps, weights))
        return clone

    def generator(self, sector: int | None = None) -> Generator:
        """Full-space generator (``sector=None``) or the symmetric sector of given parity."""
        if sector is not None and self.symmetry is None:
            sector = None
        key = sector
        with self._lock:
            if key in self._generators:
                return self._generators[key]
        dense = not sp.issparse(self.liouvillian)
        if sector is None:
            gen = Generator(self.liouvillian, None, "full", dense)
        else:
            P = self.symmetry.sector_basis(sector)
            L = ops.to_sparse(self.liouvillian)
            reduced = (P.T @ (L @ P)).tocsr()
            gen = Generator(reduced, P, f"parity{sector}", dense)
        with self._lock:
            return self._generators.setdefault(key, gen)

    def frame_for(self, *vectors) -> Generator:
        """Smallest generator whose subspace contains all ``vectors``."""
        if self.symmetry is not None:
            for p in (0, 1):
                gen = self.generator(p)
                if all(gen.contains(v) for v in vectors):
                    return gen
        return self.generator(None)


@dataclass(frozen=True)
class SteadyState:
    rho_vec: np.ndarray
    residual: float
    purity: float
    sector: str = "full"

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.rho_vec.size)))

    @property
    def rho(self) -> np.ndarray:
        return ops.unvec(self.rho_vec, self.dim)

    def expect(self, op) -> complex:
        return complex(np.trace(ops.to_dense(op) @ self.rho))


@dataclass(frozen=True)
class SpectralInfo:
    eigenvalues: np.ndarray
    gap: float
    sector: str = "full"
    has_zero_mode: bool = True

    @property
    def slowest_frequency(self) -> float:
        """|Im| of the slowest-decaying oscillating mode, 0 if none."""
        for lam in self.eigenvalues:
            if abs(lam) > 1e-9 * max(1.0, abs(self.eigenvalues).max()) and abs(lam.imag) > 1e-9:
                return float(abs(lam.imag))
        return 0.0


def _liouvillian_norm(sys: LindbladSystem) -> float:
    L = sys.liouvillian
    if sp.issparse(L):
        return float(spl.norm(L, np.inf))
    return float(np.abs(L).sum(axis=1).max())


def _check_degeneracy(gen: Generator) -> None:
    tol = settings.degeneracy_tol * gen.norm
    if gen.n <= 2:
        return
    if gen.dense and gen.n <= 600:
        lam = np.linalg.eigvals(gen.matrix)
    else:
        A = sp.csc_matrix(gen.matrix)
        try:
            lam = spl.eigs(A, k=2, sigma=1e-3 * tol + 1e-12, which="LM",
                           return_eigenvectors=False, maxiter=5000)
        except spl.ArpackNoConvergence as exc:
            raise SpectralError(f"degeneracy probe did not converge: {exc}") from exc
    small = np.sort(np.abs(lam))[:2]
    if small.size == 2 and small[1] < tol:
        raise DegenerateSteadyStateError(
            f"null space of the Liouvillian looks at least two-dimensional "
            f"(|lambda| = {small[0]:.2e}, {small[1]:.2e}; tolerance {tol:.2e})"
        )


def steady_state(sys: LindbladSystem, *, check_degeneracy: bool = True) -> SteadyState:
    """Trace-normalized null vector of the Liouvillian.

    The trace-augmented system (one row of L replaced by the trace functional)
    is solved directly, densely or with sparse LU depending on size.
    """
    gen = sys.generator(0) if sys.symmetry is not None else sys.generator(None)
    if check_degeneracy:
        _check_degeneracy(gen)
    x = gen.lift(gen.stationary)
    d = sys.dim
    rho = ops.unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    rho_vec = ops.vec(rho)
    gen.set_stationary(gen.restrict(rho_vec))
    residual = float(np.linalg.norm(sys.liouvillian @ rho_vec))
    scale = _liouvillian_norm(sys)
    if not np.isfinite(residual) or residual > 1e-10 * max(scale, 1.0):
        raise SolverError("steady-state solve did not converge", residual)
    purity = float(np.real(np.vdot(rho_vec, rho_vec)))
    return SteadyState(rho_vec, residual, purity, gen.label)


def liouvillian_spectrum(sys: LindbladSystem, nev: int = 6, sector: int | None = None) -> SpectralInfo:
    """The ``nev`` eigenvalues nearest zero, sorted by descending real part."""
    if nev < 2:
        raise ValueError("nev must be >= 2")
    gen = sys.generator(sector)
    if gen.dense:
        lam = np.linalg.eigvals(gen.matrix)
    else:
        k = min(nev, gen.n - 2)
        shift = 1e-4 * max(gen.norm, 1.0)
        try:
            lam = spl.eigs(gen.matrix, k=k, sigma=shift, which="LM",
                           return_eigenvectors=False, maxiter=10_000)
        except spl.ArpackNoConvergence as exc:
            raise SpectralError(f"shift-invert eigensolver did not converge: {exc}") from exc
    lam = np.asarray(lam, dtype=complex)
    order = np.lexsort((np.abs(lam.imag), -lam.real))
    lam = lam[order][:nev]
    zero_tol = 1e-9 * max(gen.norm, 1.0)
    has_zero = bool(abs(lam[0]) < zero_tol)
    gap = float(-lam[1].real) if has_zero else float(-lam[0].real)
    return SpectralInfo(lam, max(gap, 0.0), gen.label, has_zero)


def _validate_grid(tau_grid) -> np.ndarray:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise ValueError("tau grid must be a non-empty 1D sequence")
    if tau[0] < 0 or np.any(np.diff(tau) <= 0):
        raise ValueError("tau grid must be increasing and start at tau >= 0")
    return tau


def propagate(sys: LindbladSystem, v0: np.ndarray, tau_grid, observable: np.ndarray | None = None):
    """``exp(L tau_k) v0`` on the grid.

    With ``observable`` (a row vector ``c`` of length d^2) the scalars
    ``c @ exp(L tau_k) v0`` are returned instead of the vectors.
    """
    tau = _validate_grid(tau_grid)
    v0 = np.asarray(v0, dtype=complex)
    if v0.size != sys.liouville_dim:
        raise ShapeError(f"vector length {v0.size} != {sys.liouville_dim}")
    gen = sys.frame_for(v0)
    x = gen.restrict(v0)
    row = None if observable is None else gen.restrict_row(observable)
    steps = np.diff(np.concatenate([[0.0], tau]))
    out = []
    for dt in steps:
        x = gen.expm_action(x, float(dt))
        if not np.all(np.isfinite(x)):
            raise PropagationError("propagation produced non-finite values")
        out.append(row @ x if row is not None else gen.lift(x))
    return np.array(out)


def resolvent_solve(sys: LindbladSystem, omega: float, rhs: np.ndarray,
                    observable: np.ndarray | None = None):
    """Solve ``(i omega - L) y = rhs``; at ``omega = 0`` the gauge ``Tr y = 0`` is imposed."""
    rhs = np.asarray(rhs, dtype=complex)
    if rhs.size != sys.liouville_dim:
        raise ShapeError(f"vector length {rhs.size} != {sys.liouville_dim}")
    gen = sys.frame_for(rhs)
    r = gen.restrict(rhs)
    if omega == 0.0:
        scale = max(np.linalg.norm(r), 1e-300)
        if gen.has_zero_mode and abs(gen.trace_row @ r) > 1e-10 * max(scale, 1.0):
            raise SingularSystemError(
                "right-hand side has a nonzero trace: (0 - L) y = rhs has no solution")
        y = gen.solve_drazin(r)
    else:
        y = gen.solve_shifted(1j * float(omega), r)
    if observable is not None:
        return gen.restrict_row(observable) @ y
    return gen.lift(y)


def resolvent_trace(sys: LindbladSystem, omegas, rhs: np.ndarray, observable: np.ndarray) -> np.ndarray:
    """``observable @ (i w - L)^{-1} rhs`` for many frequencies, sharing one frame."""
    rhs = np.asarray(rhs, dtype=complex)
    gen = sys.frame_for(rhs)
    r = gen.restrict(rhs)
    row = gen.restrict_row(observable)
    out = np.empty(len(omegas), dtype=complex)
    for k, w in enumerate(omegas):
        if w == 0.0:
            out[k] = row @ gen.solve_drazin(r)
        else:
            out[k] = row @ gen.solve_shifted(1j * float(w), r)
    return out
