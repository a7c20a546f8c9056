"""Benchmark systems: the dissipative XYZ lattice and the two-photon driven Kerr resonator."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import operators as ops
from .engine import LindbladSystem, SteadyState
from .errors import CapacityError, DomainError, InvalidTruncationError, TruncationTooSmallError
from .settings import settings
from .symmetry import LiouvilleSymmetry, trivial_symmetry

TAIL_LIMIT = 1e-8
NMAX_CAP = 120
# at large U the photon distribution is wide compared with the classical occupation
NMAX_FLOOR = 30


@dataclass(frozen=True)
class XYZParams:
    Jx: float = 0.9
    Jy: float = 1.0
    Jz: float = 1.0
    gamma: float = 1.0
    rows: int = 2
    cols: int = 2
    periodic: bool = True
    doubled_bonds: bool = False

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DomainError("lattice extents must be >= 1")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")

    @property
    def nsites(self) -> int:
        return self.rows * self.cols

    @property
    def L(self) -> float:
        """Linear size used in finite-size scaling: sqrt of the site count."""
        return math.sqrt(self.nsites)


@dataclass(frozen=True)
class KerrParams:
    Delta: float = 0.0
    U: float = 1 / 30
    G: float = 1.0
    gamma: float = 1.0
    nmax: int | None = None

    def __post_init__(self):
        if not self.U > 0:
            raise DomainError("U must be positive")
        if self.G < 0:
            raise DomainError("G must be non-negative")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if self.nmax is not None and (int(self.nmax) != self.nmax or self.nmax < 2):
            raise InvalidTruncationError(f"Fock truncation must be an integer >= 2, got {self.nmax}")

    @property
    def truncation(self) -> int:
        return self.nmax if self.nmax is not None else default_nmax(self.G, self.U, self.gamma)


def default_nmax(G: float, U: float, gamma: float = 1.0) -> int:
    n = math.ceil(4 * math.sqrt(G**2 + gamma**2) / (2 * U))
    return max(min(n, NMAX_CAP), NMAX_FLOOR)


def lattice_bonds(rows: int, cols: int, periodic: bool = True, doubled: bool = False) -> list[tuple[int, int]]:
    """Nearest-neighbour bonds of a row-major ``rows x cols`` lattice.

    On a periodic extent-2 direction the wrap-around bond coincides with the
    direct one; it is kept once unless ``doubled``.
    """
    bonds = []
    for r, c in itertools.product(range(rows), range(cols)):
        s = r * cols + c
        for dr, dc in ((0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if not periodic and (rr >= rows or cc >= cols):
                continue
            rr, cc = rr % rows, cc % cols
            t = rr * cols + cc
            if t != s:
                bonds.append((min(s, t), max(s, t)))
    if doubled:
        return bonds
    return sorted(set(bonds))


def lattice_automorphisms(rows: int, cols: int, periodic: bool = True) -> list[np.ndarray]:
    """Site permutations that map the bond set onto itself."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    shifts = itertools.product(range(rows), range(cols)) if periodic else [(0, 0)]
    maps = []
    for (tr, tc), fr, fc in itertools.product(list(shifts), (False, True), (False, True)):
        rr = (r + tr) % rows
        cc = (c + tc) % cols
        rr = rows - 1 - rr if fr else rr
        cc = cols - 1 - cc if fc else cc
        maps.append(rr * cols + cc)
        if rows == cols:
            maps.append(cc * cols + rr)
    bonds = set(lattice_bonds(rows, cols, periodic))
    out, seen = [], set()
    for m in maps:
        key = tuple(m)
        if key in seen:
            continue
        image = {(min(m[a], m[b]), max(m[a], m[b])) for a, b in bonds}
        if image == bonds:
            seen.add(key)
            out.append(m)
    return out


def _spin_symmetry(rows: int, cols: int, periodic: bool) -> LiouvilleSymmetry:
    n = rows * cols
    states = np.arange(2**n)
    # site 0 is the leftmost tensor factor, i.e. the most significant bit; bit 1 = spin down
    bits = (states[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    parity = bits.sum(axis=1) % 2
    perms = []
    for m in lattice_automorphisms(rows, cols, periodic):
        moved = np.zeros_like(bits)
        moved[:, m] = bits
        perms.append(moved @ (1 << (n - 1 - np.arange(n))))
    return LiouvilleSymmetry(np.array(perms), parity)


def build_xyz(p: XYZParams, symmetric: bool = True, dense: bool | None = None) -> LindbladSystem:
    """Dissipative XYZ model with one ``sqrt(gamma) sigma^-`` jump per site."""
    if p.nsites > settings.max_sites:
        raise CapacityError(f"{p.rows}x{p.cols} lattice exceeds the {settings.max_sites}-site cap")
    n = p.nsites
    sig = {a: [ops.embed_at_site(ops.pauli(a), s, n, 2) for s in range(n)] for a in "xyz"}
    bonds = lattice_bonds(p.rows, p.cols, p.periodic, p.doubled_bonds)
    H = sp.csr_matrix((2**n, 2**n), dtype=complex)
    for i, j in bonds:
        for a, J in zip("xyz", (p.Jx, p.Jy, p.Jz)):
            H = H + J * (sig[a][i] @ sig[a][j])
    lower = ops.pauli("-")
    jumps = [math.sqrt(p.gamma) * ops.embed_at_site(lower, s, n, 2) for s in range(n)]
    meta = {
        "model": "xyz",
        **asdict(p),
        "site_order": "row-major",
        "bond_convention": "doubled" if p.doubled_bonds else "deduplicated",
        "nbonds": len(bonds),
    }
    # doubling multiplies every bond of an extent-2 direction, so the automorphisms survive
    sym = _spin_symmetry(p.rows, p.cols, p.periodic) if symmetric else None
    return LindbladSystem(H.tocsr(), jumps, metadata=meta, symmetry=sym, dense=dense)


def build_kerr(p: KerrParams, symmetric: bool = True, dense: bool | None = None) -> LindbladSystem:
    """Kerr resonator with two-photon drive and single-photon loss, truncated to ``nmax`` levels."""
    nmax = p.truncation
    a, ad = ops.boson_ops(nmax)
    num = ad @ a
    H = -p.Delta * num + 0.5 * p.U * (ad @ ad @ a @ a) + 0.25 * p.G * (ad @ ad + a @ a)
    meta = {"model": "kerr", **asdict(p), "nmax": nmax}
    sym = trivial_symmetry(np.arange(nmax) % 2) if symmetric else None
    return LindbladSystem(H.tocsr(), [math.sqrt(p.gamma) * a], metadata=meta, symmetry=sym, dense=dense)


def kerr_tail_mass(ss: SteadyState, keep: int = 5) -> float:
    """Steady-state population in the top ``keep`` Fock levels."""
    pops = np.real(np.diag(ss.rho))
    return float(max(pops[-keep:].sum(), 0.0))


def check_kerr_truncation(ss: SteadyState, keep: int = 5, limit: float = TAIL_LIMIT) -> float:
    tail = kerr_tail_mass(ss, keep)
    if tail >= limit:
        raise TruncationTooSmallError(tail, ss.dim)
    return tail


@dataclass(frozen=True)
class QubitParams:
    """Driven qubit with decay and incoherent pumping; ``Omega = 0`` is the pumped qubit."""

    Omega: float = 0.0
    gamma_down: float = 1.0
    gamma_up: float = 1.0

    def __post_init__(self):
        if self.gamma_down < 0 or self.gamma_up < 0:
            raise DomainError("rates must be nonnegative")


def build_qubit(p: QubitParams) -> LindbladSystem:
    """``H = Omega sigma_x``, jumps ``sqrt(gamma_down) sigma_-`` and ``sqrt(gamma_up) sigma_+``."""
    rates = ((p.gamma_down, ops.pauli("-")), (p.gamma_up, ops.pauli("+")))
    jumps = [sp.csr_matrix(math.sqrt(r) * L) for r, L in rates if r > 0]
    return LindbladSystem(sp.csr_matrix(p.Omega * ops.pauli("x")), jumps,
                          metadata={"model": "qubit", **asdict(p)})
