"""Mean-field theory of the XYZ lattice and of the Kerr resonator.

XYZ: single-site Bloch equations with the square-lattice coordination folded
into a factor 8, their fixed points, the critical coupling, the current
correlation of the frozen-field single-site Liouvillian and the cubic for its
nonzero eigenvalues.  Kerr: the coherent-field flow and its attractors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, root

from . import operators as ops
from .engine import LindbladSystem, steady_state
from .errors import DomainError, NoSolutionError
from .models import KerrParams, XYZParams

FLOW_TOL = 1e-11


@dataclass(frozen=True)
class MFState:
    Sx: float
    Sy: float
    Sz: float

    def __post_init__(self):
        if self.Sx**2 + self.Sy**2 + self.Sz**2 > 1 + 1e-9:
            raise DomainError("Bloch vector longer than one")

    def as_array(self) -> np.ndarray:
        return np.array([self.Sx, self.Sy, self.Sz])


@dataclass(frozen=True)
class KerrMFState:
    alpha: complex

    @property
    def n(self) -> float:
        return abs(self.alpha) ** 2


# --- XYZ -------------------------------------------------------------------


def _bloch_rhs(s: np.ndarray, p: XYZParams) -> np.ndarray:
    x, y, z = s
    g = p.gamma
    return np.array([
        8 * (p.Jy - p.Jz) * y * z - 0.5 * g * x,
        8 * (p.Jz - p.Jx) * x * z - 0.5 * g * y,
        8 * (p.Jx - p.Jy) * x * y - g * (z + 1),
    ])


def xyz_mf_flow(state: MFState, p: XYZParams) -> np.ndarray:
    """Time derivative (dSx, dSy, dSz) of the mean-field Bloch equations."""
    return _bloch_rhs(state.as_array(), p)


def xyz_mf_critical_jy(p: XYZParams):
    """Critical ``Jy`` of the mean-field model; exact when the inputs are Fractions."""
    if not p.Jz > p.Jx:
        raise DomainError("the critical coupling needs Jz > Jx")
    return p.Jz + p.gamma**2 / (256 * (p.Jz - p.Jx))


def xyz_mf_steady(p: XYZParams, branch: str = "ferro") -> MFState:
    """Paramagnetic (all spins down) or ferromagnetic fixed point.

    The ferromagnetic point has ``Sz = -gamma / (16 r)`` with
    ``r = sqrt((Jy - Jz)(Jz - Jx))``; ``Sx > 0`` is chosen and ``Sy`` follows
    from the ``dSy/dt = 0`` equation, so it carries the opposite sign.
    """
    if branch == "para":
        return MFState(0.0, 0.0, -1.0)
    if branch != "ferro":
        raise ValueError(f"unknown branch {branch!r}")
    if not (p.Jy > p.Jz > p.Jx):
        raise NoSolutionError("the ferromagnetic branch needs Jy > Jz > Jx")
    if not p.Jy > xyz_mf_critical_jy(p):
        raise NoSolutionError(f"no ferromagnetic fixed point at Jy={p.Jy} <= Jy_c")
    g = p.gamma
    r = math.sqrt((p.Jy - p.Jz) * (p.Jz - p.Jx))
    sz = -g / (16 * r)
    sx = math.sqrt(g * (16 * r - g) / (128 * (p.Jy - p.Jx) * (p.Jz - p.Jx)))
    sy = 16 * (p.Jz - p.Jx) * sx * sz / g
    return MFState(sx, sy, sz)


def integrate_bloch(p: XYZParams, seed: Sequence[float] = (0.3, 0.3, -0.5),
                    t_chunk: float = 200.0, max_chunks: int = 50) -> MFState:
    """Relax the Bloch flow from ``seed`` and polish the end point with a root solve."""
    s = np.asarray(seed, dtype=float)
    for _ in range(max_chunks):
        sol = solve_ivp(lambda t, v: _bloch_rhs(v, p), (0, t_chunk), s, method="RK45",
                        rtol=1e-10, atol=1e-12)
        s = sol.y[:, -1]
        if np.linalg.norm(_bloch_rhs(s, p)) < 1e-6:
            break
    fine = root(lambda v: _bloch_rhs(v, p), s, method="hybr", tol=1e-14)
    # hybr may report slow progress after already landing on the root, so judge by the flow
    if (np.linalg.norm(fine.x - s) < 1e-3
            and np.linalg.norm(_bloch_rhs(fine.x, p)) < np.linalg.norm(_bloch_rhs(s, p))):
        s = fine.x
    if np.linalg.norm(_bloch_rhs(s, p)) > FLOW_TOL:
        raise NoSolutionError("Bloch flow did not reach a fixed point")
    return MFState(*s)


def rabi_order_parameter(p: XYZParams) -> float:
    """Linearized mean-field Rabi frequency ``kappa sqrt(Jy - Jy_c)`` near the critical point.

    ``kappa**2`` is the ``Jy -> Jy_c`` limit of ``(Jx Sx')**2 / (Jy - Jy_c)``
    where ``Sx'`` is the order parameter expression carrying an extra ``Jx``
    prefactor; the limit is taken numerically by Richardson extrapolation.
    """
    jc = float(xyz_mf_critical_jy(p))
    delta = float(p.Jy) - jc
    if delta <= 0:
        return 0.0
    return _kappa(p) * math.sqrt(delta)


def _kappa(p: XYZParams) -> float:
    jx, jz, g = float(p.Jx), float(p.Jz), float(p.gamma)
    jc = float(xyz_mf_critical_jy(p))

    def ratio(d: float) -> float:
        jy = jc + d
        r = math.sqrt((jy - jz) * (jz - jx))
        sx = jx * math.sqrt(g) / (8 * math.sqrt(2 * (jz - jx))) * math.sqrt((16 * r - g) / (jy - jx))
        return (jx * sx) ** 2 / d

    h = 1e-5
    k2 = 2 * ratio(h / 2) - ratio(h)
    return math.sqrt(k2)


def xyz_mf_jy_peak(p: XYZParams, method: str = "closed"):
    """Coupling at which the mean-field Rabi frequency first exceeds ``gamma / 2``.

    ``closed``: ``Jy_c + (Jy_c - Jx) gamma^2 / (4 Jx^4)``, exact for Fraction input.
    ``numeric``: root of ``rabi_order_parameter(Jy) = gamma / 2``.
    ``nonlinear``: root of ``Jx Sx(Jy) = gamma / 2`` with the exact fixed point ``Sx``.
    """
    jc = xyz_mf_critical_jy(p)
    if method == "closed":
        return jc + (jc - p.Jx) * p.gamma**2 / (4 * p.Jx**4)
    g = float(p.gamma)
    if g == 0:
        return float(jc)
    jcf = float(jc)
    if method == "numeric":
        kappa = _kappa(p)
        f = lambda jy: kappa * math.sqrt(jy - jcf) - g / 2
        hi = jcf + (g / kappa) ** 2
        return brentq(f, jcf, hi, xtol=1e-14, rtol=1e-14)
    if method == "nonlinear":
        def f(jy):
            q = XYZParams(Jx=float(p.Jx), Jy=jy, Jz=float(p.Jz), gamma=g)
            return float(p.Jx) * xyz_mf_steady(q).Sx - g / 2
        grid = jcf + np.geomspace(1e-9, 10.0, 400)
        vals = [f(j) for j in grid]
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa < 0 <= fb:
                return brentq(f, a, b, xtol=1e-14)
        raise NoSolutionError("Jx Sx never reaches gamma/2 on this branch")
    raise ValueError(f"unknown method {method!r}")


def mf_single_site_system(p: XYZParams, state: MFState) -> LindbladSystem:
    """Single-site Lindblad system with the mean fields frozen at ``state``."""
    H = 4 * (p.Jx * state.Sx * ops.pauli("x") + p.Jy * state.Sy * ops.pauli("y")
             + p.Jz * state.Sz * ops.pauli("z"))
    L = math.sqrt(p.gamma) * ops.pauli("-")
    return LindbladSystem(H, [L], metadata={"model": "xyz-meanfield", "Jy": p.Jy})


@dataclass(frozen=True)
class MFCorrelation:
    tau: np.ndarray
    C: np.ndarray
    state: MFState
    paramagnetic: bool


def xyz_mf_correlation(p: XYZParams, tau_grid) -> MFCorrelation:
    """Current correlation of the frozen-field single-site Liouvillian.

    In the paramagnetic phase the steady state is dark and ``C`` vanishes
    identically; this is reported through ``paramagnetic=True``.
    """
    from .stats import correlation

    tau = np.asarray(tau_grid, dtype=float)
    try:
        state = xyz_mf_steady(p, "ferro")
    except NoSolutionError:
        return MFCorrelation(tau, np.zeros_like(tau), MFState(0.0, 0.0, -1.0), True)
    sys = mf_single_site_system(p, state)
    ss = steady_state(sys)
    return MFCorrelation(tau, correlation(sys, ss, tau), state, False)


def xyz_mf_cubic_roots(p: XYZParams, state: MFState) -> np.ndarray:
    """Roots of the mean-field eigenvalue cubic, sorted by descending real part."""
    g = p.gamma
    sx2, sy2, sz2 = (p.Jx * state.Sx) ** 2, (p.Jy * state.Sy) ** 2, (p.Jz * state.Sz) ** 2
    coeffs = [1.0, 4 * g, 256 * (sx2 + sy2 + sz2 + 5 * g**2 / 256),
              256 * g * (sx2 + sy2 + 2 * sz2 + g**2 / 128)]
    r = np.roots(coeffs)
    return r[np.lexsort((r.imag, -r.real))]


def mf_rates_from_roots(roots: Iterable[complex]) -> tuple[float, float]:
    """(gamma_mf, omega_mf) of the complex pair.

    The cubic is written in a variable equal to twice the Liouvillian
    eigenvalue, so the pair is halved before reading off the rates.
    """
    roots = np.asarray(list(roots))
    cplx = roots[np.abs(roots.imag) > 1e-12 * max(1.0, np.abs(roots).max())]
    if cplx.size == 0:
        raise NoSolutionError("the cubic has no complex-conjugate pair")
    lam = cplx[0] / 2
    return float(-lam.real), float(abs(lam.imag))


# --- Kerr ------------------------------------------------------------------


def kerr_mf_occupation(p: KerrParams):
    """Mean-field photon number at zero detuning."""
    if p.G <= p.gamma:
        return 0.0
    return math.sqrt(p.G**2 - p.gamma**2) / (2 * p.U)


def kerr_mf_flow(state: KerrMFState, p: KerrParams) -> complex:
    a = complex(state.alpha)
    return (-1j * p.U * abs(a) ** 2 - p.gamma / 2 + 1j * p.Delta) * a - 0.5j * p.G * a.conjugate()


def _kerr_rhs(v: np.ndarray, p: KerrParams) -> np.ndarray:
    f = kerr_mf_flow(KerrMFState(complex(v[0], v[1])), p)
    return np.array([f.real, f.imag])


def kerr_mf_relax(p: KerrParams, seed: complex = 1 + 1j, t_chunk: float = 50.0,
                  max_chunks: int = 2000) -> KerrMFState:
    """Integrate the Kerr flow from ``seed`` into a basin, then polish the fixed point by Newton."""
    v = np.array([complex(seed).real, complex(seed).imag])
    for _ in range(max_chunks):
        sol = solve_ivp(lambda t, y: _kerr_rhs(y, p), (0, t_chunk), v, method="RK45",
                        rtol=1e-8, atol=1e-10)
        v = sol.y[:, -1]
        if np.linalg.norm(_kerr_rhs(v, p)) < 1e-6 * max(1.0, np.linalg.norm(v)):
            break
    fine = root(lambda y: _kerr_rhs(y, p), v, method="hybr", tol=1e-15)
    if (np.linalg.norm(fine.x - v) < 1e-3 * max(1.0, np.linalg.norm(v))
            and np.linalg.norm(_kerr_rhs(fine.x, p)) < np.linalg.norm(_kerr_rhs(v, p))):
        v = fine.x
    if np.linalg.norm(_kerr_rhs(v, p)) > FLOW_TOL * max(1.0, np.linalg.norm(v) ** 3):
        raise NoSolutionError("Kerr flow did not reach a fixed point")
    return KerrMFState(complex(v[0], v[1]))


DEFAULT_SEEDS = (0.0 + 0.0j, 0.05 + 0.05j, 1 + 1j, 3 + 3j, 6 - 2j, 10 + 10j)


def kerr_mf_attractors(p: KerrParams, seeds: Sequence[complex] | None = None) -> list[KerrMFState]:
    """Distinct fixed points reached from ``seeds``, sorted by occupation.

    The field equation is invariant under ``alpha -> -alpha``; both members
    of such a pair are reported as one attractor.
    """
    if seeds is None:
        scale = math.sqrt(max(abs(p.Delta) + p.G, 1.0) / p.U)
        seeds = list(DEFAULT_SEEDS) + [scale * (1 + 1j), scale * (0.3 - 1j)]
    found: list[KerrMFState] = []
    for s in seeds:
        st = kerr_mf_relax(p, s)
        if st.alpha.real < 0 or (st.alpha.real == 0 and st.alpha.imag < 0):
            st = KerrMFState(-st.alpha)
        if all(abs(st.alpha - f.alpha) > 1e-6 * max(1.0, abs(f.alpha)) for f in found):
            found.append(st)
    return sorted(found, key=lambda s: s.n)


def kerr_mf_branch(p: KerrParams, reference_n: float | None = None,
                   seeds: Sequence[complex] | None = None) -> KerrMFState:
    """Attractor selected as the physical branch.

    With ``reference_n`` (e.g. the full quantum occupation) the attractor with
    the nearest occupation is returned; otherwise the most populated one.
    """
    attractors = kerr_mf_attractors(p, seeds)
    if reference_n is None:
        return attractors[-1]
    return min(attractors, key=lambda s: abs(s.n - reference_n))


def kerr_quantum_occupation(p: KerrParams) -> float:
    """Steady-state ``<a^+ a>`` from the full master equation."""
    from .models import build_kerr, check_kerr_truncation

    sys = build_kerr(p)
    ss = steady_state(sys, check_degeneracy=False)
    check_kerr_truncation(ss)
    return float(np.real(np.sum(np.arange(ss.dim) * np.diag(ss.rho))))


def kerr_first_order_scan(base: KerrParams, G_grid: Sequence[float],
                          selector: str = "quantum") -> tuple[np.ndarray, np.ndarray]:
    """Mean-field ``|alpha|^2`` along ``G_grid`` on the selected branch.

    ``selector``: ``quantum`` (nearest to the full quantum occupation),
    ``upper`` (most populated attractor) or ``lower`` (least populated).
    """
    out = []
    for G in G_grid:
        q = KerrParams(Delta=base.Delta, U=base.U, G=float(G), gamma=base.gamma, nmax=base.nmax)
        att = kerr_mf_attractors(q)
        if selector == "upper" or len(att) == 1:
            out.append(att[-1].n)
        elif selector == "lower":
            out.append(att[0].n)
        elif selector == "quantum":
            ref = kerr_quantum_occupation(q)
            out.append(min(att, key=lambda s: abs(s.n - ref)).n)
        else:
            raise ValueError(f"unknown selector {selector!r}")
    return np.asarray(G_grid, dtype=float), np.array(out)


def largest_jump(G: np.ndarray, n: np.ndarray) -> tuple[float, float]:
    """Midpoint and size of the largest step of ``n`` between neighbouring grid points."""
    d = np.abs(np.diff(n))
    k = int(np.argmax(d))
    return float(0.5 * (G[k] + G[k + 1])), float(d[k])
