"""Output-current statistics: J, K, C(tau), S(omega), tau_s and D.

A :class:`Detector` bundles the current superoperator of a measurement
scheme with its trace row and white-noise strength.  Photodetection counts
weighted jumps, ``rho -> sum_j nu_j L_j rho L_j^+``; the homodyne detector
lives in :mod:`opencurrents.homodyne`.  Everything here works for either.

With ``x' = X rho_ss - J rho_ss`` (trace free) and the trace row ``c`` of the
current superoperator ``X``:

    C(tau) = c . exp(L tau) x'
    S(w)   = K + 2 Re c . (i w - L)^{-1} x'
    tau_s  = c . (-L)^{-1} x' / C(0)       (gauge Tr = 0)

so that ``S(0) - K = 2 C(0) tau_s`` holds by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import operators as ops
from .engine import (
    LindbladSystem,
    SteadyState,
    liouvillian_spectrum,
    propagate,
    resolvent_solve,
    resolvent_trace,
)
from .errors import EmptyChannelError, SingularSystemError, UndefinedTimescaleError

TAU_MAX_CAP = 5000.0
N_OMEGA = 801


@dataclass(frozen=True)
class Detector:
    scheme: str
    superop: sp.csr_matrix
    row: np.ndarray
    noise_row: np.ndarray | None = None
    noise_const: float = 0.0

    def current(self, ss: SteadyState) -> float:
        return float(np.real(self.row @ ss.rho_vec))

    def white_noise(self, ss: SteadyState) -> float:
        if self.noise_row is None:
            return float(self.noise_const)
        return float(np.real(self.noise_row @ ss.rho_vec))

    def fluctuation(self, ss: SteadyState) -> np.ndarray:
        """``x' = X rho_ss - J rho_ss``."""
        return self.superop @ ss.rho_vec - self.current(ss) * ss.rho_vec


def _require_jumps(sys: LindbladSystem) -> None:
    if not sys.jumps:
        raise EmptyChannelError("the system has no jump operators")


def current_superop(sys: LindbladSystem, weights=None) -> sp.csr_matrix:
    """Matrix of ``rho -> sum_j nu_j L_j rho L_j^+``."""
    _require_jumps(sys)
    w = sys.weights if weights is None else np.asarray(weights, dtype=float)
    d = sys.dim
    out = sp.csr_matrix((d * d, d * d), dtype=complex)
    for nu, L in zip(w, sys.jump_operators):
        if nu != 0:
            Ls = ops.to_sparse(L)
            out = out + nu * sp.kron(Ls.conj(), Ls, format="csr")
    return out.tocsr()


def _jump_rate_rows(sys: LindbladSystem, weights) -> np.ndarray:
    # Tr[L X L^+] = Tr[(L^+ L) X] = vec((L^+ L)^T) . vec(X)
    d = sys.dim
    row = np.zeros(d * d, dtype=complex)
    for nu, L in zip(weights, sys.jump_operators):
        Ls = ops.to_sparse(L)
        row += nu * ops.vec((Ls.conj().T @ Ls).T)
    return row


def photodetector(sys: LindbladSystem) -> Detector:
    _require_jumps(sys)
    w = sys.weights
    return Detector("photodetection", current_superop(sys), _jump_rate_rows(sys, w),
                    noise_row=_jump_rate_rows(sys, w**2))


def _detector(sys, detector):
    return photodetector(sys) if detector is None else detector


def output_current(sys: LindbladSystem, ss: SteadyState, detector: Detector | None = None) -> float:
    """Average current ``J = sum_j nu_j Tr[L_j rho_ss L_j^+]``."""
    return _detector(sys, detector).current(ss)


def white_noise_strength(sys: LindbladSystem, ss: SteadyState, detector: Detector | None = None) -> float:
    """``K = sum_j nu_j^2 Tr[L_j rho_ss L_j^+]``."""
    return _detector(sys, detector).white_noise(ss)


def correlation(sys: LindbladSystem, ss: SteadyState, tau_grid, detector: Detector | None = None) -> np.ndarray:
    """``C(tau)`` on a nonnegative grid; ``C(-tau) = C(tau)``."""
    det = _detector(sys, detector)
    x = det.fluctuation(ss)
    if not np.any(x):
        return np.zeros(len(np.atleast_1d(tau_grid)))
    return np.real(propagate(sys, x, tau_grid, observable=det.row))


def power_spectrum(sys: LindbladSystem, ss: SteadyState, omega_grid, detector: Detector | None = None,
                   include_K: bool = True) -> np.ndarray:
    """``S(omega)``, one resolvent solve per distinct ``|omega|``."""
    det = _detector(sys, detector)
    omega = np.abs(np.asarray(omega_grid, dtype=float))
    K = det.white_noise(ss) if include_K else 0.0
    x = det.fluctuation(ss)
    if not np.any(x):
        return np.full(omega.shape, K)
    uniq, inv = np.unique(omega, return_inverse=True)
    vals = resolvent_trace(sys, uniq, x, det.row)
    return K + 2.0 * np.real(vals)[inv]


def correlation_at_zero(sys: LindbladSystem, ss: SteadyState, detector: Detector | None = None) -> float:
    det = _detector(sys, detector)
    return float(np.real(det.row @ det.fluctuation(ss)))


def characteristic_timescale(sys: LindbladSystem, ss: SteadyState, detector: Detector | None = None,
                             rtol: float = 1e-12) -> float:
    """``tau_s = int_0^inf C(tau) dtau / C(0)`` from a single gauge-fixed solve at omega = 0."""
    det = _detector(sys, detector)
    x = det.fluctuation(ss)
    c0 = float(np.real(det.row @ x))
    J, K = abs(det.current(ss)), abs(det.white_noise(ss))
    scale = max(J**2, K, 1e-300)
    # a dark steady state (no jumps at all) leaves only rounding noise in C(0)
    dark = max(J, K) <= 1e-14 * max(np.max(np.abs(det.row)), 1.0)
    if not np.any(x) or dark or abs(c0) <= rtol * scale:
        raise UndefinedTimescaleError("C(0) vanishes, so tau_s is undefined")
    try:
        integral = resolvent_solve(sys, 0.0, x, observable=det.row)
    except SingularSystemError as exc:
        raise SingularSystemError(f"internal consistency error: {exc}") from exc
    return float(np.real(integral)) / c0


def timescale_by_quadrature(tau: np.ndarray, C: np.ndarray) -> float:
    """Trapezoidal ``int C / C(0)`` on a grid starting at 0."""
    return float(np.trapezoid(C, tau) / C[0])


def spectrum_from_correlation(tau: np.ndarray, C: np.ndarray, K: float, omega) -> np.ndarray:
    """``K + 2 int_0^tau_max C(tau) cos(omega tau) dtau`` by the trapezoidal rule."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    kernel = np.cos(np.outer(omega, tau))
    return K + 2.0 * np.trapezoid(kernel * C[None, :], tau, axis=1)


@dataclass(frozen=True)
class GridChoice:
    dtau: float
    tau_max: float
    omega_max: float
    gap: float
    omega_est: float

    def tau_grid(self) -> np.ndarray:
        n = int(math.ceil(self.tau_max / self.dtau))
        return np.arange(n + 1) * self.dtau

    def omega_grid(self, n: int = N_OMEGA) -> np.ndarray:
        return np.linspace(0.0, self.omega_max, n)


def auto_grids(sys: LindbladSystem, ss: SteadyState, detector: Detector | None = None, nev: int = 8) -> GridChoice:
    """Grids resolving both the slowest decay and the dominant oscillation of ``C``.

    ``dtau = min(0.05, 0.1 / omega_est)``, ``tau_max = max(20, 10 / gap)`` and
    ``omega_max = max(4, 3 omega_est)``, with the gap and ``omega_est`` read
    off the spectrum of the sector that carries ``x'``.
    """
    det = _detector(sys, detector)
    x = det.fluctuation(ss)
    gen = sys.frame_for(x) if np.any(x) else sys.generator(None)
    sector = None if gen.basis is None else int(gen.label[-1])
    info = liouvillian_spectrum(sys, nev=min(nev, max(2, gen.n)), sector=sector)
    omega_est = info.slowest_frequency
    gap = info.gap if info.gap > 0 else 1.0
    dtau = min(0.05, 0.1 / omega_est) if omega_est > 0 else 0.05
    tau_max = min(max(20.0, 10.0 / gap), TAU_MAX_CAP)
    return GridChoice(dtau, tau_max, max(4.0, 3.0 * omega_est), gap, omega_est)


@dataclass
class CurrentStatistics:
    J: float
    K: float
    C0: float
    tau_s: float
    D: float
    tau: np.ndarray
    C: np.ndarray
    omega: np.ndarray
    S: np.ndarray
    scheme: str = "photodetection"
    metadata: dict = field(default_factory=dict)

    @property
    def S_without_K(self) -> np.ndarray:
        return self.S - self.K

    def identity_residual(self) -> float:
        """``|S(0) - K - 2 C(0) tau_s| / (|S(0)| + |K|)``."""
        if not math.isfinite(self.tau_s):
            return float("nan")
        return abs(self.D - self.K - 2 * self.C0 * self.tau_s) / max(abs(self.D) + abs(self.K), 1e-300)


def current_statistics(sys: LindbladSystem, ss: SteadyState, tau_grid=None, omega_grid=None,
                       detector: Detector | None = None) -> CurrentStatistics:
    """All second-order statistics for one parameter point and one detection scheme."""
    det = _detector(sys, detector)
    grids = None
    if tau_grid is None or omega_grid is None:
        grids = auto_grids(sys, ss, det)
    tau = grids.tau_grid() if tau_grid is None else np.asarray(tau_grid, dtype=float)
    omega = grids.omega_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    J = det.current(ss)
    K = det.white_noise(ss)
    C0 = correlation_at_zero(sys, ss, det)
    try:
        tau_s = characteristic_timescale(sys, ss, det)
    except UndefinedTimescaleError:
        tau_s = float("nan")
    C = correlation(sys, ss, tau, det)
    S = power_spectrum(sys, ss, omega, det)
    D = float(power_spectrum(sys, ss, [0.0], det)[0])
    meta = dict(sys.metadata)
    if grids is not None:
        meta.update(gap=grids.gap, omega_est=grids.omega_est)
    return CurrentStatistics(J, K, C0, tau_s, D, tau, C, omega, S, det.scheme, meta)


def spectral_peak(sys: LindbladSystem, ss: SteadyState, omega_grid, detector: Detector | None = None,
                  xatol: float = 1e-8) -> float:
    """Position of the global maximum of ``S(omega)``, refined between grid neighbours.

    Returns 0 when the maximum sits at the origin.
    """
    from scipy.optimize import minimize_scalar

    det = _detector(sys, detector)
    omega = np.sort(np.abs(np.asarray(omega_grid, dtype=float)))
    S = power_spectrum(sys, ss, omega, det, include_K=False)
    k = int(np.argmax(S))
    if k == 0:
        return 0.0
    lo, hi = omega[k - 1], omega[min(k + 1, omega.size - 1)]
    f = lambda w: -float(power_spectrum(sys, ss, [w], det, include_K=False)[0])
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": xatol})
    return float(res.x)
