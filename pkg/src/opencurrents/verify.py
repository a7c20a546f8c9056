"""Built-in oracle suite run by ``opencurrents verify``.

Each check reports an error measure and a tolerance; ``margin`` is
``tol / error``.  ``negative_control=True`` flips the sign of the
anticommutator part of one Liouvillian, which must break trace preservation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import operators as ops
from .engine import steady_state
from .homodyne import homodyne_detector
from .meanfield import xyz_mf_critical_jy, xyz_mf_jy_peak
from .models import QubitParams, XYZParams, build_qubit, build_xyz
from .stats import (
    characteristic_timescale,
    correlation,
    correlation_at_zero,
    output_current,
    power_spectrum,
    spectrum_from_correlation,
    white_noise_strength,
)
from .trajectories import estimate_correlation, simulate_ensemble

DRIVEN = QubitParams(Omega=0.7, gamma_down=1.0, gamma_up=0.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    @property
    def margin(self) -> float:
        return self.tol / self.error if self.error > 0 else math.inf


def _trace_preservation(negative_control: bool) -> float:
    worst = 0.0
    for sys in (build_qubit(DRIVEN), build_xyz(XYZParams(rows=1, cols=2, periodic=False), symmetric=False)):
        L = ops.to_sparse(sys.liouvillian)
        if negative_control:
            for J in sys.jump_operators:
                JdJ = ops.to_sparse(J).conj().T @ ops.to_sparse(J)
                L = L + ops.spre(JdJ) + ops.spost(JdJ)
        row = ops.identity_vec(sys.dim) @ L
        worst = max(worst, float(np.max(np.abs(row))))
    return worst


def _qubit_current() -> float:
    # H = Omega sigma_x drives at Rabi frequency 2 Omega
    sys = build_qubit(DRIVEN)
    ss = steady_state(sys)
    w, g = 2 * DRIVEN.Omega, DRIVEN.gamma_down
    exact = -g * w**2 / (g**2 + 2 * w**2)
    return abs(output_current(sys, ss) - exact)


def _white_noise_identity() -> float:
    sys = build_xyz(XYZParams(Jy=1.2))
    ss = steady_state(sys)
    return abs(white_noise_strength(sys, ss) + output_current(sys, ss))


def _spectral_identity() -> float:
    sys = build_qubit(DRIVEN)
    ss = steady_state(sys)
    D = power_spectrum(sys, ss, [0.0])[0]
    K = white_noise_strength(sys, ss)
    return abs(D - K - 2 * correlation_at_zero(sys, ss) * characteristic_timescale(sys, ss)) / (abs(D) + abs(K))


def _route_equivalence() -> float:
    sys = build_qubit(DRIVEN)
    ss = steady_state(sys)
    tau = np.linspace(0, 40, 8001)
    omega = np.linspace(0, 4, 41)
    K = white_noise_strength(sys, ss)
    direct = power_spectrum(sys, ss, omega)
    fourier = spectrum_from_correlation(tau, correlation(sys, ss, tau), K, omega)
    return float(np.max(np.abs(direct - fourier)) / np.max(np.abs(direct)))


def _trajectory_current() -> float:
    sys = build_qubit(QubitParams())
    ss = steady_state(sys)
    recs = simulate_ensemble(sys, 300, 20.0, seed=7)
    est = estimate_correlation(recs, 0.1, [0.0, 1.0], sys.weights)
    return abs(est.J - output_current(sys, ss)) / est.J_stderr


def _mf_critical() -> float:
    p = XYZParams(Jx=Fraction(9, 10), Jz=Fraction(1), gamma=Fraction(1))
    return float(abs(xyz_mf_critical_jy(p) - Fraction(133, 128)))


def _mf_peak() -> float:
    p = XYZParams(Jx=Fraction(9, 10), Jz=Fraction(1), gamma=Fraction(1))
    return float(abs(xyz_mf_jy_peak(p, "closed") - Fraction(133, 128) - Fraction(11125, 209952)))


def _homodyne_noise() -> float:
    sys = build_qubit(QubitParams())
    ss = steady_state(sys)
    return abs(homodyne_detector(sys).white_noise(ss) - len(sys.jumps))


CHECKS: list[tuple[str, Callable[[], float], float]] = [
    ("qubit current vs closed form", _qubit_current, 1e-12),
    ("K = -J for unit negative weights", _white_noise_identity, 1e-12),
    ("S(0) - K = 2 C(0) tau_s", _spectral_identity, 1e-6),
    ("resolvent vs Fourier spectrum", _route_equivalence, 1e-2),
    ("trajectory J within 3 sigma", _trajectory_current, 3.0),
    ("mean-field critical Jy = 133/128", _mf_critical, 1e-12),
    ("mean-field peak onset closed form", _mf_peak, 1e-9),
    ("homodyne K = channel count", _homodyne_noise, 1e-12),
]


def run_checks(tolerance_scale: float = 1.0, negative_control: bool = False) -> list[CheckResult]:
    out = [CheckResult("trace preservation", _trace_preservation(negative_control), 1e-12 * tolerance_scale)]
    for name, fn, tol in CHECKS:
        out.append(CheckResult(name, fn(), tol * tolerance_scale))
    return out


def format_report(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'error':>10}  {'tol':>10}  {'margin':>9}  result"]
    for r in results:
        margin = "inf" if math.isinf(r.margin) else f"{r.margin:.3g}"
        lines.append(f"{r.name:<{width}}  {r.error:10.3e}  {r.tol:10.3e}  {margin:>9}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
