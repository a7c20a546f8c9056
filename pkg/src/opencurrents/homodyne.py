"""Homodyne detection: the measured current is a weighted sum of quadratures.

``H rho = sum_k nu_k (exp(-i phi_k) L_k rho + exp(i phi_k) rho L_k^+)`` replaces
the photodetection superoperator; the white noise ``K = sum_k nu_k^2`` does not
depend on the state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import operators as ops
from .engine import LindbladSystem, SteadyState
from .errors import ConfigError
from .stats import CurrentStatistics, Detector, _require_jumps, current_statistics


@dataclass(frozen=True)
class HomodyneConfig:
    phases: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = None

    def resolve(self, nchannels: int) -> tuple[np.ndarray, np.ndarray]:
        phases = np.zeros(nchannels) if self.phases is None else np.asarray(self.phases, dtype=float)
        weights = -np.ones(nchannels) if self.weights is None else np.asarray(self.weights, dtype=float)
        if phases.shape != (nchannels,) or weights.shape != (nchannels,):
            raise ConfigError(f"homodyne config needs one phase and one weight for each of {nchannels} channels")
        return phases, weights


def homodyne_superop(sys: LindbladSystem, cfg: HomodyneConfig | None = None) -> sp.csr_matrix:
    _require_jumps(sys)
    phases, weights = (cfg or HomodyneConfig()).resolve(len(sys.jumps))
    d = sys.dim
    out = sp.csr_matrix((d * d, d * d), dtype=complex)
    for phi, nu, L in zip(phases, weights, sys.jump_operators):
        Ls = ops.to_sparse(L)
        out = out + nu * (np.exp(-1j * phi) * ops.spre(Ls) + np.exp(1j * phi) * ops.spost(Ls.conj().T))
    return out.tocsr()


def homodyne_detector(sys: LindbladSystem, cfg: HomodyneConfig | None = None) -> Detector:
    cfg = cfg or HomodyneConfig()
    phases, weights = cfg.resolve(len(sys.jumps))
    d = sys.dim
    row = np.zeros(d * d, dtype=complex)
    for phi, nu, L in zip(phases, weights, sys.jump_operators):
        Ld = ops.to_dense(L)
        # Tr[L X] = vec(L^T) . vec(X),  Tr[X L^+] = vec(conj(L)) . vec(X)
        row += nu * (np.exp(-1j * phi) * ops.vec(Ld.T) + np.exp(1j * phi) * ops.vec(Ld.conj()))
    return Detector("homodyne", homodyne_superop(sys, cfg), row, noise_const=float(np.sum(weights**2)))


def homodyne_current(sys: LindbladSystem, ss: SteadyState, cfg: HomodyneConfig | None = None) -> float:
    """``J_Hom = Tr[H rho_ss]``."""
    return homodyne_detector(sys, cfg).current(ss)


def homodyne_statistics(sys: LindbladSystem, ss: SteadyState, cfg: HomodyneConfig | None = None,
                        tau_grid=None, omega_grid=None) -> CurrentStatistics:
    return current_statistics(sys, ss, tau_grid, omega_grid, detector=homodyne_detector(sys, cfg))
