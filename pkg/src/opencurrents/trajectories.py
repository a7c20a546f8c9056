"""Quantum-jump Monte Carlo used only as an independent check of the deterministic pipeline.

Between jumps a pure state evolves under ``H_eff = H - (i/2) sum_j L_j^+ L_j``;
the waiting time is drawn by inverting the decaying norm, the channel with
probability proportional to ``|L_j psi|^2``.  Initial states are drawn from
the eigen-ensemble of ``rho_ss`` and a burn-in of ``10 / gap`` precedes
recording.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sl
from scipy.optimize import brentq

from . import operators as ops
from .engine import LindbladSystem, SteadyState, liouvillian_spectrum, steady_state
from .errors import PropagationError

MIN_RECORDS = 100


@dataclass(frozen=True)
class JumpRecord:
    times: np.ndarray
    channels: np.ndarray
    horizon: float
    seed: int

    def to_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack([self.times, self.channels]), delimiter=",",
                   header=f"time,channel  horizon={self.horizon} seed={self.seed}", fmt=["%.12g", "%d"])


class _Unraveling:
    """Dense no-jump propagator and jump operators of a small system."""

    def __init__(self, sys: LindbladSystem):
        d = sys.dim
        self.jumps = [ops.to_dense(L) for L in sys.jump_operators]
        H = ops.to_dense(sys.hamiltonian)
        heff = H - 0.5j * sum((L.conj().T @ L for L in self.jumps), np.zeros((d, d), complex))
        self.generator = -1j * heff
        lam, V = np.linalg.eig(self.generator)
        self.eig_ok = np.linalg.cond(V) < 1e8
        if self.eig_ok:
            self.lam, self.V, self.Vinv = lam, V, np.linalg.inv(V)

    def evolve(self, psi: np.ndarray, t: float) -> np.ndarray:
        if self.eig_ok:
            return self.V @ (np.exp(self.lam * t) * (self.Vinv @ psi))
        return sl.expm(self.generator * t) @ psi

    def waiting_time(self, psi: np.ndarray, r: float, t_max: float) -> float | None:
        """First ``t <= t_max`` with ``|psi(t)|^2 = r``, or None when no jump occurs."""
        norm2 = lambda t: float(np.real(np.vdot(v := self.evolve(psi, t), v)))
        end = norm2(t_max)
        if not np.isfinite(end):
            raise PropagationError("no-jump evolution produced a non-finite norm")
        if end > r:
            return None
        return brentq(lambda t: norm2(t) - r, 0.0, t_max, xtol=1e-12, rtol=1e-12)


def _initial_state(ss: SteadyState, rng: np.random.Generator) -> np.ndarray:
    p, V = np.linalg.eigh(ss.rho)
    p = np.clip(p, 0, None)
    k = rng.choice(p.size, p=p / p.sum())
    return V[:, k].astype(complex)


def _run(unr: _Unraveling, psi: np.ndarray, duration: float, rng: np.random.Generator,
         record: bool) -> tuple[np.ndarray, list, list]:
    t = 0.0
    times, chans = [], []
    while True:
        r = rng.random()
        dt = unr.waiting_time(psi, r, duration - t)
        if dt is None:
            psi = unr.evolve(psi, duration - t)
            return psi / np.linalg.norm(psi), times, chans
        t += dt
        psi = unr.evolve(psi, dt)
        amps = [L @ psi for L in unr.jumps]
        w = np.array([np.real(np.vdot(a, a)) for a in amps])
        if w.sum() <= 0:
            raise PropagationError("jump with zero total rate")
        j = int(rng.choice(len(w), p=w / w.sum()))
        psi = amps[j] / np.sqrt(w[j])
        if record:
            times.append(t)
            chans.append(j)


def simulate_trajectory(sys: LindbladSystem, horizon: float, seed: int, ss: SteadyState | None = None,
                        burn_in: float | None = None) -> JumpRecord:
    """One jump record on ``[0, horizon]`` after a burn-in."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ss = steady_state(sys) if ss is None else ss
    if burn_in is None:
        gap = liouvillian_spectrum(sys, nev=2).gap
        burn_in = 10.0 / gap if gap > 0 else 0.0
    rng = np.random.default_rng(seed)
    unr = _Unraveling(sys)
    psi = _initial_state(ss, rng)
    if burn_in > 0:
        psi, _, _ = _run(unr, psi, burn_in, rng, record=False)
    _, times, chans = _run(unr, psi, horizon, rng, record=True)
    return JumpRecord(np.array(times), np.array(chans, dtype=int), float(horizon), int(seed))


def simulate_ensemble(sys: LindbladSystem, n: int, horizon: float, seed: int = 0,
                      burn_in: float | None = None) -> list[JumpRecord]:
    """``n`` independent records; trajectory ``k`` uses seed ``seed + k``."""
    ss = steady_state(sys)
    if burn_in is None:
        gap = liouvillian_spectrum(sys, nev=2).gap
        burn_in = 10.0 / gap if gap > 0 else 0.0
    return [simulate_trajectory(sys, horizon, seed + k, ss, burn_in) for k in range(n)]


@dataclass(frozen=True)
class CorrelationEstimate:
    tau: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    J: float
    J_stderr: float
    K: float
    K_stderr: float
    n_records: int
    low_statistics: bool


def binned_currents(records, weights, bin_width: float) -> np.ndarray:
    """Weighted jump counts per bin divided by ``bin_width``; one row per record."""
    horizon = min(r.horizon for r in records)
    nbins = int(np.floor(horizon / bin_width + 1e-9))
    w = np.asarray(weights, dtype=float)
    out = np.zeros((len(records), nbins))
    for i, rec in enumerate(records):
        k = np.floor(rec.times / bin_width).astype(int)
        keep = k < nbins
        np.add.at(out[i], k[keep], w[rec.channels[keep]])
    return out / bin_width


def estimate_correlation(records, bin_width: float, tau_grid, weights) -> CorrelationEstimate:
    """Binned estimator of ``E[dI(t) dI(t + tau)]`` with per-record standard errors.

    Lags are ``round(tau / bin_width)`` bins.  In the zero-lag bin each jump
    paired with itself contributes ``nu^2 / bin_width^2``; that white-noise
    part is removed from ``estimate`` and reported as ``K``.
    """
    tau = np.asarray(tau_grid, dtype=float)
    n = len(records)
    low = n < MIN_RECORDS
    if low:
        warnings.warn(f"only {n} records; at least {MIN_RECORDS} are recommended", RuntimeWarning)
    spacing = np.diff(tau).min() if tau.size > 1 else bin_width
    if bin_width > spacing + 1e-12:
        raise ValueError("bin_width must not exceed the tau spacing")
    w = np.asarray(weights, dtype=float)
    I = binned_currents(records, w, bin_width)
    I2 = binned_currents(records, w**2, bin_width)
    nb = I.shape[1]
    lags = np.rint(tau / bin_width).astype(int)
    if lags.max() >= nb:
        raise ValueError("largest lag exceeds the record length")

    def mean_err(x):
        err = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return float(x.mean()), err

    J, J_err = mean_err(I.mean(axis=1))
    K, K_err = mean_err(I2.mean(axis=1))
    dI = I - J
    per_lag = np.empty((n, lags.size))
    for k, m in enumerate(lags):
        per_lag[:, k] = np.mean(dI[:, : nb - m] * dI[:, m:], axis=1)
        if m == 0:
            per_lag[:, k] -= I2.mean(axis=1) / bin_width
    est = per_lag.mean(axis=0)
    err = per_lag.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.full(lags.size, np.nan)
    return CorrelationEstimate(tau, est, err, J, J_err, K, K_err, n, low)
