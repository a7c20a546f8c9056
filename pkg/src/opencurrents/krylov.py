"""Krylov-subspace action of the matrix exponential, ``exp(t A) v``.

Arnoldi projection with adaptive sub-stepping and the a-posteriori local
error estimate of Sidje's EXPOKIT (``zgexpv``).
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sl

from .errors import PropagationError

_DELTA = 1.2
_GAMMA = 0.9
_BREAKDOWN_TOL = 1e-12  # relative to ||A||
_MAX_REJECT = 20


def _round_step(step: float) -> float:
    # two significant digits, rounded up, as in EXPOKIT
    if step <= 0:
        return step
    s = 10.0 ** (math.floor(math.log10(step)) - 1)
    return math.ceil(step / s) * s


def expv(t: float, matvec, v: np.ndarray, *, anorm: float, m: int = 50,
         tol: float = 1e-10, max_steps: int = 100_000) -> np.ndarray:
    """Return ``exp(t A) v`` where ``matvec(x) = A x``.

    ``tol`` is relative to ``||v||``; ``anorm`` is any upper estimate of ``||A||``.
    """
    v = np.asarray(v, dtype=complex)
    n = v.size
    beta = np.linalg.norm(v)
    if beta == 0.0 or t == 0.0:
        return v.copy()
    if anorm <= 0.0:
        return v.copy()
    m = max(1, min(m, n))
    abstol = tol * beta
    sgn = 1.0 if t > 0 else -1.0
    t_out = abs(t)
    t_now = 0.0
    w = v.copy()

    xm = 1.0 / m
    fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
    t_new = (1.0 / anorm) * ((fact * abstol) / (4.0 * beta * anorm)) ** xm
    t_new = _round_step(t_new)

    V = np.empty((m + 1, n), dtype=complex)
    steps = 0
    while t_now < t_out:
        steps += 1
        if steps > max_steps:
            raise PropagationError(f"Krylov exponential exceeded {max_steps} steps")
        t_step = min(t_out - t_now, t_new)
        V[0] = w / beta
        H = np.zeros((m + 2, m + 2), dtype=complex)
        mb = m
        k1 = 2
        for j in range(m):
            p = matvec(V[j])
            for i in range(j + 1):
                h = np.vdot(V[i], p)
                H[i, j] = h
                p -= h * V[i]
            s = np.linalg.norm(p)
            if s <= _BREAKDOWN_TOL * anorm:
                # happy breakdown: the subspace is invariant
                k1 = 0
                mb = j + 1
                t_step = t_out - t_now
                break
            H[j + 1, j] = s
            V[j + 1] = p / s
        if k1 != 0:
            H[m + 1, m] = 1.0
            avnorm = np.linalg.norm(matvec(V[m]))

        ireject = 0
        while True:
            mx = mb + k1
            F = sl.expm(sgn * t_step * H[:mx, :mx])
            if k1 == 0:
                err_loc = 0.0
                break
            phi1 = abs(beta * F[m, 0])
            phi2 = abs(beta * F[m + 1, 0] * avnorm)
            if phi1 > 10.0 * phi2:
                err_loc = phi2
                xm = 1.0 / m
            elif phi1 > phi2:
                err_loc = (phi1 * phi2) / (phi1 - phi2)
                xm = 1.0 / m
            else:
                err_loc = phi1
                xm = 1.0 / (m - 1) if m > 1 else 1.0
            if err_loc <= _DELTA * t_step * abstol:
                break
            ireject += 1
            if ireject > _MAX_REJECT:
                raise PropagationError("Krylov step size underflow: requested tolerance too tight")
            t_step = _GAMMA * t_step * (t_step * abstol / err_loc) ** xm
            t_step = _round_step(t_step)
            if t_step <= 1e-14 * t_out:
                raise PropagationError("Krylov step size underflow")

        mx = mb + max(0, k1 - 1)
        w = V[:mx].T @ (beta * F[:mx, 0])
        beta = np.linalg.norm(w)
        if not np.isfinite(beta):
            raise PropagationError("Krylov propagation produced non-finite values")
        t_now += t_step
        if k1 != 0 and err_loc > 0:
            t_new = _GAMMA * t_step * (t_step * abstol / err_loc) ** xm
        else:
            t_new = t_step * 2.0
        t_new = _round_step(t_new)
        if beta == 0.0:
            return w
    return w
