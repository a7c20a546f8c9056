"""Spectral fits, correlation post-processing and critical-point extraction."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import BracketError, FitError, SubtractionError

MAX_NFEV = 500
ONSET_THRESHOLD = 1e-3


def dho(omega, A, omega0, gamma0, offset=0.0):
    w2 = np.asarray(omega, dtype=float) ** 2
    return A / ((w2 - omega0**2) ** 2 + gamma0**2 * w2) + offset


def lorentzian(omega, A, gamma2, offset=0.0):
    return A / (np.asarray(omega, dtype=float) ** 2 + gamma2**2) + offset


def dho_lorentzian(omega, A1, omega0, gamma0, A2, gamma2, offset=0.0):
    return dho(omega, A1, omega0, gamma0) + lorentzian(omega, A2, gamma2) + offset


@dataclass
class SpectralFit:
    model: str
    omega0: float
    gamma0: float
    OmegaR: float
    offset: float
    residual_rms: float
    peak_height: float
    converged: bool
    window: tuple[float, float]
    amplitude: float = float("nan")
    A1: float = float("nan")
    A2: float = float("nan")
    gamma2: float = float("nan")
    stderr: dict = field(default_factory=dict)
    nfev: int = 0

    @property
    def relative_rms(self) -> float:
        return self.residual_rms / abs(self.peak_height) if self.peak_height else float("inf")

    @property
    def omega_peak(self) -> float:
        return omega_peak_from_fit(self)

    def evaluate(self, omega) -> np.ndarray:
        if self.model == "DHO":
            return dho(omega, self.amplitude, self.omega0, self.gamma0, self.offset)
        return dho_lorentzian(omega, self.A1, self.omega0, self.gamma0, self.A2, self.gamma2, self.offset)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["omega_peak"] = self.omega_peak
        d["relative_rms"] = self.relative_rms
        return d


def rabi_frequency(omega0: float, gamma0: float) -> float:
    """``Re sqrt(omega0^2 - gamma0^2 / 4)``."""
    return math.sqrt(max(omega0**2 - gamma0**2 / 4, 0.0))


def omega_peak_from_fit(fit: SpectralFit) -> float:
    """``sqrt(omega0^2 - gamma0^2 / 2)``, clamped to 0 below threshold."""
    arg = fit.omega0**2 - fit.gamma0**2 / 2
    return math.sqrt(arg) if arg > 0 else 0.0


def _window(omega, S, window):
    omega = np.asarray(omega, dtype=float)
    S = np.asarray(S, dtype=float)
    lo, hi = (omega.min(), omega.max()) if window is None else window
    mask = (omega >= lo) & (omega <= hi)
    if mask.sum() < 20:
        raise FitError(f"fit window [{lo}, {hi}] holds {mask.sum()} points; at least 20 are needed")
    return omega[mask], S[mask], (float(lo), float(hi))


def _half_width(w, y, base):
    k = int(np.argmax(y))
    half = base + 0.5 * (y[k] - base)
    above = np.flatnonzero(y >= half)
    right = w[above[-1]] if above.size else w[-1]
    left = w[above[0]] if above.size else w[0]
    if k == 0:
        return max(right - w[0], w[1] - w[0])
    return max(0.5 * (right - left), w[1] - w[0])


def _stderr(res, nparams):
    m = res.fun.size
    dof = max(m - nparams, 1)
    s2 = 2 * res.cost / dof
    try:
        cov = np.linalg.pinv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((nparams, nparams), np.nan)
    return cov


def _multistart(fun, seeds, nparams):
    best, trace = None, []
    for x0 in seeds:
        try:
            res = least_squares(fun, x0, method="lm", max_nfev=MAX_NFEV * (nparams + 1),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15)
        except (ValueError, np.linalg.LinAlgError) as exc:
            trace.append(str(exc))
            continue
        trace.append(float(np.sqrt(np.mean(res.fun**2))))
        if not np.all(np.isfinite(res.x)):
            continue
        # a converged start beats a lower-cost one that hit the evaluation limit
        if best is None or (res.success, -res.cost) > (best.success, -best.cost):
            best = res
    if best is None:
        raise FitError("all fit seeds failed", trace)
    return best, trace


def _perturbed(x0, factors=(1.0, 1.25, 0.8)):
    return [np.asarray(x0, dtype=float) * f for f in factors]


def _dho_poly(w, a0, q, s, c):
    # (1 - |q| w^2)^2 + s^2 w^2 stays positive for any parameters
    w2 = w * w
    return a0 / ((1 - abs(q) * w2) ** 2 + s * s * w2) + c


def fit_dho(omega, S, window=None) -> SpectralFit:
    """Least-squares fit of ``A / ((w^2 - w0^2)^2 + g0^2 w^2) + c`` on ``window``.

    The fit runs in ``a0 / ((1 - q w^2)^2 + s^2 w^2) + c`` with ``q = 1/w0^2``
    and ``s = g0/w0^2``, which stays well conditioned when the peak sits at
    the origin and ``w0, g0`` grow together.
    """
    w, y, win = _window(omega, S, window)
    scale = np.max(np.abs(y)) or 1.0
    yn = y / scale
    tail = np.mean(np.sort(yn)[: max(3, len(yn) // 20)])
    base = min(tail, yn.min())
    k = int(np.argmax(yn))
    width = _half_width(w, yn, base)
    if k > 0:
        # the DHO peak height is a0 (w0 / g0)^2
        w0, g0 = w[k], max(width, 1e-3)
        a0 = (yn[k] - base) * (g0 / w0) ** 2
    else:
        g0 = 4.0 * width
        w0 = math.sqrt(width * g0)
        a0 = yn[0] - base
    seeds = [np.array([a0, 1 / w0**2, g0 / w0**2, base])]
    seeds += [np.array([a0, f / w0**2, g0 / (f * w0**2), base]) for f in (1.3, 0.7)]
    # shape-agnostic starts; they also reach negative-amplitude (dip) solutions
    seeds += [np.array([yn[0] - yn[-1], q, 1.0, yn[-1]]) for q in (1.0, 0.3)]
    fun = lambda p: _dho_poly(w, *p) - yn
    res, trace = _multistart(fun, seeds, 4)
    a0, q, s, c = res.x
    aq, as_ = abs(q), abs(s)
    w0, g0 = aq**-0.5, as_ / aq
    cov = _stderr(res, 4)
    # delta method from (q, s) to (w0, g0)
    G = np.array([[-0.5 * np.sign(q) * aq**-1.5, 0.0],
                  [-as_ * np.sign(q) / aq**2, np.sign(s) / aq]])
    cov_wg = G @ cov[1:3, 1:3] @ G.T
    err = np.sqrt(np.abs(np.diag(cov)))
    err_wg = np.sqrt(np.abs(np.diag(cov_wg)))
    rms = float(np.sqrt(np.mean(res.fun**2))) * scale
    fit = SpectralFit("DHO", w0, g0, rabi_frequency(w0, g0), c * scale, rms, float(np.max(y)),
                      bool(res.success), win, amplitude=a0 * w0**4 * scale, nfev=int(res.nfev),
                      stderr={"a0": err[0] * scale, "omega0": err_wg[0], "gamma0": err_wg[1],
                              "offset": err[3] * scale, "OmegaR": _rabi_stderr(w0, g0, cov_wg)})
    if not res.success:
        raise FitError("DHO fit did not converge", trace)
    return fit


def _rabi_stderr(w0, g0, cov2):
    OmR = rabi_frequency(w0, g0)
    if OmR == 0:
        return 0.0
    grad = np.array([w0 / OmR, -g0 / (4 * OmR)])
    return float(np.sqrt(max(grad @ cov2 @ grad, 0.0)))


def fit_lorentzian(omega, S, window=None) -> tuple[float, float, float]:
    """``A / (w^2 + g^2) + c``; returns (A, g, c)."""
    w, y, _ = _window(omega, S, window)
    scale = np.max(np.abs(y)) or 1.0
    yn = y / scale
    base = min(yn.min(), 0.0)
    g = _half_width(w, yn, base)
    fun = lambda p: lorentzian(w, p[0], p[1], p[2]) - yn
    res, _ = _multistart(fun, _perturbed([(yn[0] - base) * g**2, g, base]), 3)
    A, g, c = res.x
    return A * scale, abs(g), c * scale


def fit_dho_lorentzian(omega, S, window=None, seed: Sequence[float] | None = None) -> SpectralFit:
    """Six-parameter fit of a DHO plus a zero-centred Lorentzian.

    Seeds come from a two-stage fit: a Lorentzian on the origin peak, then a
    DHO on the remainder.  ``seed`` (A1, w0, g0, A2, g2, c) adds a start point,
    e.g. the previous point of a sweep.
    """
    w, y, win = _window(omega, S, window)
    scale = np.max(np.abs(y)) or 1.0
    yn = y / scale
    starts = []
    try:
        # origin peak: the points up to the first local minimum
        dips = np.flatnonzero((yn[1:-1] < yn[:-2]) & (yn[1:-1] <= yn[2:])) + 1
        cut = int(dips[0]) if dips.size else len(w) // 4
        cut = max(cut, 20)
        A2, g2, _ = fit_lorentzian(w[:cut] if cut < len(w) else w, yn[:cut] if cut < len(w) else yn)
        rest = yn - lorentzian(w, A2, g2)
        k = int(np.argmax(rest))
        base = float(np.min(rest))
        width = _half_width(w, rest, base)
        w0 = w[k] if k > 0 else w[len(w) // 3]
        g0 = max(width, 0.05 * max(w0, 1e-2))
        A1 = max(rest[k] - base, 1e-3) * (g0 * max(w0, 1e-2)) ** 2
        starts += _perturbed([A1, w0, g0, A2, g2, base])
    except FitError:
        pass
    if seed is not None:
        s = np.array(seed, dtype=float)
        s[[0, 3, 5]] /= scale
        starts.append(s)
    if not starts:
        raise FitError("could not seed the two-component fit")
    fun = lambda p: dho_lorentzian(w, *p) - yn
    res, trace = _multistart(fun, starts, 6)
    A1, w0, g0, A2, g2, c = res.x
    w0, g0, g2 = abs(w0), abs(g0), abs(g2)
    cov = _stderr(res, 6)
    err = np.sqrt(np.abs(np.diag(cov)))
    rms = float(np.sqrt(np.mean(res.fun**2))) * scale
    if not res.success:
        raise FitError("two-component fit did not converge", trace)
    return SpectralFit("DHO_plus_Lorentzian", w0, g0, rabi_frequency(w0, g0), c * scale, rms,
                       float(np.max(y)), True, win, A1=A1 * scale, A2=A2 * scale, gamma2=g2,
                       nfev=int(res.nfev),
                       stderr={"A1": err[0] * scale, "omega0": err[1], "gamma0": err[2],
                               "A2": err[3] * scale, "gamma2": err[4], "offset": err[5] * scale,
                               "OmegaR": _rabi_stderr(w0, g0, cov[1:3, 1:3])})


# --- correlation-function analysis -------------------------------------------


@dataclass(frozen=True)
class DampedCosineFit:
    c0: float
    omega: float
    gamma: float
    background: float
    background_rate: float
    residual_rms: float


def fit_damped_cosine(tau, C, omega_guess: float, gamma_guess: float, background: bool = True) -> DampedCosineFit:
    """``c0 cos(w t) exp(-g t)`` plus, optionally, a non-oscillating ``b exp(-k t)``."""
    tau = np.asarray(tau, dtype=float)
    C = np.asarray(C, dtype=float)
    scale = np.max(np.abs(C)) or 1.0
    y = C / scale
    if background:
        f = lambda p: p[0] * np.cos(p[1] * tau) * np.exp(-p[2] * tau) + p[3] * np.exp(-p[4] * tau) - y
        x0 = [y[0], omega_guess, gamma_guess, 0.0, gamma_guess]
    else:
        f = lambda p: p[0] * np.cos(p[1] * tau) * np.exp(-p[2] * tau) - y
        x0 = [y[0], omega_guess, gamma_guess]
    res, _ = _multistart(f, _perturbed(x0, (1.0, 1.03, 0.97)), len(x0))
    p = list(res.x) + [0.0, 0.0][: 5 - len(res.x)]
    return DampedCosineFit(p[0] * scale, abs(p[1]), p[2], p[3] * scale, p[4],
                           float(np.sqrt(np.mean(res.fun**2))) * scale)


@dataclass(frozen=True)
class Subtraction:
    gamma2: float
    C_sub: np.ndarray
    window: tuple[float, float]
    r2: float


def _linear_r2(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = np.sum((y - A @ coef) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return coef, (1.0 - ss_res / ss_tot) if ss_tot > 0 else 1.0


def subtract_overdamped(tau, C, window: tuple[float, float] | None = None, r2_min: float = 0.999,
                        floor: float = 1e-12) -> Subtraction:
    """Divide out the slowest overdamped mode: ``C_sub = C / (C(0) exp(-gamma2 tau))``.

    ``gamma2`` is the late-time slope of ``log|C / C(0)|``, fitted on ``window``
    or on the longest suffix within the second half of the record whose
    linear regression has ``R^2 > r2_min``.
    Points below ``floor * |C(0)|`` are ignored as numerical noise.
    """
    tau = np.asarray(tau, dtype=float)
    C = np.asarray(C, dtype=float)
    if C[0] == 0:
        raise SubtractionError("C(0) = 0")
    rel = C / C[0]
    valid = np.abs(rel) > floor
    last = np.flatnonzero(valid)
    if last.size < 10:
        raise SubtractionError("too few points above the noise floor")
    end = int(last[-1]) + 1
    logc = np.log(np.abs(rel[:end]) + 1e-300)
    if window is not None:
        mask = (tau[:end] >= window[0]) & (tau[:end] <= window[1])
        if mask.sum() < 5:
            raise SubtractionError("late-time window holds fewer than 5 points")
        coef, r2 = _linear_r2(tau[:end][mask], logc[mask])
        win = (float(window[0]), float(window[1]))
    else:
        found = None
        for start in np.linspace(end // 2, end - 10, 30).astype(int):
            seg = slice(start, end)
            if np.any(~valid[seg]) or np.any(np.sign(rel[seg]) != np.sign(rel[end - 1])):
                continue
            coef, r2 = _linear_r2(tau[seg], logc[seg])
            if r2 > r2_min and coef[0] < 0:
                found = (coef, r2, (float(tau[start]), float(tau[end - 1])))
                break
        if found is None:
            raise SubtractionError("no late-time window with linear log|C| was found")
        coef, r2, win = found
    gamma2 = float(-coef[0])
    return Subtraction(gamma2, rel * np.exp(gamma2 * tau), win, float(r2))


def count_zero_crossings(C, floor: float = 1e-10) -> int:
    """Sign changes of ``C[1:]``, skipping samples below ``floor * max|C|``."""
    C = np.asarray(C, dtype=float)
    tol = floor * np.max(np.abs(C)) if C.size else 0.0
    s = np.sign(C[1:][np.abs(C[1:]) > tol])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def classify_crossover(tau, C, floor: float = 1e-10) -> str:
    """``underdamped`` iff ``C`` changes sign at least twice after the first sample."""
    return "underdamped" if count_zero_crossings(C, floor) >= 2 else "overdamped"


def late_time_behaviour(tau, C_sub, floor: float = 1e-6, flat_tol: float = 0.05) -> str:
    """Classify how a subtracted correlation approaches its plateau.

    The plateau is the last sample.  ``oscillatory`` if ``C_sub`` has at least
    two local extrema standing more than ``floor * |C_sub(0)|`` off the
    plateau; otherwise ``constant`` if the second half varies by less than
    ``flat_tol`` relative, else ``monotone``.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(C_sub, dtype=float)
    if y.size < 20:
        return "monotone"
    tol = floor * max(abs(y[0]), 1e-300)
    d = np.diff(y)
    turn = np.flatnonzero(np.sign(d[1:]) * np.sign(d[:-1]) < 0) + 1
    if np.count_nonzero(np.abs(y[turn] - y[-1]) > tol) >= 2:
        return "oscillatory"
    tail = y[tau >= tau[0] + 0.5 * (tau[-1] - tau[0])]
    spread = (tail.max() - tail.min()) / max(np.max(np.abs(tail)), 1e-300)
    return "constant" if spread < flat_tol else "monotone"


# --- peaks, onsets and extrapolation -------------------------------------------------


def constant_sign_segment(values) -> slice:
    """Longest run of finite values sharing one sign."""
    v = np.asarray(values, dtype=float)
    s = np.where(np.isfinite(v), np.sign(v), 0)
    best, start = slice(0, 0), 0
    for k in range(1, v.size + 1):
        if k == v.size or s[k] != s[start] or s[k] == 0:
            if s[start] != 0 and k - start > best.stop - best.start:
                best = slice(start, k)
            start = k
    return best


def locate_tau_s_peak(param_grid, tau_s_values, C0=None) -> float:
    """Vertex of the parabola through the discrete maximum and its two neighbours.

    The search is restricted to the longest run of finite ``tau_s`` and, with
    ``C0`` given, constant ``sign C(0)``: where ``C(0)`` crosses zero ``tau_s``
    has a pole, not a peak, and an undefined ``tau_s`` (dark state) separates
    two regimes.
    """
    x = np.asarray(param_grid, dtype=float)
    y = np.asarray(tau_s_values, dtype=float)
    sign = np.ones_like(y) if C0 is None else np.asarray(C0, dtype=float)
    seg = constant_sign_segment(np.where(np.isfinite(y), sign, np.nan))
    x, y = x[seg], y[seg]
    if x.size < 5:
        raise BracketError("at least 5 grid points are needed")
    k = int(np.argmax(y))
    if k == 0 or k == x.size - 1:
        raise BracketError(f"maximum at the grid edge ({x[k]}); widen the sweep")
    x0, x1, x2 = x[k - 1 : k + 2]
    y0, y1, y2 = y[k - 1 : k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1)
    return float(-b / (2 * a))


def first_onset(param_grid, values, threshold: float = 0.0, errors=None, sigmas: float = 3.0) -> float | None:
    """Smallest parameter with ``value > threshold`` (and ``value > sigmas * error`` if given)."""
    for k, (x, v) in enumerate(zip(param_grid, values)):
        if not np.isfinite(v) or v <= threshold:
            continue
        if errors is not None and not v > sigmas * errors[k]:
            continue
        return float(x)
    return None


def omega_r_onset(param_grid, fits: Sequence[SpectralFit | None], threshold: float = ONSET_THRESHOLD) -> float | None:
    vals = [f.OmegaR if f is not None else np.nan for f in fits]
    errs = [f.stderr.get("OmegaR", 0.0) if f is not None else np.inf for f in fits]
    return first_onset(param_grid, vals, threshold, errs)


def peak_onset(param_grid, fits: Sequence[SpectralFit | None]) -> float | None:
    return first_onset(param_grid, [f.omega_peak if f is not None else np.nan for f in fits], 0.0)


@dataclass(frozen=True)
class CriticalEstimate:
    sizes: tuple[float, ...]
    estimates: tuple[float, ...]
    slope: float
    intercept: float
    extrapolated: float
    abscissa: str = "1/L"
    low_confidence: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def extrapolate_thermodynamic(points: Sequence[tuple[float, float]], abscissa: str = "1/L") -> CriticalEstimate:
    """Least-squares line through ``(abscissa, estimate)`` pairs, evaluated at 0."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("at least two (abscissa, estimate) points are needed")
    slope, intercept = np.polyfit(pts[:, 0], pts[:, 1], 1)
    return CriticalEstimate(tuple(pts[:, 0]), tuple(pts[:, 1]), float(slope), float(intercept),
                            float(intercept), abscissa, pts.shape[0] == 2)
