"""Sweep orchestration: per-point statistics and fits, caching, persistence and finite-size scaling."""
from __future__ import annotations

import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fitting, persist
from .config import SweepConfig
from .engine import LindbladSystem, SteadyState, steady_state
from .errors import DependencyError, OpenCurrentsError, UndefinedTimescaleError
from .homodyne import HomodyneConfig, homodyne_detector
from .models import build_kerr, build_qubit, build_xyz, check_kerr_truncation
from .stats import (
    CurrentStatistics,
    GridChoice,
    auto_grids,
    characteristic_timescale,
    current_statistics,
    photodetector,
    power_spectrum,
)

log = logging.getLogger(__name__)

CACHE_ENV = "OPENCURRENTS_CACHE"
CSV_COLUMNS = tuple(persist.SWEEP_COLUMNS)


def default_cache_root() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "opencurrents"))


def build_system(cfg: SweepConfig, value: float | None = None) -> LindbladSystem:
    p = cfg.system_params(value)
    if cfg.model == "xyz":
        return build_xyz(p)
    if cfg.model == "kerr":
        return build_kerr(p)
    return build_qubit(p)


def solve_point(cfg: SweepConfig, value: float | None = None) -> tuple[LindbladSystem, SteadyState]:
    sys = build_system(cfg, value)
    ss = steady_state(sys, check_degeneracy=cfg.model != "kerr")
    if cfg.model == "kerr":
        check_kerr_truncation(ss)
    return sys, ss


def detector_for(cfg: SweepConfig, sys: LindbladSystem):
    if cfg.scheme == "homodyne":
        return homodyne_detector(sys, HomodyneConfig(cfg.homodyne_phases, cfg.homodyne_weights))
    return photodetector(sys)


def grids_for(cfg: SweepConfig, sys: LindbladSystem, ss: SteadyState, det) -> tuple[np.ndarray, np.ndarray, float]:
    """Configured grids where given, automatic ones otherwise."""
    auto: GridChoice = auto_grids(sys, ss, det)
    dtau = cfg.dtau or auto.dtau
    tau_max = cfg.tau_max or auto.tau_max
    omega_max = cfg.omega_max or auto.omega_max
    tau = np.arange(int(math.ceil(tau_max / dtau)) + 1) * dtau
    return tau, np.linspace(0.0, omega_max, cfg.n_omega), auto.gap


def point_statistics(cfg: SweepConfig, value: float | None = None) -> tuple[CurrentStatistics, float]:
    sys, ss = solve_point(cfg, value)
    det = detector_for(cfg, sys)
    tau, omega, gap = grids_for(cfg, sys, ss, det)
    return current_statistics(sys, ss, tau, omega, det), gap


def fit_spectrum(cfg: SweepConfig, omega, S) -> fitting.SpectralFit | None:
    if cfg.fit_model == "none":
        return None
    if cfg.fit_model == "dho":
        return fitting.fit_dho(omega, S, cfg.fit_window)
    return fitting.fit_dho_lorentzian(omega, S, cfg.fit_window)


@dataclass
class PointResult:
    row: dict
    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))
    C: np.ndarray = field(default_factory=lambda: np.zeros(0))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(0))
    S: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fit: dict | None = None


def _blank_row(cfg: SweepConfig, value: float) -> dict:
    row = {c: float("nan") for c in CSV_COLUMNS}
    row.update(param=cfg.param, value=float(value), classification="", error="")
    return row


def compute_point(cfg: SweepConfig, value: float) -> PointResult:
    """Steady state, statistics, fit and classification for one grid value; failures go to ``error``."""
    row = _blank_row(cfg, value)
    if cfg.level == "timescale":
        return _timescale_point(cfg, value, row)
    try:
        st, gap = point_statistics(cfg, value)
    except OpenCurrentsError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return PointResult(row)
    row.update(J=st.J, K=st.K, C0=st.C0, tau_s=st.tau_s, D=st.D, gap=gap,
               identity_residual=st.identity_residual(),
               omega_argmax=float(st.omega[int(np.argmax(st.S))]),
               classification=fitting.classify_crossover(st.tau, st.C))
    fit_dict = None
    try:
        fit = fit_spectrum(cfg, st.omega, st.S)
    except OpenCurrentsError as exc:
        row["error"] = f"fit: {exc}"
        fit = None
    if fit is not None:
        fit_dict = fit.to_dict()
        row.update(OmegaR=fit.OmegaR, OmegaR_err=fit.stderr.get("OmegaR", float("nan")),
                   omega0=fit.omega0, gamma0=fit.gamma0, gamma2=fit.gamma2,
                   omega_peak=fit.omega_peak, fit_rel_rms=fit.relative_rms)
    return PointResult(row, st.tau, st.C, st.omega, st.S, fit_dict)


def _timescale_point(cfg: SweepConfig, value: float, row: dict) -> PointResult:
    """J, K, C(0), tau_s and D only: no time propagation, no spectrum grid, no fit."""
    try:
        sys, ss = solve_point(cfg, value)
        det = detector_for(cfg, sys)
        x = det.fluctuation(ss)
        row.update(J=det.current(ss), K=det.white_noise(ss), C0=float(np.real(det.row @ x)),
                   D=float(power_spectrum(sys, ss, [0.0], det)[0]))
        try:
            row["tau_s"] = characteristic_timescale(sys, ss, det)
            row["identity_residual"] = abs(row["D"] - row["K"] - 2 * row["C0"] * row["tau_s"]) / max(
                abs(row["D"]) + abs(row["K"]), 1e-300)
        except UndefinedTimescaleError:
            pass
    except OpenCurrentsError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return PointResult(row)


# --- cache ------------------------------------------------------------------------------


def _point_key(value: float) -> str:
    return f"{float(value):.12g}"


class PointCache:
    """One ``.npz`` per (config hash, grid value); writes are atomic."""

    def __init__(self, root: Path, config_hash: str):
        self.dir = Path(root) / config_hash

    def path(self, value: float) -> Path:
        return self.dir / f"{_point_key(value)}.npz"

    def load(self, value: float) -> PointResult | None:
        p = self.path(value)
        if not p.exists():
            return None
        with np.load(p, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            return PointResult(meta["row"], z["tau"], z["C"], z["omega"], z["S"], meta["fit"])

    def store(self, value: float, res: PointResult) -> None:
        buf = io.BytesIO()
        meta = json.dumps(persist._clean({"row": res.row, "fit": res.fit}), sort_keys=True)
        np.savez(buf, tau=res.tau, C=res.C, omega=res.omega, S=res.S, meta=np.array(meta))
        persist.atomic_write_bytes(self.path(value), buf.getvalue())


def _restore_nan(row: dict) -> dict:
    return {k: (float(v) if isinstance(v, str) and v in ("nan", "inf", "-inf") else v) for k, v in row.items()}


# --- sweeps ------------------------------------------------------------------------------


@dataclass
class SweepResult:
    config: SweepConfig
    config_hash: str
    rows: list[dict]
    computed: int
    out_dir: Path

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)


def run_sweep(cfg: SweepConfig, out_dir: str | Path | None = None, workers: int = 1,
              use_cache: bool = True, cache_root: str | Path | None = None) -> SweepResult:
    """Run every grid point (from cache where possible) and write the outputs.

    Outputs under ``out_dir``: ``sweep.csv`` (one row per point), ``schema.json``,
    ``points/<value>.csv`` with ``tau, C`` and ``omega, S`` columns,
    ``fits/<value>.json``, ``run.json`` with timestamps and ``sweep.svg``.
    """
    out = Path(out_dir or cfg.out_dir)
    h = cfg.content_hash()
    cache = PointCache(Path(cache_root) if cache_root else default_cache_root(), h)
    started = time.time()
    results: dict[float, PointResult] = {}
    todo = []
    for v in cfg.grid:
        hit = cache.load(v) if use_cache else None
        if hit is not None:
            hit.row = _restore_nan(hit.row)
            results[v] = hit
        else:
            todo.append(v)
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            computed = list(pool.map(compute_point, [cfg] * len(todo), todo))
    else:
        computed = [compute_point(cfg, v) for v in todo]
    for v, res in zip(todo, computed):
        results[v] = res
        if use_cache:
            cache.store(v, res)
        log.info("%s=%s done%s", cfg.param, v, f" ({res.row['error']})" if res.row["error"] else "")
    rows = [results[v].row for v in cfg.grid]
    _write_sweep(cfg, h, out, [results[v] for v in cfg.grid])
    persist.write_json(out / "run.json", {"config_hash": h, "config": cfg.canonical(),
                                          "started": started, "finished": time.time(),
                                          "computed": len(todo), "cached": len(cfg.grid) - len(todo)})
    return SweepResult(cfg, h, rows, len(todo), out)


def _write_sweep(cfg: SweepConfig, h: str, out: Path, results: list[PointResult]) -> None:
    rows = [r.row for r in results]
    persist.write_csv(out / "sweep.csv", rows, CSV_COLUMNS)
    persist.write_schema(out / "schema.json")
    for res in results:
        key = _point_key(res.row["value"])
        if res.tau.size:
            n = max(res.tau.size, res.omega.size)
            pad = lambda a: np.concatenate([a, np.full(n - a.size, np.nan)])
            persist.write_columns(out / "points" / f"{key}.csv", ["tau", "C", "omega", "S"],
                                  pad(res.tau), pad(res.C), pad(res.omega), pad(res.S))
        if res.fit is not None:
            persist.write_json(out / "fits" / f"{key}.json", res.fit)
    x = np.array([r["value"] for r in rows])
    prov = {"config_hash": h, "model": cfg.model, "scheme": cfg.scheme, "params": cfg.params}
    persist.write_svg(out / "sweep.svg", [("tau_s", x, [r["tau_s"] for r in rows])],
                      cfg.param, "tau_s", prov, style="o-")


# --- finite-size scaling -----------------------------------------------------------------


def extract_estimate(cfg: SweepConfig, rows: list[dict]) -> float:
    """Per-size critical estimate from a completed sweep."""
    x = np.array([float(r["value"]) for r in rows])
    col = lambda name: np.array([float(r[name]) if r[name] != "" else np.nan for r in rows])
    if cfg.fss_quantity == "tau_s_peak":
        return fitting.locate_tau_s_peak(x, col("tau_s"), col("C0"))
    if cfg.fss_quantity == "omega_r_onset":
        v = fitting.first_onset(x, col("OmegaR"), fitting.ONSET_THRESHOLD, col("OmegaR_err"))
    else:
        v = fitting.first_onset(x, col("omega_peak"), 0.0)
    return float("nan") if v is None else v


def run_fss(cfg: SweepConfig, out_dir: str | Path | None = None, workers: int = 1, use_cache: bool = True,
            cache_root: str | Path | None = None, compute: bool = True) -> fitting.CriticalEstimate:
    """Per-size sweeps under ``out_dir/<label>/``, then a linear extrapolation to the thermodynamic limit.

    With ``compute=False`` only existing ``sweep.csv`` files are read and a
    :class:`DependencyError` lists the missing ones.
    """
    out = Path(out_dir or cfg.out_dir)
    variants = cfg.variants()
    if len(variants) < 2:
        raise DependencyError("finite-size scaling needs at least two sizes or U values")
    if not compute:
        missing = [label for label, _, _ in variants if not (out / label / "sweep.csv").exists()]
        if missing:
            raise DependencyError(f"missing sweeps for {', '.join(missing)}")
    points, table = [], []
    for label, absc, vcfg in variants:
        if compute:
            rows = run_sweep(vcfg, out / label, workers, use_cache, cache_root).rows
        else:
            rows = persist.read_csv(out / label / "sweep.csv")
        est = extract_estimate(vcfg, rows)
        table.append({"label": label, "abscissa": absc, "estimate": est})
        if math.isfinite(est):
            points.append((absc, est))
    if len(points) < 2:
        raise DependencyError("fewer than two sizes produced a finite estimate")
    abscissa = "1/L" if cfg.model == "xyz" else "U"
    res = fitting.extrapolate_thermodynamic(points, abscissa)
    report = {"quantity": cfg.fss_quantity, "abscissa": abscissa,
              "L_convention": "L = sqrt(rows * cols)" if cfg.model == "xyz" else None,
              "sizes": table, **res.to_dict()}
    persist.write_json(out / "fss.json", report)
    xs = np.array([p[0] for p in points])
    line_x = np.linspace(0.0, xs.max(), 50)
    persist.write_svg(out / "fss.svg",
                      [("estimates", xs, [p[1] for p in points]),
                       ("linear fit", line_x, res.intercept + res.slope * line_x)],
                      abscissa, cfg.fss_quantity, {"config_hash": cfg.content_hash()}, style="o-")
    return res
