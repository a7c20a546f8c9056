"""Sweep configuration: a TOML file with nested sections.

    model = "xyz"                 # xyz | kerr | qubit
    scheme = "photodetection"     # photodetection | homodyne

    [params]                      # fixed model parameters
    Jx = 0.9
    rows = 2
    cols = 3

    [sweep]
    param = "Jy"
    start = 0.95
    stop = 1.35
    step = 0.01                   # or: values = [...]
    level = "full"                # full | timescale (J, K, C(0), tau_s, D only)

    [grids]                       # omit for automatic grids
    dtau = 0.05
    tau_max = 40.0
    omega_max = 4.0
    n_omega = 801

    [fit]
    model = "dho"                 # dho | dho_lorentzian | none
    window = [0.0, 3.0]

    [fss]
    sizes = [[2, 2], [2, 3]]      # xyz; kerr uses  U = [0.1, 0.05]
    quantity = "tau_s_peak"       # tau_s_peak | omega_r_onset | peak_onset

Everything except the output directory enters the content hash that keys
the cache.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, OpenCurrentsError
from .models import KerrParams, QubitParams, XYZParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PARAM_TYPES = {"xyz": XYZParams, "kerr": KerrParams, "qubit": QubitParams}
SCHEMES = ("photodetection", "homodyne")
FIT_MODELS = ("dho", "dho_lorentzian", "none")
LEVELS = ("full", "timescale")
FSS_QUANTITIES = ("tau_s_peak", "omega_r_onset", "peak_onset")


@dataclass(frozen=True)
class SweepConfig:
    model: str
    param: str
    grid: tuple[float, ...]
    params: dict = field(default_factory=dict)
    scheme: str = "photodetection"
    dtau: float | None = None
    tau_max: float | None = None
    omega_max: float | None = None
    n_omega: int = 801
    fit_model: str = "dho"
    fit_window: tuple[float, float] | None = None
    homodyne_phases: tuple[float, ...] | None = None
    homodyne_weights: tuple[float, ...] | None = None
    fss_sizes: tuple[tuple[int, int], ...] = ()
    fss_U: tuple[float, ...] = ()
    fss_quantity: str = "tau_s_peak"
    level: str = "full"
    trajectory: dict = field(default_factory=dict)
    out_dir: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in PARAM_TYPES:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {sorted(PARAM_TYPES)}")
        names = {f.name for f in dataclasses.fields(PARAM_TYPES[self.model])}
        bad = set(self.params) - names
        if bad:
            raise ConfigError(f"parameters {sorted(bad)} are not valid for model {self.model!r}")
        if self.param not in names:
            raise ConfigError(f"swept parameter {self.param!r} is not valid for model {self.model!r}")
        g = np.asarray(self.grid, dtype=float)
        if g.size == 0 or not np.all(np.isfinite(g)) or np.any(np.diff(g) <= 0):
            raise ConfigError("the swept grid must be nonempty and strictly increasing")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown detection scheme {self.scheme!r}")
        if self.fit_model not in FIT_MODELS:
            raise ConfigError(f"unknown fit model {self.fit_model!r}")
        if self.level not in LEVELS:
            raise ConfigError(f"unknown sweep level {self.level!r}; expected one of {LEVELS}")
        if self.fss_quantity not in FSS_QUANTITIES:
            raise ConfigError(f"unknown fss quantity {self.fss_quantity!r}")
        if self.fss_sizes and self.model != "xyz":
            raise ConfigError("fss sizes apply to the xyz model only")
        if self.fss_U and self.model != "kerr":
            raise ConfigError("fss U values apply to the kerr model only")
        try:
            self.system_params(float(g[0]))
        except (TypeError, ValueError, OpenCurrentsError) as exc:
            raise ConfigError(f"invalid parameters for {self.model!r}: {exc}") from None

    def system_params(self, value: float | None = None, **overrides):
        kw = dict(self.params)
        kw.update(overrides)
        if value is not None:
            kw[self.param] = value
        return PARAM_TYPES[self.model](**kw)

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def variants(self) -> list[tuple[str, float, "SweepConfig"]]:
        """``(label, abscissa, config)`` per finite-size variant.

        The abscissa is ``1/L`` with ``L = sqrt(rows * cols)`` for the lattice
        and ``U`` for the resonator.
        """
        out = []
        for rows, cols in self.fss_sizes:
            p = {**self.params, "rows": int(rows), "cols": int(cols)}
            cfg = dataclasses.replace(self, params=p, fss_sizes=(), fss_U=())
            out.append((f"{rows}x{cols}", 1.0 / math.sqrt(rows * cols), cfg))
        for U in self.fss_U:
            cfg = dataclasses.replace(self, params={**self.params, "U": float(U)}, fss_sizes=(), fss_U=())
            out.append((f"U{U:.6g}", float(U), cfg))
        return out


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _grid(sweep: dict) -> tuple[float, ...]:
    if "values" in sweep:
        return tuple(float(v) for v in sweep["values"])
    try:
        start, stop, step = float(sweep["start"]), float(sweep["stop"]), float(sweep["step"])
    except KeyError as exc:
        raise ConfigError(f"[sweep] needs 'values' or start/stop/step (missing {exc})") from None
    if step <= 0:
        raise ConfigError("[sweep] step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    # rounding keeps grid values free of accumulated float noise
    return tuple(round(start + k * step, 12) for k in range(n))


def config_from_dict(raw: dict, out_dir: str | None = None) -> SweepConfig:
    raw = dict(raw)
    sweep = raw.get("sweep")
    if not sweep or "param" not in sweep:
        raise ConfigError("missing [sweep] section with a 'param' entry")
    grids = raw.get("grids", {})
    fit = raw.get("fit", {})
    hom = raw.get("homodyne", {})
    fss = raw.get("fss", {})
    window = fit.get("window")
    known = {"model", "scheme", "params", "sweep", "grids", "fit", "homodyne", "fss", "trajectory", "output"}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config entries {sorted(extra)}")
    try:
        return SweepConfig(
            model=raw.get("model", "xyz"),
            param=sweep["param"],
            grid=_grid(sweep),
            params=dict(raw.get("params", {})),
            scheme=raw.get("scheme", "photodetection"),
            dtau=grids.get("dtau"),
            tau_max=grids.get("tau_max"),
            omega_max=grids.get("omega_max"),
            n_omega=int(grids.get("n_omega", 801)),
            fit_model=fit.get("model", "dho"),
            fit_window=tuple(float(w) for w in window) if window else None,
            homodyne_phases=tuple(hom["phases"]) if "phases" in hom else None,
            homodyne_weights=tuple(hom["weights"]) if "weights" in hom else None,
            fss_sizes=tuple(tuple(int(v) for v in s) for s in fss.get("sizes", ())),
            fss_U=tuple(float(u) for u in fss.get("U", ())),
            fss_quantity=fss.get("quantity", "tau_s_peak"),
            level=sweep.get("level", "full"),
            trajectory=dict(raw.get("trajectory", {})),
            out_dir=out_dir or raw.get("output", {}).get("dir", "results"),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path, out_dir: str | None = None) -> SweepConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, out_dir)
