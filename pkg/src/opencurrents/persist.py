"""Atomic file output, CSV/JSON helpers, the column schema and deterministic SVG plots."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__

# column -> (unit, description); all rates and frequencies in units of gamma
SWEEP_COLUMNS = {
    "param": ("", "name of the swept parameter"),
    "value": ("model units", "value of the swept parameter"),
    "J": ("gamma", "average output current"),
    "K": ("gamma", "white-noise strength"),
    "C0": ("gamma^2", "C(tau = 0)"),
    "tau_s": ("1/gamma", "characteristic timescale; NaN where C(0) vanishes"),
    "D": ("gamma", "S(omega = 0)"),
    "identity_residual": ("", "|S(0) - K - 2 C(0) tau_s| / (|S(0)| + |K|)"),
    "OmegaR": ("gamma", "fitted Rabi frequency"),
    "OmegaR_err": ("gamma", "standard error of OmegaR"),
    "omega0": ("gamma", "fitted oscillator frequency"),
    "gamma0": ("gamma", "fitted oscillator damping"),
    "gamma2": ("gamma", "width of the zero-centred Lorentzian (two-mode fit only)"),
    "omega_peak": ("gamma", "peak position implied by the fit"),
    "omega_argmax": ("gamma", "grid position of the largest S(omega)"),
    "fit_rel_rms": ("", "fit residual rms over the peak height"),
    "classification": ("", "overdamped or underdamped C(tau)"),
    "gap": ("gamma", "Liouvillian gap of the sector carrying the fluctuations"),
    "error": ("", "failure message; empty on success"),
}


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    atomic_write_text(path, buf.getvalue())


def write_columns(path: str | Path, header: Sequence[str], *cols: Iterable[float]) -> None:
    write_csv(path, [dict(zip(header, vals)) for vals in zip(*cols)], header)


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def column(rows: Sequence[dict], name: str) -> np.ndarray:
    return np.array([float(r[name]) if r.get(name, "") != "" else np.nan for r in rows])


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_clean(v) for v in o.tolist()]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o


def write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_schema(path: str | Path) -> None:
    write_json(path, {"units": "all quantities in units of gamma = 1",
                      "columns": {k: {"unit": u, "description": d} for k, (u, d) in SWEEP_COLUMNS.items()}})


def write_svg(path: str | Path, series: Sequence[tuple[str, np.ndarray, np.ndarray]], xlabel: str,
              ylabel: str, provenance: dict, title: str = "", style: str = "-", logy: bool = False) -> None:
    """Static line plot with a provenance comment; identical inputs give identical bytes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "opencurrents", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        for label, x, y in series:
            ax.plot(np.asarray(x, dtype=float), np.asarray(y, dtype=float), style, label=label, ms=3)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=8)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    svg = buf.getvalue()
    meta = json.dumps(_clean({"generator": f"opencurrents {__version__}", **provenance}), sort_keys=True)
    comment = "<!-- provenance: " + meta.replace("--", "- -") + " -->\n"
    head, sep, rest = svg.partition("?>\n")
    atomic_write_text(path, head + sep + comment + rest if sep else comment + svg)
