import json
from pathlib import Path

import numpy as np
import pytest

from opencurrents import persist, pipeline
from opencurrents.config import config_from_dict, load_config
from opencurrents.errors import ConfigError, DependencyError
from opencurrents.pipeline import run_fss, run_sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

QUBIT = {
    "model": "qubit",
    "params": {"gamma_down": 1.0, "gamma_up": 0.0},
    "sweep": {"param": "Omega", "values": [0.3, 0.7]},
    "grids": {"dtau": 0.05, "tau_max": 20.0, "omega_max": 4.0, "n_omega": 201},
    "fit": {"model": "dho"},
}


def qubit_cfg(**changes):
    raw = json.loads(json.dumps(QUBIT))
    for k, v in changes.items():
        raw[k] = v
    return config_from_dict(raw)


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.toml")):
        cfg = load_config(path)
        assert cfg.grid and cfg.content_hash()


def test_grid_from_start_stop_step():
    cfg = load_config(CONFIGS / "xyz_2x2.toml")
    assert cfg.grid[0] == 0.9 and cfg.grid[-1] == 1.4 and len(cfg.grid) == 26
    assert cfg.grid[5] == 1.0


@pytest.mark.parametrize("raw", [
    {"model": "spin", "sweep": {"param": "Jy", "values": [1.0]}},
    {"model": "xyz", "sweep": {"param": "Jq", "values": [1.0]}},
    {"model": "xyz", "sweep": {"param": "Jy", "values": [1.0, 1.0]}},
    {"model": "xyz", "sweep": {"param": "Jy", "start": 1.0, "stop": 1.2}},
    {"model": "xyz", "sweep": {"param": "Jy", "values": [1.0]}, "params": {"bogus": 1}},
    {"model": "xyz", "sweep": {"param": "Jy", "values": [1.0]}, "scheme": "heterodyne"},
    {"model": "xyz", "sweep": {"param": "Jy", "values": [1.0]}, "surprise": {}},
    {"model": "kerr", "sweep": {"param": "G", "values": [1.0]}, "fss": {"sizes": [[2, 2]]}},
    {"model": "kerr", "sweep": {"param": "G", "values": [1.0]}, "params": {"U": -1.0}},
    {"sweep": {}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_hash_ignores_output_dir_only():
    a = config_from_dict(QUBIT, out_dir="x")
    b = config_from_dict(QUBIT, out_dir="y")
    assert a.content_hash() == b.content_hash()
    assert qubit_cfg(scheme="homodyne").content_hash() != a.content_hash()
    raw = json.loads(json.dumps(QUBIT))
    raw["params"]["gamma_down"] = 1.1
    assert config_from_dict(raw).content_hash() != a.content_hash()


def test_variants_use_sqrt_site_count():
    cfg = load_config(CONFIGS / "xyz_fss.toml")
    (l1, x1, c1), (l2, x2, c2) = cfg.variants()
    assert (l1, l2) == ("2x2", "2x3")
    assert x1 == pytest.approx(0.5) and x2 == pytest.approx(1 / np.sqrt(6))
    assert c2.system_params(1.0).cols == 3


def test_sweep_outputs_and_cache(tmp_path, monkeypatch):
    cfg = qubit_cfg()
    first = run_sweep(cfg, tmp_path / "a")
    assert first.computed == 2
    out = tmp_path / "a"
    for name in ("sweep.csv", "schema.json", "run.json", "sweep.svg", "points/0.3.csv", "fits/0.7.json"):
        assert (out / name).exists(), name
    rows = persist.read_csv(out / "sweep.csv")
    assert list(rows[0]) == list(persist.SWEEP_COLUMNS)
    w = 1.4
    assert float(rows[1]["J"]) == pytest.approx(-w**2 / (1 + 2 * w**2), abs=1e-13)
    assert all(r["error"] == "" for r in rows)
    assert float(rows[1]["identity_residual"]) < 1e-10

    def boom(*args):
        raise AssertionError("cache miss")

    monkeypatch.setattr(pipeline, "compute_point", boom)
    again = run_sweep(cfg, tmp_path / "b")
    assert again.computed == 0
    for name in ("sweep.csv", "sweep.svg", "points/0.7.csv", "fits/0.3.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    svg = (tmp_path / "b" / "sweep.svg").read_text()
    assert cfg.content_hash() in svg


def test_recomputation_is_deterministic(tmp_path):
    cfg = qubit_cfg()
    run_sweep(cfg, tmp_path / "a", use_cache=False)
    run_sweep(cfg, tmp_path / "b", use_cache=False)
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert (tmp_path / "a" / "sweep.svg").read_bytes() == (tmp_path / "b" / "sweep.svg").read_bytes()


def test_failing_point_is_recorded_not_fatal(tmp_path):
    raw = {"model": "kerr", "params": {"U": 1 / 30, "nmax": 12},
           "sweep": {"param": "G", "values": [0.05, 1.5], "level": "timescale"}}
    res = run_sweep(config_from_dict(raw), tmp_path)
    ok, bad = res.rows
    assert ok["error"] == "" and np.isfinite(ok["tau_s"])
    assert bad["error"].startswith("TruncationTooSmallError")
    assert np.isnan(bad["J"])


def test_dark_point_leaves_tau_s_empty(tmp_path):
    cfg = qubit_cfg(sweep={"param": "Omega", "values": [0.0, 0.5]}, fit={"model": "none"})
    res = run_sweep(cfg, tmp_path)
    assert np.isnan(res.rows[0]["tau_s"]) and res.rows[0]["error"] == ""
    assert np.isfinite(res.rows[1]["tau_s"])


def test_fss_needs_two_sizes_and_existing_sweeps(tmp_path):
    one = {"model": "xyz", "params": {"Jx": 0.9, "Jz": 1.0},
           "sweep": {"param": "Jy", "values": [1.0], "level": "timescale"}, "fss": {"sizes": [[2, 2]]}}
    with pytest.raises(DependencyError):
        run_fss(config_from_dict(one), tmp_path)
    one["fss"]["sizes"] = [[2, 2], [2, 3]]
    with pytest.raises(DependencyError, match="2x2, 2x3"):
        run_fss(config_from_dict(one), tmp_path, compute=False)


def test_fss_end_to_end(tmp_path):
    raw = {"model": "xyz", "params": {"Jx": 0.9, "Jz": 1.0},
           "sweep": {"param": "Jy", "start": 0.91, "stop": 1.15, "step": 0.03, "level": "timescale"},
           "fss": {"sizes": [[2, 2], [2, 3]]}}
    cfg = config_from_dict(raw)
    est = run_fss(cfg, tmp_path)
    assert est.low_confidence and est.abscissa == "1/L"
    # the two estimates sit near the discrete tau_s maxima of each size
    assert est.estimates[0] == pytest.approx(0.94, abs=0.02)
    assert est.estimates[1] == pytest.approx(1.0, abs=0.02)
    report = json.loads((tmp_path / "fss.json").read_text())
    assert report["L_convention"] == "L = sqrt(rows * cols)"
    again = run_fss(cfg, tmp_path, compute=False)
    assert again.extrapolated == pytest.approx(est.extrapolated, rel=1e-12)
