"""Command-line entry point: ``opencurrents <verb> --config run.toml --out results/``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import fitting, persist
from .config import SweepConfig, load_config
from .errors import OpenCurrentsError
from .pipeline import (
    default_cache_root,
    point_statistics,
    run_fss,
    run_sweep,
    solve_point,
)

log = logging.getLogger("opencurrents")


def _value(cfg: SweepConfig, args) -> float:
    return cfg.grid[0] if args.value is None else args.value


def _out(cfg: SweepConfig, args) -> Path:
    return Path(args.out or cfg.out_dir)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.out)
    res = run_sweep(cfg, workers=args.workers, use_cache=not args.no_cache, cache_root=args.cache_root)
    failed = sum(1 for r in res.rows if r["error"])
    print(f"{len(res.rows)} points ({res.computed} computed, {len(res.rows) - res.computed} cached, "
          f"{failed} with errors) -> {res.out_dir / 'sweep.csv'}")
    return 0


def cmd_fss(args) -> int:
    cfg = load_config(args.config, args.out)
    est = run_fss(cfg, workers=args.workers, use_cache=not args.no_cache, cache_root=args.cache_root,
                  compute=not args.from_existing)
    for x, y in zip(est.sizes, est.estimates):
        print(f"{est.abscissa} = {x:.6g}: {y:.6g}")
    flag = " (two points: exact line, low confidence)" if est.low_confidence else ""
    print(f"extrapolated {cfg.fss_quantity} = {est.extrapolated:.6g}{flag}")
    return 0


def cmd_correlate(args) -> int:
    cfg = load_config(args.config, args.out)
    v = _value(cfg, args)
    st, _ = point_statistics(cfg, v)
    out = _out(cfg, args)
    persist.write_columns(out / "correlation.csv", ["tau", "C"], st.tau, st.C)
    prov = {"config_hash": cfg.content_hash(), cfg.param: v}
    persist.write_svg(out / "correlation.svg", [(f"{cfg.param}={v:g}", st.tau, st.C)], "tau", "C(tau)", prov)
    print(f"C(0) = {st.C0:.8g}, tau_s = {st.tau_s:.8g}, {fitting.classify_crossover(st.tau, st.C)}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config, args.out)
    v = _value(cfg, args)
    st, _ = point_statistics(cfg, v)
    out = _out(cfg, args)
    persist.write_columns(out / "spectrum.csv", ["omega", "S"], st.omega, st.S)
    prov = {"config_hash": cfg.content_hash(), cfg.param: v}
    persist.write_svg(out / "spectrum.svg", [(f"{cfg.param}={v:g}", st.omega, st.S)], "omega", "S(omega)", prov)
    print(f"J = {st.J:.8g}, K = {st.K:.8g}, S(0) = {st.D:.8g}, "
          f"argmax S at omega = {st.omega[int(np.argmax(st.S))]:.4g}")
    return 0


def cmd_fit(args) -> int:
    rows = persist.read_csv(args.input)
    omega, S = persist.column(rows, "omega"), persist.column(rows, "S")
    ok = np.isfinite(omega) & np.isfinite(S)
    window = tuple(args.window) if args.window else None
    if args.model == "dho":
        fit = fitting.fit_dho(omega[ok], S[ok], window)
    else:
        fit = fitting.fit_dho_lorentzian(omega[ok], S[ok], window)
    out = Path(args.out or Path(args.input).with_suffix(".fit.json"))
    persist.write_json(out, fit.to_dict())
    print(f"omega0 = {fit.omega0:.6g}, gamma0 = {fit.gamma0:.6g}, OmegaR = {fit.OmegaR:.6g}, "
          f"relative rms = {fit.relative_rms:.3g} -> {out}")
    return 0


def cmd_meanfield(args) -> int:
    from . import meanfield as mf

    cfg = load_config(args.config, args.out)
    out = _out(cfg, args)
    if cfg.model == "xyz":
        base = cfg.system_params(cfg.grid[0])
        exact = mf.xyz_mf_critical_jy(base.__class__(Jx=Fraction(str(base.Jx)), Jz=Fraction(str(base.Jz)),
                                                   gamma=Fraction(str(base.gamma))))
        rows = []
        for v in cfg.grid:
            p = cfg.system_params(v)
            row = {"value": v, "OmegaR_lin": mf.rabi_order_parameter(p)}
            try:
                st = mf.xyz_mf_steady(p, "ferro")
                rate, freq = mf.mf_rates_from_roots(mf.xyz_mf_cubic_roots(p, st))
                row.update(Sx=st.Sx, Sy=st.Sy, Sz=st.Sz, gamma_mf=rate, omega_mf=freq)
            except OpenCurrentsError:
                row.update(Sx=0.0, Sy=0.0, Sz=-1.0, gamma_mf=math.nan, omega_mf=math.nan)
            rows.append(row)
        persist.write_csv(out / "meanfield.csv", rows, ["value", "Sx", "Sy", "Sz", "OmegaR_lin", "gamma_mf", "omega_mf"])
        summary = {"Jy_c": float(exact), "Jy_c_fraction": str(exact),
                   "Jy_peak_closed": float(mf.xyz_mf_jy_peak(base, "closed")),
                   "Jy_peak_numeric": mf.xyz_mf_jy_peak(base, "numeric")}
        persist.write_json(out / "meanfield.json", summary)
        print(f"Jy_c = {exact} = {float(exact):.10g}, Jy_peak = {summary['Jy_peak_closed']:.10g}")
        return 0
    if cfg.model == "kerr":
        G, n = mf.kerr_first_order_scan(cfg.system_params(cfg.grid[0]), cfg.grid, args.selector)
        persist.write_columns(out / "meanfield.csv", ["G", "n"], G, n)
        where, size = mf.largest_jump(G, n)
        persist.write_json(out / "meanfield.json", {"selector": args.selector, "jump_at": where, "jump_size": size})
        print(f"largest jump of |alpha|^2: {size:.4g} at G = {where:.4g}")
        return 0
    raise OpenCurrentsError("meanfield supports the xyz and kerr models")


def cmd_trajectory(args) -> int:
    from .stats import correlation, output_current
    from .trajectories import estimate_correlation, simulate_ensemble

    cfg = load_config(args.config, args.out)
    t = {"n": 1000, "horizon": 20.0, "seed": 0, "bin_width": 0.05, "tau_max": 3.0, "tau_step": 0.25,
         **cfg.trajectory}
    sys_, ss = solve_point(cfg, _value(cfg, args))
    if sys_.dim > 64:
        raise OpenCurrentsError("trajectories are meant for small systems (dimension <= 64)")
    recs = simulate_ensemble(sys_, int(t["n"]), float(t["horizon"]), int(t["seed"]))
    tau = np.arange(0.0, t["tau_max"] + 1e-12, t["tau_step"])
    est = estimate_correlation(recs, float(t["bin_width"]), tau, sys_.weights)
    exact = correlation(sys_, ss, tau)
    out = _out(cfg, args)
    persist.write_columns(out / "trajectory_correlation.csv", ["tau", "estimate", "stderr", "deterministic"],
                          tau, est.estimate, est.stderr, exact)
    J = output_current(sys_, ss)
    persist.write_json(out / "trajectory.json", {"n_records": est.n_records, "J_estimate": est.J,
                                                 "J_stderr": est.J_stderr, "J_deterministic": J,
                                                 "K_estimate": est.K, "K_stderr": est.K_stderr})
    for k in range(min(args.dump, len(recs))):
        recs[k].to_csv(out / "records" / f"record_{k}.csv")
    print(f"J = {est.J:.5g} +- {est.J_stderr:.2g} (deterministic {J:.5g}); K = {est.K:.5g} +- {est.K_stderr:.2g}")
    return 0


def cmd_verify(args) -> int:
    from .verify import format_report, run_checks

    results = run_checks(args.tolerance_scale, args.negative_control)
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opencurrents", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", help="output directory (default: [output] dir of the config)")
        return p

    def runner(p):
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--no-cache", action="store_true", help="recompute every point")
        p.add_argument("--cache-root", default=None,
                       help=f"cache directory (default: $OPENCURRENTS_CACHE or {default_cache_root()})")
        return p

    p = runner(common(sub.add_parser("sweep", help="statistics and fits along the swept parameter")))
    p.set_defaults(fn=cmd_sweep)
    p = runner(common(sub.add_parser("fss", help="per-size sweeps and thermodynamic extrapolation")))
    p.add_argument("--from-existing", action="store_true", help="only read sweeps already on disk")
    p.set_defaults(fn=cmd_fss)
    for verb, fn, text in (("correlate", cmd_correlate, "C(tau) at one parameter value"),
                           ("spectrum", cmd_spectrum, "S(omega) at one parameter value")):
        p = common(sub.add_parser(verb, help=text))
        p.add_argument("--value", type=float, help="value of the swept parameter (default: first grid value)")
        p.set_defaults(fn=fn)
    p = common(sub.add_parser("fit", help="fit a spectrum CSV with columns omega, S"), config=False)
    p.add_argument("--input", required=True)
    p.add_argument("--model", choices=("dho", "dho_lorentzian"), default="dho")
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(fn=cmd_fit)
    p = common(sub.add_parser("meanfield", help="mean-field fixed points, rates and the Kerr jump"))
    p.add_argument("--selector", choices=("quantum", "upper", "lower"), default="quantum",
                   help="Kerr branch selection in the bistable region")
    p.set_defaults(fn=cmd_meanfield)
    p = common(sub.add_parser("trajectory", help="quantum-jump Monte Carlo check of J and C(tau)"))
    p.add_argument("--value", type=float)
    p.add_argument("--dump", type=int, default=0, help="write the first N jump records as CSV")
    p.set_defaults(fn=cmd_trajectory)
    p = sub.add_parser("verify", help="run the built-in oracle suite")
    p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance")
    p.add_argument("--negative-control", action="store_true", help="perturb a Liouvillian; the suite must fail")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OpenCurrentsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
