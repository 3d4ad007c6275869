"""Command-line entry point: ``ghostspec <command> [options]``.

Exit codes: 0 success, 1 configuration, 2 simulation, 3 analysis, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .analysis import fitted_fwhm, reconstruct_ghost, sweep_resolving_power
from .car import compute_car, fit_exp_decay
from .config import RunConfig, parse_config
from .detection import jsd_for, run_experiment
from .errors import DataIOError, GhostSpecError, InsufficientDataError, UnboundedCARError
from .fitting import fit_gaussians, peaks_from, resolving_power
from .noise import classify_noise, noise_spectrum
from .source import mean_pairs_per_pulse, source_marginal
from .spectral import FWHM_PER_SIGMA, Spectrum, gaussian_spectrum

log = logging.getLogger("ghostspec")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    try:
        out.mkdir(parents=True, exist_ok=True)
        path = out / name
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataIOError(str(exc)) from exc
    log.info("wrote %s", path)
    return path


def load_config(path, seed=None) -> RunConfig:
    text = ""
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataIOError(str(exc)) from exc
    cfg = parse_config(text)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return cfg


def _fnum(x):
    return None if x is None or not np.isfinite(x) else float(x)


def cmd_car_sweep(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    """CAR at every configured power density plus the exponential tail fit."""
    a = cfg.analysis
    marg = source_marginal(jsd_for(cfg.source, cfg.detection.spect_grid), "spect")
    points, rows = [], []
    for i, p in enumerate(cfg.power_densities):
        data = run_experiment(cfg.source, cfg.detection, p, cfg.n_gates, cfg.seed + i, workers)
        rep = classify_noise(data, a.car_min_threshold, marg, a.sg_window, a.sg_order)
        row = {
            "power_density_mw_mm2": float(p),
            "mu": mean_pairs_per_pulse(p, cfg.source),
            "n_cc": data.n_cc,
            "n_acc": data.n_acc,
            "car": _fnum(rep.car),
            "car_err": _fnum(rep.car_err),
            "regime": rep.regime.value,
            "n_white": rep.n_white,
            "n_colored": rep.n_colored,
        }
        rows.append(row)
        try:
            points.append(compute_car(data))
        except UnboundedCARError as exc:
            log.warning("power %g: %s", p, exc)

    report = {"config": cfg.to_dict(), "points": rows}
    try:
        fit = fit_exp_decay(points, a.tail_start)
        report["fit"] = fit.to_json_dict()
        if not fit.decaying:
            report["fit_diagnostic"] = "CAR tail does not decay"
    except InsufficientDataError as exc:
        report["fit"] = None
        report["fit_diagnostic"] = str(exc)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["power_density_mw_mm2", "mu", "n_cc", "n_acc", "car", "car_err", "regime"]
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    _write(out, "car_sweep.csv", buf.getvalue())
    _write(out, "car_sweep.json", _dump_json(report))
    return report


def cmd_ghost(cfg: RunConfig, out: Path, power_density: float, subtract=True, map_axis=False, workers=1) -> dict:
    """One run, its reconstructed ghost spectrum and a sidecar report."""
    a = cfg.analysis
    data = run_experiment(cfg.source, cfg.detection, power_density, cfg.n_gates, cfg.seed, workers)
    marg = source_marginal(jsd_for(cfg.source, cfg.detection.spect_grid), "spect")
    rep = classify_noise(data, a.car_min_threshold, marg, a.sg_window, a.sg_order)
    ghost = reconstruct_ghost(data, subtract, (a.sg_window, a.sg_order))
    fwhm, center = fitted_fwhm(ghost)
    if map_axis:
        ghost = reconstruct_ghost(data, subtract, (a.sg_window, a.sg_order), True, cfg.source.pump.lambda_p_nm)
    side = {
        "config": cfg.to_dict(),
        "power_density_mw_mm2": float(power_density),
        "subtract_accidentals": bool(subtract),
        "axis": "bucket" if map_axis else "spectrometer",
        "ghost_fwhm_nm": fwhm,
        "ghost_center_nm": center,
        **rep.to_json_dict(),
    }
    _write(out, "ghost.csv", ghost.to_csv())
    _write(out, "ghost.json", _dump_json(side))
    _write(out, "coincidences.json", data.to_json() + "\n")
    return side


def cmd_noise_spectrum(cfg: RunConfig, out: Path, power_density: float, workers=1) -> dict:
    a = cfg.analysis
    data = run_experiment(cfg.source, cfg.detection, power_density, cfg.n_gates, cfg.seed, workers)
    marg = source_marginal(jsd_for(cfg.source, cfg.detection.spect_grid), "spect")
    rep = classify_noise(data, a.car_min_threshold, marg, a.sg_window, a.sg_order)
    _write(out, "noise_spectrum.csv", noise_spectrum(data, a.sg_window, a.sg_order).to_csv())
    _write(out, "source_spectrum.csv", marg.to_csv())
    _write(out, "noise_report.json", _dump_json(rep.to_json_dict()))
    _write(out, "coincidences.json", data.to_json() + "\n")
    return rep.to_json_dict()


def cmd_resolve_sweep(cfg: RunConfig, out: Path, workers=1) -> dict:
    a = cfg.analysis
    src = cfg.source
    grid = cfg.detection.spect_grid
    source = gaussian_spectrum(grid, src.center_spect_nm, src.jsd_marginal_fwhm_nm)
    m = sweep_resolving_power(
        a.separations_nm, a.noise_fractions, a.peak_fwhm_nm, source, grid, src.center_spect_nm, a.noise_scale, workers
    )
    summary = m.summary()
    summary["config"] = cfg.to_dict()
    summary["fitter"] = {"max_iter": 500, "rtol_cost": 1e-10, "step_tol": 1e-12, "shared_offset": True}
    summary = json.loads(json.dumps(summary, allow_nan=False))
    _write(out, "rp_map.csv", m.to_csv())
    _write(out, "rp_summary.json", _dump_json(summary))
    return summary


def cmd_fit(path, out: Path, n_peaks: int) -> dict:
    s = Spectrum.from_csv(Path(path))
    fit = fit_gaussians(s, n_peaks)
    rep = {
        "offset_d": fit.offset_d,
        "peaks": peaks_from(fit),
        "fwhm_nm": [FWHM_PER_SIGMA * p.sigma for p in fit.peaks],
        "residual_norm": fit.residual_norm,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "resolving_power": resolving_power(fit) if n_peaks == 2 else None,
    }
    _write(out, "fit.json", _dump_json(rep))
    return rep


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--workers", type=int, default=1, help="worker threads (never changes results)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ghostspec", description="Quantum ghost spectroscopy noise simulator")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("car-sweep", parents=[common], help="CAR versus pump power density")
    g = sub.add_parser("ghost", parents=[common], help="simulate and reconstruct a ghost spectrum")
    g.add_argument("--power", type=float, required=True, help="pump power density, mW/mm^2")
    g.add_argument("--no-subtract", action="store_true", help="keep accidental coincidences")
    g.add_argument("--map-axis", action="store_true", help="express the ghost on the bucket-arm axis")
    n = sub.add_parser("noise-spectrum", parents=[common], help="accidental-coincidence spectrum and regime")
    n.add_argument("--power", type=float, required=True, help="pump power density, mW/mm^2")
    sub.add_parser("resolve-sweep", parents=[common], help="two-peak resolving power vs colored noise")
    f = sub.add_parser("fit", parents=[common], help="fit Gaussians to a spectrum CSV")
    f.add_argument("spectrum", help="CSV with header wavelength_nm,value")
    f.add_argument("--peaks", type=int, choices=(1, 2), default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        if args.workers < 1:
            raise GhostSpecError("--workers must be >= 1")
        if args.command == "fit":
            cmd_fit(args.spectrum, out, args.peaks)
            return 0
        cfg = load_config(args.config, args.seed)
        if args.command == "car-sweep":
            cmd_car_sweep(cfg, out, args.workers)
        elif args.command == "ghost":
            cmd_ghost(cfg, out, args.power, not args.no_subtract, args.map_axis, args.workers)
        elif args.command == "noise-spectrum":
            cmd_noise_spectrum(cfg, out, args.power, args.workers)
        elif args.command == "resolve-sweep":
            cmd_resolve_sweep(cfg, out, args.workers)
    except GhostSpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataIOError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
