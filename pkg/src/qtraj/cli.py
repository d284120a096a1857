"""Command-line entry point: reproducible simulation runs with manifests.

Subcommands: simulate | ensemble | steadyscan | g2 | darkstats | heatmap.
Options come from an optional JSON config file plus flags; flags win.  Every
output directory receives a ``manifest.json`` recording the toolkit version,
the fully resolved configuration, derived quantities, and the produced files
— enough to replay the run bitwise on one platform.

All times and rates are in rescaled units (the single-atom decay rate is the
unit rate; times are its inverse).  Exit codes: 0 success, 2 configuration
error, 3 numerical failure.

The environment variable ``QTRAJ_THREADS`` caps the BLAS/LAPACK worker
threads used by the dense linear algebra; results are independent of it.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .backend import BACKEND_NAME
from .errors import QtrajError
from .master import steady_scan, write_scan_csv
from .models import (
    AtomParams,
    ModelSpec,
    build_two_atom_eigen,
    model_from_dict,
    model_to_dict,
)
from .photonstats import (
    PhotonStream,
    g2_analytic_rf,
    g2_estimate,
    stream_from_trajectory,
    write_g2_csv,
)
from .darkperiods import (
    APEX_FACTOR,
    classify_periods,
    decomposition,
    heatmap as compute_heatmap,
    period_stats,
    write_heatmap_csv,
    write_period_stats_json,
)
from .trajectory import (
    SolverControls,
    run_ensemble,
    run_first_order,
    run_norm_threshold,
    write_jumps_csv,
    write_populations_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_MODEL_KEYS = (
    "gamma",
    "omega_rabi",
    "delta_total",
    "delta_diff",
    "v",
    "gamma12",
    "omega_atom",
)


class ConfigError(Exception):
    pass


def _apply_thread_limit():
    """Cap BLAS/LAPACK worker threads from QTRAJ_THREADS, if set."""
    raw = os.environ.get("QTRAJ_THREADS")
    if not raw:
        return
    try:
        n = max(1, int(raw))
    except ValueError:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _resolve_model(args, cfg) -> tuple[ModelSpec, dict]:
    """Model from (in increasing priority) config 'model' block, --model-file,
    and inline flags.  delta_total may be the string 'antisymmetric' to pin
    the drive to the antisymmetric resonance (-lambda)."""
    doc = {}
    if isinstance(cfg.get("model"), dict):
        doc.update(cfg["model"])
    if getattr(args, "model_file", None):
        try:
            with open(args.model_file) as fh:
                doc.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read model file: {exc}") from exc
    if getattr(args, "model", None):
        doc["model"] = args.model
    for key in _MODEL_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if "model" not in doc:
        raise ConfigError("no model specified (use --model or --model-file)")
    on_resonance = doc.get("delta_total") == "antisymmetric" or getattr(
        args, "antisymmetric_resonance", False
    )
    if on_resonance:
        lam = math.sqrt(
            float(doc.get("delta_diff", 0.0)) ** 2 / 4.0 + float(doc.get("v", 0.0)) ** 2
        )
        doc["delta_total"] = -lam
    elif getattr(args, "delta_total", None) is not None:
        doc["delta_total"] = args.delta_total
    try:
        model = model_from_dict(doc)
    except (ValueError, KeyError, QtrajError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc
    return model, doc


def _derived(model: ModelSpec) -> dict:
    out = {"gamma_s": None, "gamma_a": None, "lambda": None, "alpha": None, "beta": None}
    p = model.params
    if model.dim == 4:
        out["gamma_s"] = p.gamma + p.gamma12
        out["gamma_a"] = p.gamma - p.gamma12
    if model.eigen_coeffs is not None:
        out["lambda"] = model.eigen_coeffs.lam
        out["alpha"] = model.eigen_coeffs.alpha
        out["beta"] = model.eigen_coeffs.beta
    return out


def _initial_state(model: ModelSpec, spec: str) -> np.ndarray:
    if spec == "ground":
        psi = np.zeros(model.dim, dtype=complex)
        psi[-1] = 1.0
        return psi
    if spec == "excited":
        psi = np.zeros(model.dim, dtype=complex)
        psi[0] = 1.0
        return psi
    try:
        amps = np.array([complex(x) for x in spec.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --initial value {spec!r}: {exc}") from exc
    if amps.shape[0] != model.dim:
        raise ConfigError("--initial amplitude count does not match model dim")
    return amps / np.linalg.norm(amps)


def _write_manifest(out_dir, command, resolved, derived, files, t0):
    manifest = {
        "toolkit_version": __version__,
        "backend": BACKEND_NAME,
        "command": command,
        "config": resolved,
        "derived": derived,
        "wall_clock_s": time.time() - t0,
        "outputs": sorted(files),
        "units": "all times in inverse rescaled decay rate",
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _opt(args, cfg, key, default=None):
    val = getattr(args, key, None)
    if val is not None:
        return val
    return cfg.get(key, default)


def _controls(args, cfg) -> SolverControls:
    return SolverControls(
        rtol=float(_opt(args, cfg, "rtol", 1e-10)),
        atol=float(_opt(args, cfg, "atol", 1e-10)),
        max_step=float(_opt(args, cfg, "max_step", math.inf)),
    )


def _write_stream(stream: PhotonStream, path):
    with open(path, "w") as fh:
        for t in stream.timestamps:
            fh.write(f"{t:.12g}\n")


# --- subcommand implementations --------------------------------------------

def _cmd_simulate(args, cfg, out_dir, t0):
    model, resolved_model = _resolve_model(args, cfg)
    solver = _opt(args, cfg, "solver", "first_order")
    t_final = float(_opt(args, cfg, "t_final", 10.0))
    seed = int(_opt(args, cfg, "seed", 0))
    psi0 = _initial_state(model, _opt(args, cfg, "initial", "ground"))
    if solver == "first_order":
        dt = float(_opt(args, cfg, "dt", 0.001))
        rec = run_first_order(
            model, psi0, t_final, dt, seed,
            sample_every=int(_opt(args, cfg, "sample_every", 1)),
        )
    elif solver == "norm_threshold":
        n_samples = int(_opt(args, cfg, "n_samples", 201))
        rec = run_norm_threshold(
            model, psi0, t_final, _controls(args, cfg), seed,
            np.linspace(0.0, t_final, n_samples),
        )
    else:
        raise ConfigError(f"unknown solver {solver!r}")
    files = []
    path = os.path.join(out_dir, "trajectory.csv")
    write_populations_csv(rec, path, model.basis)
    files.append("trajectory.csv")
    path = os.path.join(out_dir, "jumps.csv")
    write_jumps_csv(rec, path)
    files.append("jumps.csv")
    if rec.jumps:
        _write_stream(
            stream_from_trajectory(rec), os.path.join(out_dir, "stream.txt")
        )
        files.append("stream.txt")
    resolved = {"model": resolved_model, "solver": solver, "t_final": t_final,
                "seed": seed, "initial": _opt(args, cfg, "initial", "ground")}
    _write_manifest(out_dir, "simulate", resolved, _derived(model), files, t0)


def _cmd_ensemble(args, cfg, out_dir, t0):
    model, resolved_model = _resolve_model(args, cfg)
    solver = _opt(args, cfg, "solver", "first_order")
    t_final = float(_opt(args, cfg, "t_final", 10.0))
    n_traj = int(_opt(args, cfg, "n_traj", 100))
    seed = int(_opt(args, cfg, "seed", 0))
    psi0 = _initial_state(model, _opt(args, cfg, "initial", "ground"))
    dt = _opt(args, cfg, "dt", 0.001)
    res = run_ensemble(
        model, psi0, t_final, n_traj=n_traj, master_seed=seed,
        dt=float(dt) if dt is not None else None,
        controls=_controls(args, cfg),
        sample_every=int(_opt(args, cfg, "sample_every", 1)),
        solver=solver,
    )
    path = os.path.join(out_dir, "ensemble.csv")
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"mean_pop_{b}" for b in model.basis])
        for t, row in zip(res.times, res.mean_populations):
            w.writerow([f"{t:.12g}"] + [f"{x:.12g}" for x in row])
    resolved = {"model": resolved_model, "solver": solver, "t_final": t_final,
                "n_traj": n_traj, "seed": seed}
    _write_manifest(out_dir, "ensemble", resolved, _derived(model), ["ensemble.csv"], t0)


def _cmd_steadyscan(args, cfg, out_dir, t0):
    model, resolved_model = _resolve_model(args, cfg)
    lo = float(_opt(args, cfg, "delta_min", -60.0))
    hi = float(_opt(args, cfg, "delta_max", 60.0))
    n = int(_opt(args, cfg, "delta_steps", 241))
    basis = _opt(args, cfg, "basis", "eigen")
    grid = np.linspace(lo, hi, n)
    builder = build_two_atom_eigen if model.dim == 4 else None
    if builder is None:
        raise ConfigError("steadyscan requires a two-atom model")
    grid_list = list(grid)
    scan = steady_scan(model.params, grid_list, builder, basis=basis)
    write_scan_csv(scan, os.path.join(out_dir, "scan.csv"))
    resolved = {"model": resolved_model, "delta_min": lo, "delta_max": hi,
                "delta_steps": n, "basis": basis,
                "failures": [list(f) for f in scan.failures]}
    _write_manifest(out_dir, "steadyscan", resolved, _derived(model), ["scan.csv"], t0)


def _cmd_g2(args, cfg, out_dir, t0):
    files = []
    resolved = {}
    model = None
    if getattr(args, "stream", None) or cfg.get("stream"):
        spath = getattr(args, "stream", None) or cfg.get("stream")
        try:
            times = np.loadtxt(spath, ndmin=1)
        except OSError as exc:
            raise ConfigError(f"cannot read stream file: {exc}") from exc
        stream = PhotonStream.from_jump_times(times)
        resolved["stream"] = str(spath)
    else:
        model, resolved_model = _resolve_model(args, cfg)
        t_final = float(_opt(args, cfg, "t_final", 50000.0))
        seed = int(_opt(args, cfg, "seed", 0))
        psi0 = _initial_state(model, _opt(args, cfg, "initial", "ground"))
        rec = run_norm_threshold(
            model, psi0, t_final, _controls(args, cfg), seed, sample_times=[]
        )
        stream = stream_from_trajectory(rec)
        _write_stream(stream, os.path.join(out_dir, "stream.txt"))
        files.append("stream.txt")
        resolved.update({"model": resolved_model, "t_final": t_final, "seed": seed})
    dtd = _opt(args, cfg, "dtd", None)
    tau_max = float(_opt(args, cfg, "tau_max", 10.0))
    splitter_seed = int(_opt(args, cfg, "splitter_seed", 1))
    dtd_val = float(dtd) if dtd is not None else 0.1 * stream.mean_spacing
    taus = np.arange(0.0, tau_max + 0.5 * dtd_val, dtd_val)
    curve = g2_estimate(stream, dtd_val, taus, splitter_seed)
    write_g2_csv(curve, os.path.join(out_dir, "g2.csv"))
    files.append("g2.csv")
    if model is not None and model.name == "driven_atom":
        analytic = g2_analytic_rf(model.params.omega_rabi, model.params.gamma, taus)
        write_g2_csv(analytic, os.path.join(out_dir, "g2_analytic.csv"))
        files.append("g2_analytic.csv")
    resolved.update({"dtd": dtd_val, "tau_max": tau_max,
                     "splitter_seed": splitter_seed})
    _write_manifest(out_dir, "g2", resolved,
                    _derived(model) if model else {}, files, t0)


def _cmd_darkstats(args, cfg, out_dir, t0):
    model, resolved_model = _resolve_model(args, cfg)
    factor = float(_opt(args, cfg, "apex_factor", APEX_FACTOR))
    d = decomposition(model)
    stats = period_stats(d, factor)
    files = ["darkstats.json"]
    extra = {"apex_factor": factor}
    t_final = _opt(args, cfg, "t_final", None)
    if t_final is not None:
        seed = int(_opt(args, cfg, "seed", 0))
        rec = run_norm_threshold(
            model, d.reset_state, float(t_final), _controls(args, cfg), seed,
            sample_times=[],
        )
        stream = stream_from_trajectory(rec)
        _write_stream(stream, os.path.join(out_dir, "stream.txt"))
        files.append("stream.txt")
        cls = classify_periods(stream, stats.t_apex)
        import csv

        with open(os.path.join(out_dir, "periods.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "duration", "photons"])
            for dur in cls.dark_intervals:
                w.writerow(["dark", f"{dur:.12g}", 1])
            for n_ph, dur in zip(cls.light_period_photons, cls.light_period_durations):
                w.writerow(["light", f"{dur:.12g}", int(n_ph)])
        files.append("periods.csv")
        extra.update({
            "empirical_t_dark": cls.mean_dark if cls.dark_intervals.size else None,
            "empirical_t_dark_se": cls.mean_dark_se if cls.dark_intervals.size > 1 else None,
            "empirical_tau_light": cls.mean_light_gap if cls.light_gaps.size else None,
            "empirical_tau_light_se": cls.mean_light_gap_se if cls.light_gaps.size > 1 else None,
            "n_light_photons": cls.n_light_photons,
            "n_dark_photons": cls.n_dark_photons,
            "t_final": float(t_final),
            "seed": seed,
        })
    write_period_stats_json(stats, os.path.join(out_dir, "darkstats.json"), extra)
    resolved = {"model": resolved_model, "apex_factor": factor}
    derived = _derived(model)
    derived["t_apex"] = stats.t_apex
    _write_manifest(out_dir, "darkstats", resolved, derived, files, t0)


def _cmd_heatmap(args, cfg, out_dir, t0):
    # Only template parameters are needed; V and delta_diff come from the
    # grid, so do not require a buildable standalone model here.
    doc = {}
    if isinstance(cfg.get("model"), dict):
        doc.update(cfg["model"])
    for key in _MODEL_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    doc.pop("model", None)
    if doc.get("delta_total") == "antisymmetric":
        doc.pop("delta_total")
    try:
        template = AtomParams(**{k: float(v) for k, v in doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid heatmap parameters: {exc}") from exc
    resolved_model = dict(doc)
    v_grid = np.linspace(
        float(_opt(args, cfg, "v_min", 1.0)),
        float(_opt(args, cfg, "v_max", 50.0)),
        int(_opt(args, cfg, "v_steps", 10)),
    )
    d_grid = np.linspace(
        float(_opt(args, cfg, "delta_min", 0.2)),
        float(_opt(args, cfg, "delta_max", 20.0)),
        int(_opt(args, cfg, "delta_steps", 10)),
    )
    factor = float(_opt(args, cfg, "apex_factor", APEX_FACTOR))
    log10 = bool(_opt(args, cfg, "log10", False))
    grid = compute_heatmap(template, v_grid, d_grid, factor, log10)
    files = []
    for stat in ("t_apex", "t_dark", "tau_light", "n_light", "t_light"):
        name = f"heatmap_{stat}.csv"
        write_heatmap_csv(grid, stat, os.path.join(out_dir, name))
        files.append(name)
    resolved = {"model": resolved_model, "v_grid": list(map(float, v_grid)),
                "delta_grid": list(map(float, d_grid)), "apex_factor": factor,
                "log10": log10,
                "failed_cells": [[i, j, msg] for i, j, msg in grid.failures]}
    _write_manifest(out_dir, "heatmap", resolved, {}, files, t0)


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ensemble": _cmd_ensemble,
    "steadyscan": _cmd_steadyscan,
    "g2": _cmd_g2,
    "darkstats": _cmd_darkstats,
    "heatmap": _cmd_heatmap,
}


def _add_model_flags(sp):
    sp.add_argument("--config", help="JSON config file (flags override it)")
    sp.add_argument("--model-file", help="JSON model definition file")
    sp.add_argument("--model", choices=[
        "relaxing", "driven", "two_atom_product", "two_atom_eigen"])
    for key in _MODEL_KEYS:
        sp.add_argument(f"--{key.replace('_', '-')}", type=float, dest=key)
    sp.add_argument(
        "--antisymmetric-resonance", action="store_true",
        help="pin delta_total to -lambda (the antisymmetric resonance)")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, help="master seed (recorded in manifest)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qtraj",
        description="Quantum-trajectory simulation toolkit "
                    "(all times in rescaled inverse-decay-rate units)",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="single stochastic trajectory")
    _add_model_flags(sp)
    sp.add_argument("--solver", choices=["first_order", "norm_threshold"])
    sp.add_argument("--t-final", type=float, dest="t_final")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--sample-every", type=int, dest="sample_every")
    sp.add_argument("--n-samples", type=int, dest="n_samples")
    sp.add_argument("--rtol", type=float)
    sp.add_argument("--atol", type=float)
    sp.add_argument("--max-step", type=float, dest="max_step")
    sp.add_argument("--initial", help="ground | excited | comma-separated amplitudes")

    sp = sub.add_parser("ensemble", help="trajectory ensemble averages")
    _add_model_flags(sp)
    sp.add_argument("--solver", choices=["first_order", "norm_threshold"])
    sp.add_argument("--t-final", type=float, dest="t_final")
    sp.add_argument("--dt", type=float)
    sp.add_argument("--sample-every", type=int, dest="sample_every")
    sp.add_argument("--n-traj", type=int, dest="n_traj")
    sp.add_argument("--rtol", type=float)
    sp.add_argument("--atol", type=float)
    sp.add_argument("--max-step", type=float, dest="max_step")
    sp.add_argument("--initial")

    sp = sub.add_parser("steadyscan", help="steady-state detuning scan")
    _add_model_flags(sp)
    sp.add_argument("--delta-min", type=float, dest="delta_min")
    sp.add_argument("--delta-max", type=float, dest="delta_max")
    sp.add_argument("--delta-steps", type=int, dest="delta_steps")
    sp.add_argument("--basis", choices=["eigen", "product"])

    sp = sub.add_parser("g2", help="second-order correlation estimation")
    _add_model_flags(sp)
    sp.add_argument("--stream", help="newline-delimited timestamp file")
    sp.add_argument("--t-final", type=float, dest="t_final")
    sp.add_argument("--dtd", type=float, help="detector bin width")
    sp.add_argument("--tau-max", type=float, dest="tau_max")
    sp.add_argument("--splitter-seed", type=int, dest="splitter_seed")
    sp.add_argument("--rtol", type=float)
    sp.add_argument("--atol", type=float)
    sp.add_argument("--max-step", type=float, dest="max_step")
    sp.add_argument("--initial")

    sp = sub.add_parser("darkstats", help="light/dark period statistics")
    _add_model_flags(sp)
    sp.add_argument("--apex-factor", type=float, dest="apex_factor")
    sp.add_argument("--t-final", type=float, dest="t_final",
                    help="also simulate and classify a photon stream")
    sp.add_argument("--rtol", type=float)
    sp.add_argument("--atol", type=float)
    sp.add_argument("--max-step", type=float, dest="max_step")

    sp = sub.add_parser("heatmap", help="period statistics over a (V, delta) grid")
    _add_model_flags(sp)
    sp.add_argument("--v-min", type=float, dest="v_min")
    sp.add_argument("--v-max", type=float, dest="v_max")
    sp.add_argument("--v-steps", type=int, dest="v_steps")
    sp.add_argument("--delta-min", type=float, dest="delta_min")
    sp.add_argument("--delta-max", type=float, dest="delta_max")
    sp.add_argument("--delta-steps", type=int, dest="delta_steps")
    sp.add_argument("--apex-factor", type=float, dest="apex_factor")
    sp.add_argument("--log10", action="store_true", default=None)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_thread_limit()
    t0 = time.time()
    try:
        cfg = _load_config(getattr(args, "config", None))
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        _COMMANDS[args.command](args, cfg, out_dir, t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QtrajError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
