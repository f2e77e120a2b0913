"""Experiment harness: configuration, presets, solver dispatch, CSV output.

Configuration is a flat key = value text file; every key can be overridden
on the command line. The ``paper-1d-reflecting-drift`` preset reproduces the
reference comparison: a [0, 1] m reflecting box, 101 cells, point source at
x0 = 0.98 m with plasma-drawn initial velocities, nu_p = 100 m/s,
R_cx = sigma_p2 = 1e7, 1e6 particles to t_final = 0.01 s, hybrid time steps
swept over {1e-6, 1e-5, 1e-4, 1e-3} s.

Outputs:
  density.csv   x,ref,fluid,kd_old_<dt>,...,kd_new_<dt>,...  (one row per
                cell center; kd_old = hybrid with kinetic fallback, kd_new =
                hybrid with wall-aware diffusive steps)
  summary.csv   dt,runtime_old,runtime_new,error_fluid,error_old,error_new

Exit codes: 0 success, 2 configuration error, 3 numerical/solver error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .driver import SourceSpec, run_solver
from .errors import DomainError, NumericalError, ParameterError, \
    UnsupportedConfigError
from .model import Background, BoundarySpec, StepConfig
from .tally import relative_error

__all__ = ["main", "run_experiment", "emit_csv", "parse_config_file",
           "PRESETS"]

_BASE = {
    "x_min": 0.0, "x_max": 1.0, "n_cells": 101,
    "nu_p": 100.0, "sigma_p2": 1.0e7, "r_cx": 1.0e7,
    "x0": 0.98, "v0": "plasma",
    "boundary_left": "reflecting", "boundary_right": "reflecting",
    "t_final": 0.01, "dt": "1e-06,1e-05,0.0001,0.001",
    "n_particles": 1_000_000, "seed": 12345,
    "solver": "all", "sampler": "efficient",
    "boundary_sigma_threshold": 2.0,
    "out_dir": ".", "threads": None, "ref_from": None,
}

PRESETS = {
    # the reference comparison at full scale
    "paper-1d-reflecting-drift": {},
    # same physics at workstation scale
    "desk": {"n_particles": 100_000},
    # schema/plumbing check that finishes in seconds
    "smoke": {"n_particles": 10_000, "t_final": 1e-3, "dt": "1e-05,0.0001"},
}

_FLOAT_KEYS = ("x_min", "x_max", "nu_p", "sigma_p2", "r_cx", "x0", "t_final",
               "boundary_sigma_threshold")
_INT_KEYS = ("n_cells", "n_particles", "seed", "threads")


def parse_config_file(path):
    """Flat key = value file; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{ln}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _BASE:
            raise ParameterError(f"{path}:{ln}: unknown key {key!r}")
        out[key] = val
    return out


def _coerce(opts):
    cfg = dict(opts)
    for k in _FLOAT_KEYS:
        if cfg.get(k) is not None:
            cfg[k] = float(cfg[k])
    for k in _INT_KEYS:
        if cfg.get(k) is not None:
            cfg[k] = int(float(cfg[k]))
    if isinstance(cfg["dt"], str):
        cfg["dt"] = [float(s) for s in cfg["dt"].split(",") if s.strip()]
    if isinstance(cfg.get("v0"), str) and cfg["v0"] != "plasma":
        cfg["v0"] = float(cfg["v0"])
    return cfg


def _fmt(v):
    """Positional decimal, shortest round-trip representation."""
    return np.format_float_positional(float(v), unique=True, trim="0")


def emit_csv(centers, density_cols, summary_rows, out_dir,
             density_name="density.csv", summary_name="summary.csv"):
    """Write the density table and the per-dt summary table.

    density_cols: ordered {column name: per-cell array}; all arrays must
    match the grid. summary_rows: list of dicts with keys dt, runtime_old,
    runtime_new, error_fluid, error_old, error_new (missing -> nan).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(centers)
    for name, col in density_cols.items():
        if len(col) != n:
            raise ParameterError(f"column {name!r} does not match the grid")
    dpath = out / density_name
    with open(dpath, "w", newline="") as fh:
        fh.write(",".join(["x", *density_cols.keys()]) + "\n")
        for i in range(n):
            row = [_fmt(centers[i])] + [_fmt(c[i]) for c in density_cols.values()]
            fh.write(",".join(row) + "\n")
    spath = out / summary_name
    fields = ["dt", "runtime_old", "runtime_new", "error_fluid", "error_old",
              "error_new"]
    with open(spath, "w", newline="") as fh:
        fh.write(",".join(fields) + "\n")
        for row in summary_rows:
            cells = [str(float(row["dt"]))]
            cells += [_fmt(row.get(k, float("nan"))) for k in fields[1:]]
            fh.write(",".join(cells) + "\n")
    return dpath, spath


def _load_ref(path, centers):
    data = np.genfromtxt(path, delimiter=",", names=True)
    if "ref" not in (data.dtype.names or ()):
        raise ParameterError(f"{path} has no 'ref' column")
    if data["x"].shape != centers.shape or not np.allclose(
            data["x"], centers, rtol=0, atol=1e-12):
        raise ParameterError(f"{path} grid does not match this configuration")
    return np.asarray(data["ref"], dtype=float)


def run_experiment(opts):
    """Run the configured solver(s) and write CSV outputs.

    Returns the exit code (0 ok, 2 config error, 3 numerical error).
    """
    try:
        cfg = _coerce({**_BASE, **opts})
        bg = Background.uniform(cfg["x_min"], cfg["x_max"], cfg["n_cells"],
                                cfg["nu_p"], cfg["sigma_p2"], cfg["r_cx"])
        bounds = []
        for side, key in (("left", "boundary_left"), ("right", "boundary_right")):
            kind = cfg[key]
            if kind in (None, "", "none"):
                continue
            L = cfg["x_min"] if side == "left" else cfg["x_max"]
            bounds.append(BoundarySpec(side=side, L=L, kind=kind))
        src = SourceSpec(x0=cfg["x0"], v0=cfg["v0"])
        threads = cfg["threads"]
        if threads is None:
            threads = int(os.environ.get("KDMC_THREADS", os.cpu_count() or 1))
        dts = sorted(cfg["dt"])
        solver = cfg["solver"]
        want = ("kinetic", "fluid", "kdmc_kin", "kdmc_fluid") \
            if solver == "all" else (solver,)
        for s in want:
            if s not in ("kinetic", "fluid", "kdmc_kin", "kdmc_fluid"):
                raise ParameterError(f"unknown solver {s!r}")

        cfgs = {dt: StepConfig(dt=dt, t_final=cfg["t_final"],
                               n_particles=cfg["n_particles"],
                               seed=cfg["seed"], sampler=cfg["sampler"],
                               boundary_sigma_threshold=cfg[
                                   "boundary_sigma_threshold"])
                for dt in dts}
    except (ParameterError, DomainError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    centers = bg.cell_centers()
    cols = {}
    runtimes = {}
    fallback = {}
    try:
        ref = None
        if cfg["ref_from"]:
            ref = _load_ref(cfg["ref_from"], centers)
            cols["ref"] = ref
        elif "kinetic" in want:
            tally, m = run_solver("kinetic", bg, bounds, cfgs[dts[0]], src,
                                  threads=threads, run_tag=0)
            ref = tally.density()
            cols["ref"] = ref
            runtimes["kinetic"] = m.runtime_s
            print(f"kinetic: {m.runtime_s:.2f}s, {m.collisions} collisions")
        if "fluid" in want:
            tally, m = run_solver("fluid", bg, bounds, cfgs[dts[0]], src,
                                  threads=threads, run_tag=1)
            cols["fluid"] = tally.density()
            runtimes["fluid"] = m.runtime_s
            print(f"fluid: {m.runtime_s:.2f}s")
        for j, dt in enumerate(dts):
            if "kdmc_kin" in want:
                tally, m = run_solver("kdmc_kin", bg, bounds, cfgs[dt], src,
                                      threads=threads, run_tag=2 + 2 * j)
                cols[f"kd_old_{float(dt)}"] = tally.density()
                runtimes[("old", dt)] = m.runtime_s
                fallback[dt] = m.fallback_fraction
                print(f"kdmc_kin dt={dt}: {m.runtime_s:.2f}s, "
                      f"fallback fraction {m.fallback_fraction:.3f}")
            if "kdmc_fluid" in want:
                tally, m = run_solver("kdmc_fluid", bg, bounds, cfgs[dt],
                                      src, threads=threads, run_tag=3 + 2 * j)
                cols[f"kd_new_{float(dt)}"] = tally.density()
                runtimes[("new", dt)] = m.runtime_s
                note = (f", {m.far_wall_warnings} steps with diffusion "
                        f"length within 1/4 of the far wall"
                        if m.far_wall_warnings else "")
                print(f"kdmc_fluid dt={dt}: {m.runtime_s:.2f}s, "
                      f"{m.crossings} wall crossings{note}")
    except (NumericalError, UnsupportedConfigError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3

    # column order: x, ref, fluid, kd_old_*, kd_new_* (dt ascending)
    ordered = {}
    for name in ("ref", "fluid"):
        if name in cols:
            ordered[name] = cols[name]
    for prefix in ("kd_old", "kd_new"):
        for dt in dts:
            key = f"{prefix}_{float(dt)}"
            if key in cols:
                ordered[key] = cols[key]

    summary = []
    if ref is not None:
        err_fluid = relative_error(cols["fluid"], ref) if "fluid" in cols else None
        for dt in dts:
            row = {"dt": dt}
            if err_fluid is not None:
                row["error_fluid"] = err_fluid
            if ("old", dt) in runtimes:
                row["runtime_old"] = runtimes[("old", dt)]
                row["error_old"] = relative_error(cols[f"kd_old_{float(dt)}"], ref)
            if ("new", dt) in runtimes:
                row["runtime_new"] = runtimes[("new", dt)]
                row["error_new"] = relative_error(cols[f"kd_new_{float(dt)}"], ref)
            summary.append(row)

    dpath, spath = emit_csv(centers, ordered, summary, cfg["out_dir"])
    print(f"wrote {dpath} and {spath}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="kdmc",
        description="1D neutral-transport comparison: kinetic reference, "
                    "fluid model, and kinetic-diffusion hybrids with "
                    "kinetic-fallback or wall-aware diffusive steps.")
    ap.add_argument("config", nargs="?", help="key = value configuration file")
    ap.add_argument("--preset", choices=sorted(PRESETS),
                    help="named experiment preset")
    ap.add_argument("--solver",
                    choices=["kinetic", "fluid", "kdmc_kin", "kdmc_fluid", "all"])
    ap.add_argument("--dt", help="comma-separated hybrid step sizes (s)")
    ap.add_argument("--particles", help="number of particles")
    ap.add_argument("--seed", help="base RNG seed")
    ap.add_argument("--sampler", choices=["basic", "efficient"])
    ap.add_argument("--out-dir", help="output directory for CSV files")
    ap.add_argument("--threads", help="worker processes (default: all cores, "
                                      "or KDMC_THREADS)")
    ap.add_argument("--ref-from",
                    help="reuse the 'ref' column of a previous density CSV")
    ns = ap.parse_args(argv)

    opts = {}
    if ns.preset:
        opts.update(PRESETS[ns.preset])
    if ns.config:
        try:
            opts.update(parse_config_file(ns.config))
        except (OSError, ParameterError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
    for key, val in (("solver", ns.solver), ("dt", ns.dt),
                     ("n_particles", ns.particles), ("seed", ns.seed),
                     ("sampler", ns.sampler), ("out_dir", ns.out_dir),
                     ("threads", ns.threads), ("ref_from", ns.ref_from)):
        if val is not None:
            opts[key] = val
    return run_experiment(opts)


if __name__ == "__main__":
    sys.exit(main())
