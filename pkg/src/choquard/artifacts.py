"""On-disk layout of solution records and simulation outputs.

A record directory holds ``profile.csv`` (r, u), ``fiber.csv`` (a scan of the
fiber map) and ``meta.json`` (parameters, grid layout, kernel cut-off,
multiplier and diagnostics).  Every file starts with a metadata header
carrying the config hash and package versions.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import scipy

from .discretization.radial import build_radial_grid
from .discretization.riesz import build_riesz_kernel
from .functionals import FiberMap, fiber_scan
from .model import ModelParams

FORMAT_VERSION = 1


class MissingArtifactError(FileNotFoundError):
    """A record or output needed by a later stage is absent."""


class CorruptArtifactError(ValueError):
    """A record file exists but does not match its own metadata."""


def package_version():
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:
        return "0+unknown"


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def metadata(config):
    return {"config_hash": config_hash(config), "format": FORMAT_VERSION, "package": package_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def write_json(path, payload, meta):
    with open(path, "w") as fh:
        json.dump({"meta": meta, **payload}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, columns, meta):
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17e}" for v in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return header, data


def save_record(record, kernel, directory, meta, diagnostics=None):
    """Write ``record`` into ``directory`` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    g = record.grid
    write_csv(d / "profile.csv", ["r", "u"], [g.r, record.u.values], meta)
    fm = FiberMap.from_integrals(record.breakdown, record.params)
    tau, psi = fiber_scan(fm)
    write_csv(d / "fiber.csv", ["tau", "psi"], [tau, psi], meta)
    payload = {
        "branch": record.branch,
        "params": record.params.to_dict(),
        "lambda": record.lam,
        "energy": record.breakdown.to_dict(record.lam),
        "fiber": record.fiber.to_dict(),
        "iterations": record.iterations,
        "residual": record.residual,
        "notes": list(record.notes),
        "grid": {"N": g.N, "R": g.R, "n": g.n, "order": g.order, "kind": g.kind,
                 "breaks": [float(b) for b in g.breaks]},
        "kernel": {"alpha": kernel.alpha, "k_max": kernel.k_max},
    }
    if diagnostics is not None:
        payload["diagnostics"] = diagnostics
    write_json(d / "meta.json", payload, meta)
    return d


def load_record(directory):
    """Rebuild ``(SolutionRecord, RieszKernel)`` from a record directory."""
    from .solvers.standing import _finalize

    d = Path(directory)
    missing = [f for f in ("profile.csv", "meta.json") if not (d / f).exists()]
    if missing:
        raise MissingArtifactError(f"{d}: missing {', '.join(missing)}")
    with open(d / "meta.json") as fh:
        meta = json.load(fh)
    gs = meta["grid"]
    grid = build_radial_grid(gs["N"], gs["R"], gs["n"], order=gs["order"], breaks=gs["breaks"])
    try:
        header, data = read_csv(d / "profile.csv")
    except ValueError as exc:
        raise CorruptArtifactError(f"{d / 'profile.csv'}: unreadable ({exc})") from None
    if header != ["r", "u"] or data.shape != (grid.size, 2):
        raise CorruptArtifactError(f"{d / 'profile.csv'}: malformed profile (shape {data.shape})")
    if not np.allclose(data[:, 0], grid.r, rtol=1e-12, atol=1e-14):
        raise CorruptArtifactError(f"{d / 'profile.csv'}: node radii do not match the stored grid")
    if not np.all(np.isfinite(data[:, 1])):
        raise CorruptArtifactError(f"{d / 'profile.csv'}: non-finite profile values")
    pd = meta["params"]
    params = ModelParams(pd["N"], pd["alpha"], pd["mu"], pd["a"], pd["q"])
    kernel = build_riesz_kernel(grid, meta["kernel"]["alpha"], k_max=meta["kernel"]["k_max"])
    rec = _finalize(grid, data[:, 1].copy(), float(meta["lambda"]), params, kernel, meta["branch"],
                    int(meta["iterations"]), [], list(meta.get("notes", [])))
    return rec, kernel


def save_trajectory(traj, outcome, directory, meta):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cols = traj.as_arrays()
    names = [k for k in traj.COLUMNS if cols[k].size == cols["times"].size]
    write_csv(d / "trajectory.csv", names, [cols[k] for k in names], meta)
    payload = {"outcome": outcome.to_dict(), "energy_drift": traj.energy_drift(), "mass_drift": traj.mass_drift(),
               "max_step_mass_drift": traj.max_step_mass_drift}
    write_json(d / "outcome.json", payload, meta)
    return d


def output_root(config):
    """Output directory: the environment variable CHOQUARD_OUTPUT_DIR overrides the config."""
    return Path(os.environ.get("CHOQUARD_OUTPUT_DIR", config.get("output_dir", "choquard_out")))


__all__ = ["save_record", "load_record", "save_trajectory", "write_csv", "read_csv", "write_json", "metadata",
           "config_hash", "output_root", "MissingArtifactError", "CorruptArtifactError"]
