"""Command-line front end.

Subcommands: ``constants``, ``solve-ground``, ``solve-excited``, ``simulate``,
``verify`` and ``sweep``.  Settings come from a flat JSON config (``--config``)
and per-key command-line overrides; unknown keys are rejected.

Exit codes: 0 success, 1 failed diagnostic, 2 bad config, 3 unsupported
regime, 4 unexpected simulation verdict, 5 missing artifact.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import artifacts
from .artifacts import CorruptArtifactError, MissingArtifactError
from .dynamics import (DynamicsConfig, DynamicsRegimeError, check_dynamics_params, instability_experiment,
                       stability_experiment)
from .model import ModelParams, ParameterError, classify_regime, compute_constants, f_max_closed_form, f_mu_a
from .solvers.pipeline import excited_state, ground_state
from .solvers.standing import RegimeError, SolverConfig
from .verify import (DiagnosticReport, check_bubble_expansions, check_energy_landscape, check_inequalities,
                     check_pohozaev_full, check_qualitative, default_bubble_grid)

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG, EXIT_REGIME, EXIT_VERDICT, EXIT_MISSING = 0, 1, 2, 3, 4, 5

log = logging.getLogger("choquard")

# key -> (type, default, help)
CONFIG_KEYS = {
    "N": (int, 3, "spatial dimension"),
    "alpha": (float, 2.0, "Riesz order"),
    "mu": (float, 1.0, "local perturbation strength"),
    "q": (float, 3.0, "local exponent"),
    "a": (str, "0.5*a0", "mass: a number, 'a0' or 'k*a0'"),
    "n_radial": (int, 1024, "radial grid nodes"),
    "solver_dt": (float, SolverConfig.dt, "gradient-flow step"),
    "grad_tol": (float, SolverConfig.grad_tol, "projected-gradient tolerance"),
    "max_iter": (int, SolverConfig.max_iter, "gradient-flow iteration cap"),
    "seed_kind": (str, SolverConfig.seed_kind, "excited seed: bubble_superposition | gaussian"),
    "bubble_eps": (float, SolverConfig.bubble_eps, "bubble width of the excited seed"),
    "bubble_t": (float, SolverConfig.bubble_t, "bubble weight of the excited seed"),
    "T": (float, DynamicsConfig.T, "stability horizon"),
    "dt": (float, DynamicsConfig.dt, "stability time step"),
    "delta": (float, DynamicsConfig.delta, "stability perturbation size"),
    "scale_s": (float, DynamicsConfig.scale_s, "instability dilation factor s"),
    "instability_T": (float, DynamicsConfig.instability_T, "instability horizon"),
    "instability_dt": (float, DynamicsConfig.instability_dt, "initial instability time step"),
    "backend": (str, DynamicsConfig.backend, "dynamics backend: radial | cartesian"),
    "box_L": (float, DynamicsConfig.box_L, "box half-width"),
    "box_n": (int, DynamicsConfig.box_n, "box points per axis"),
    "n_samples": (int, 10, "random fields per inequality check"),
    "seed": (int, 0, "random seed"),
    "sweep_fractions": (list, [0.25, 0.5, 0.75, 1.0], "sweep masses as fractions of a0"),
    "jobs": (int, 1, "worker processes for sweep"),
    "output_dir": (str, "choquard_out", "output root (env CHOQUARD_OUTPUT_DIR overrides)"),
    "format": (str, "json", "summary format: json | csv"),
}

VERIFY_GROUPS = ("qualitative", "landscape", "pohozaev", "inequalities", "bubbles")


class ConfigError(ValueError):
    pass


def _coerce(key, value):
    typ = CONFIG_KEYS[key][0]
    if typ is list:
        if isinstance(value, str):
            value = [float(v) for v in value.split(",") if v.strip()]
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list")
        return [float(v) for v in value]
    if typ is int and isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{key}: expected an integer, got {value}")
    try:
        return typ(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ.__name__}") from None


def load_config(path=None, overrides=None):
    """Defaults, then the JSON file, then command-line overrides."""
    cfg = {k: v[1] for k, v in CONFIG_KEYS.items()}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for k, v in data.items():
            if k not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {k!r}")
            cfg[k] = _coerce(k, v)
    for k, v in (overrides or {}).items():
        if v is not None:
            cfg[k] = _coerce(k, v)
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError(f"format: expected json or csv, got {cfg['format']!r}")
    return cfg


_A_PATTERN = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?a0\s*$")


def resolve_mass(value, a0):
    """'a0' -> a0, 'k*a0' -> k a0, otherwise a float."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _A_PATTERN.match(str(value))
    if m:
        return (float(m.group(1)) if m.group(1) else 1.0) * a0
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"a: cannot parse {value!r}") from None


def build_params(cfg):
    """(ModelParams at the configured mass, SharpConstants)."""
    try:
        base = ModelParams(cfg["N"], cfg["alpha"], cfg["mu"], 1.0, cfg["q"])
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    consts = compute_constants(base)
    a = resolve_mass(cfg["a"], consts.a0)
    try:
        return base.with_mass(a), consts
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None


def solver_config(cfg):
    return SolverConfig(dt=cfg["solver_dt"], grad_tol=cfg["grad_tol"], max_iter=cfg["max_iter"],
                        seed_kind=cfg["seed_kind"], bubble_eps=cfg["bubble_eps"], bubble_t=cfg["bubble_t"])


def dynamics_config(cfg):
    return DynamicsConfig(T=cfg["T"], dt=cfg["dt"], delta=cfg["delta"], scale_s=cfg["scale_s"],
                          instability_T=cfg["instability_T"], instability_dt=cfg["instability_dt"],
                          backend=cfg["backend"], box_L=cfg["box_L"], box_n=cfg["box_n"])


# -- subcommands ----------------------------------------------------------------------


def cmd_constants(cfg, args):
    params, consts = build_params(cfg)
    report = classify_regime(params, consts)
    at_a0 = params.with_mass(consts.a0)
    root_residual = float(f_mu_a(at_a0, consts, consts.rho0))
    fmax_gap = abs(float(f_mu_a(params, consts, report.rho_max)) - f_max_closed_form(params, consts))
    out = artifacts.output_root(cfg)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"params": params.to_dict(), "constants": consts.to_dict(), "regime": report.to_dict(),
               "energy_gap_bound": consts.energy_gap_bound(params),
               "self_checks": {"f_at_a0_rho0": root_residual, "fmax_closed_form_gap": fmax_gap}}
    artifacts.write_json(out / "constants.json", payload, artifacts.metadata(cfg))
    print(consts.to_json())
    print(f"regime: {report.regime} (mu a^{{q(1-gamma_q)/2}} = {report.lhs:.10g}, threshold {report.rhs:.10g})")
    print(f"f(a0, rho0) = {root_residual:.3e}")
    if report.regime == "Omega3":
        warnings.warn("mass beyond the threshold: no existence theory in scope", RuntimeWarning, stacklevel=1)
        print("warning: no existence theory in scope for this mass", file=sys.stderr)
    ok = abs(root_residual) <= 1e-10 and fmax_gap <= 1e-10
    return EXIT_OK if ok else EXIT_DIAGNOSTIC


def _record_diagnostics(rec, kernel):
    rep = check_qualitative(rec).extend(check_pohozaev_full(rec, kernel))
    return rep


def _solve_and_save(cfg, branch):
    params, consts = build_params(cfg)
    out = artifacts.output_root(cfg)
    meta = artifacts.metadata(cfg)
    scfg = solver_config(cfg)
    if branch == "ground":
        solved = ground_state(params, consts, scfg, n=cfg["n_radial"])
    else:
        gdir = out / "ground"
        if (gdir / "meta.json").exists():
            ground, _ = artifacts.load_record(gdir)
            if abs(ground.params.a - params.a) > 1e-12 * params.a:
                raise ConfigError(f"{gdir} holds a ground state at a={ground.params.a}, config has a={params.a}")
        else:
            gsolved = ground_state(params, consts, scfg, n=cfg["n_radial"])
            ground = gsolved.record
            artifacts.save_record(ground, gsolved.kernel, gdir, meta,
                                  _record_diagnostics(ground, gsolved.kernel).to_dict())
        solved = excited_state(params, consts, ground, scfg, n=cfg["n_radial"])
    rec, kernel = solved.record, solved.kernel
    rep = _record_diagnostics(rec, kernel)
    if branch == "excited":
        rep.extend(check_energy_landscape(ground, rec, consts, params))
    artifacts.save_record(rec, kernel, out / branch, meta, rep.to_dict())
    print(f"{branch}: E = {rec.energy:.12g}, lambda = {rec.lam:.12g}, ||grad u||^2 = {rec.breakdown.grad_sq:.10g}")
    print(rep.table())
    return EXIT_OK if rep.ok else EXIT_DIAGNOSTIC


def cmd_solve_ground(cfg, args):
    return _solve_and_save(cfg, "ground")


def cmd_solve_excited(cfg, args):
    return _solve_and_save(cfg, "excited")


def cmd_simulate(cfg, args):
    try:
        probe = ModelParams(cfg["N"], cfg["alpha"], cfg["mu"], 1.0, cfg["q"])
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    if not probe.dynamics_admissible:
        check_dynamics_params(probe)
    out = artifacts.output_root(cfg)
    branch = "ground" if args.experiment == "stability" else "excited"
    rec, kernel = artifacts.load_record(out / branch)
    dcfg = dynamics_config(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        if args.experiment == "stability":
            traj, outcome = stability_experiment(rec, dcfg.delta, dcfg.T, dcfg, kernel)
            expected = "stable"
        else:
            traj, outcome = instability_experiment(rec, dcfg.scale_s, dcfg.instability_T, dcfg, kernel)
            expected = "blowup"
    artifacts.save_trajectory(traj, outcome, out / f"sim_{args.experiment}", artifacts.metadata(cfg))
    print(json.dumps(outcome.to_dict(), indent=2))
    return EXIT_OK if outcome.verdict == expected else EXIT_VERDICT


def cmd_verify(cfg, args):
    out = artifacts.output_root(cfg)
    groups = [args.only] if args.only else list(VERIFY_GROUPS)
    need = set()
    if {"qualitative", "pohozaev"} & set(groups):
        need |= {"ground", "excited"}
    if "landscape" in groups:
        need |= {"ground", "excited"}
    missing = [b for b in sorted(need) if not (out / b / "meta.json").exists()]
    if missing:
        hint = ", ".join(f"solve-{b}" for b in missing)
        raise MissingArtifactError(f"missing records {missing} under {out}; run {hint} first")
    recs = {b: artifacts.load_record(out / b) for b in sorted(need)}
    params, consts = build_params(cfg)
    rep = DiagnosticReport()
    for b, (rec, kernel) in recs.items():
        if "qualitative" in groups:
            sub = check_qualitative(rec)
            for c in sub.checks:
                c.name = f"{b}.{c.name}"
            rep.extend(sub)
        if "pohozaev" in groups:
            sub = check_pohozaev_full(rec, kernel)
            for c in sub.checks:
                c.name = f"{b}.{c.name}"
            rep.extend(sub)
    if "landscape" in groups:
        rep.extend(check_energy_landscape(recs["ground"][0], recs["excited"][0], consts, recs["ground"][0].params))
    if {"inequalities", "bubbles"} & set(groups):
        from .discretization.riesz import build_riesz_kernel
        bgrid = default_bubble_grid(params.N)
        bkernel = build_riesz_kernel(bgrid, params.alpha)
        if "inequalities" in groups:
            if "excited" in recs:
                grid, kernel = recs["excited"][0].grid, recs["excited"][1]
            else:
                from .solvers.standing import excited_grid
                grid = excited_grid(params)
                kernel = build_riesz_kernel(grid, params.alpha)
            rep.extend(check_inequalities(grid, kernel, consts, params, n_samples=cfg["n_samples"],
                                          seed=cfg["seed"], bubble_grid=bgrid, bubble_kernel=bkernel))
        if "bubbles" in groups:
            rep.extend(check_bubble_expansions(bgrid, consts, params, kernel=bkernel))
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_json(out / "verify.json", rep.to_dict(), artifacts.metadata(cfg))
    print(rep.table())
    return EXIT_OK if rep.ok else EXIT_DIAGNOSTIC


def _sweep_job(item):
    cfg, frac = item
    params, consts = build_params({**cfg, "a": f"{frac!r}*a0"})
    scfg = solver_config(cfg)
    g = ground_state(params, consts, scfg, n=cfg["n_radial"])
    x = excited_state(params, consts, g.record, scfg, n=cfg["n_radial"])
    rep = check_energy_landscape(g.record, x.record, consts, params)
    return [frac, params.a, g.record.energy, g.record.lam, x.record.energy, x.record.lam,
            g.record.breakdown.grad_sq, x.record.breakdown.grad_sq, float(rep.ok)]


def cmd_sweep(cfg, args):
    fracs = cfg["sweep_fractions"]
    items = [(cfg, f) for f in fracs]
    if cfg["jobs"] > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            rows = list(pool.map(_sweep_job, items))
    else:
        rows = [_sweep_job(it) for it in items]
    out = artifacts.output_root(cfg)
    out.mkdir(parents=True, exist_ok=True)
    header = ["a_over_a0", "a", "ground_energy", "ground_lambda", "excited_energy", "excited_lambda",
              "ground_grad_sq", "excited_grad_sq", "landscape_ok"]
    artifacts.write_csv(out / "sweep.csv", header, list(np.array(rows).T), artifacts.metadata(cfg))
    for r in rows:
        print(", ".join(f"{v:.10g}" for v in r))
    return EXIT_OK if all(r[-1] == 1.0 for r in rows) else EXIT_DIAGNOSTIC


COMMANDS = {"constants": cmd_constants, "solve-ground": cmd_solve_ground, "solve-excited": cmd_solve_excited,
            "simulate": cmd_simulate, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser():
    keys = "\n".join(f"  {k:<16} {v[2]} (default {v[1]!r})" for k, v in CONFIG_KEYS.items())
    parser = argparse.ArgumentParser(
        prog="choquard", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Normalized standing waves and dynamics of the critical Choquard equation "
                    "with a local perturbation.",
        epilog=f"config keys (flat JSON object):\n{keys}\n\nexit codes: 0 ok, 1 diagnostic failure, "
               "2 config error, 3 unsupported regime, 4 unexpected verdict, 5 missing artifact")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat JSON config file")
        p.add_argument("--N", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--q", type=float)
        p.add_argument("--a", help="mass: number, 'a0' or 'k*a0'")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--n-radial", dest="n_radial", type=int)
        if name == "simulate":
            p.add_argument("--experiment", choices=("stability", "instability"), required=True)
            p.add_argument("--T", type=float)
            p.add_argument("--dt", type=float)
            p.add_argument("--delta", type=float)
            p.add_argument("--scale-s", dest="scale_s", type=float)
            p.add_argument("--backend", choices=("radial", "cartesian"))
            p.add_argument("--box-L", dest="box_L", type=float)
            p.add_argument("--box-n", dest="box_n", type=int)
        if name == "verify":
            p.add_argument("--only", choices=VERIFY_GROUPS)
        if name == "sweep":
            p.add_argument("--jobs", type=int)
            p.add_argument("--fractions", dest="sweep_fractions", help="comma-separated fractions of a0")
    return parser


_NON_CONFIG = {"command", "config", "verbose", "experiment", "only"}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RegimeError, DynamicsRegimeError) as exc:
        print(f"regime unsupported: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except CorruptArtifactError as exc:
        print(f"corrupt artifact: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
