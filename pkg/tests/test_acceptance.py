"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line with its measurements.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines interleaved with the test names.
"""
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from choquard.discretization.cartesian import CartesianGrid3
from choquard.discretization.radial import build_radial_grid
from choquard.discretization.riesz import build_riesz_kernel
from choquard.dynamics import (CartesianPropagator, DynamicsConfig, Monitors, RadialPropagator, run_simulation,
                               stability_experiment, strang_step)
from choquard.model import (ModelParams, classify_regime, compute_constants, f_max_closed_form, f_mu_a, gn_constant)
from choquard.solvers import SolverConfig, solve_ground, verify_solution
from choquard.solvers.pipeline import ground_state
from choquard.solvers.scalar import scalar_ground_state_mass, shoot_scalar_ground_state, strong_residual
from choquard.verify import (check_bubble_expansions, check_energy_landscape, check_pohozaev_full, check_qualitative,
                             check_virial_identity, default_bubble_grid, gn_ratio, random_radial_fields)

pytestmark = pytest.mark.filterwarnings("ignore::choquard.dynamics.DynamicsWarning")


def report(capsys, k, checks, seconds, budget):
    """Print the criterion line and assert every sub-check and the runtime budget."""
    checks = dict(checks)
    checks[f"runtime {seconds:.1f}s < {budget:g}s"] = seconds < budget
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    with capsys.disabled():
        detail = "; ".join(checks) if ok else "failed: " + "; ".join(failed)
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, failed


def newton_ball(r):
    with np.errstate(divide="ignore"):
        return np.where(r < 1, (3 - r**2) / 6, 1 / (3 * r))


def test_criterion_1_constants_pipeline(capsys, base_params):
    t0 = time.perf_counter()
    scalar_ground_state_mass.cache_clear()
    consts = compute_constants(base_params)
    root = abs(float(f_mu_a(base_params.with_mass(consts.a0), consts, consts.rho0)))
    worst_max, agree = 0.0, True
    for a in np.linspace(3 * consts.a0 / 50, 3 * consts.a0, 50):
        p = base_params.with_mass(a)
        rep = classify_regime(p, consts)
        # maximiser located numerically on a log grid then polished, compared with the closed form
        rho = np.geomspace(1e-6, 1e6, 4001)
        vals = f_mu_a(p, consts, rho)
        i = int(np.argmax(vals))
        res = minimize_scalar(lambda x: -float(f_mu_a(p, consts, math.exp(x))),
                              bounds=(math.log(rho[max(i - 1, 0)]), math.log(rho[min(i + 1, rho.size - 1)])),
                              method="bounded", options={"xatol": 1e-12})
        fmax = -res.fun
        worst_max = max(worst_max, abs(fmax - f_max_closed_form(p, consts)))
        expected = "Omega1" if fmax > 1e-9 else ("Omega3" if fmax < -1e-9 else "Omega2")
        agree &= rep.regime == expected
    seconds = time.perf_counter() - t0
    report(capsys, 1, {f"|f(a0, rho0)| = {root:.1e} <= 1e-10": root <= 1e-10,
                       f"max f vs closed form {worst_max:.1e} <= 1e-10": worst_max <= 1e-10,
                       "regime agrees with sign of max f on 50 masses": agree}, seconds, 1.0)


def test_criterion_2_riesz_oracle(capsys):
    t0 = time.perf_counter()
    g = build_radial_grid(3, 16.0, 1024)
    k = build_riesz_kernel(g, 2.0)
    v = k.apply(g.indicator(1.0))
    exact = newton_ball(g.r)
    rel = np.abs(v - exact) / exact
    inner, outer = float(np.max(rel[g.r < 1])), float(np.max(rel[g.r > 1]))
    rng = np.random.default_rng(1)
    asym = 0.0
    for _ in range(5):
        f = rng.normal(size=g.size) * np.exp(-g.r / 3)
        h = rng.normal(size=g.size) * np.exp(-g.r / 2)
        a, b = g.inner(k.apply(f), h), g.inner(f, k.apply(h))
        asym = max(asym, abs(a - b) / abs(a))
    seconds = time.perf_counter() - t0
    report(capsys, 2, {f"ball interior rel {inner:.1e} <= 1e-4": inner <= 1e-4,
                       f"ball exterior rel {outer:.1e} <= 1e-4": outer <= 1e-4,
                       f"self-adjointness {asym:.1e} <= 1e-10": asym <= 1e-10}, seconds, 10.0)


def test_criterion_3_shooting_and_gn(capsys, base_params, consts):
    t0 = time.perf_counter()
    Q, mass = shoot_scalar_ground_state(3, 3.0)
    resid = float(np.max(np.abs(strong_residual(Q.grid, Q.values, 3.0))))
    witness = abs(gn_ratio(Q.grid, Q.values, base_params, gn_constant(3, 3.0, mass)) - 1)
    g = build_radial_grid(3, 30.0, 512, kind="graded")
    fields = random_radial_fields(g, 10, np.random.default_rng(0))
    gn = max(gn_ratio(g, u, base_params, consts.C_Nq) for u in fields)
    seconds = time.perf_counter() - t0
    report(capsys, 3, {f"ODE residual {resid:.1e} <= 1e-6": resid <= 1e-6,
                       f"GN witness {witness:.1e} <= 1e-6": witness <= 1e-6,
                       f"random-field GN ratio max {gn:.6f} < 1": gn < 1 - 1e-6}, seconds, 5.0)


def test_criterion_4_bubble_expansions(capsys, base_params, consts):
    t0 = time.perf_counter()
    grid = default_bubble_grid(base_params.N)
    kernel = build_riesz_kernel(grid, base_params.alpha)
    rep = check_bubble_expansions(grid, consts, base_params, eps_list=(0.2, 0.1, 0.05), kernel=kernel)
    seconds = time.perf_counter() - t0
    checks = {f"{c.name} {c.measured:.2e} <= {c.threshold:g}": c.status == "pass" for c in rep.checks}
    report(capsys, 4, checks, seconds, 30.0)


def test_criterion_5_ground_state(capsys, half_mass, consts):
    rec, kernel = half_mass.ground.record, half_mass.ground.kernel
    b = rec.breakdown
    P_rel = abs(b.pohozaev) / b.grad_sq
    qual = check_qualitative(rec)
    poh = check_pohozaev_full(rec, kernel)["pohozaev_identity"]
    report(capsys, 5, {
        "converged": rec.converged,
        f"E = {rec.energy:.6g} < 0": rec.energy < 0,
        f"|grad u|^2 = {b.grad_sq:.4g} < rho0": b.grad_sq < consts.rho0,
        f"lambda = {rec.lam:.4g} < 0": rec.lam < 0,
        f"|P|/|grad u|^2 = {P_rel:.1e} <= 1e-6": P_rel <= 1e-6,
        f"|tau+ - 1| = {abs(rec.fiber.tau_plus - 1):.1e} <= 1e-4": abs(rec.fiber.tau_plus - 1) <= 1e-4,
        "positive": qual["positivity"].status == "pass",
        "monotone": qual["monotone_nonincreasing"].status == "pass",
        f"decay fit R^2 = {qual['decay_fit_r2'].measured:.5f} >= 0.99": qual["decay_fit_r2"].status == "pass",
        f"Pohozaev identity rel {poh.measured:.1e} <= 1e-5": poh.status == "pass",
    }, half_mass.ground_seconds, 60.0)


def test_criterion_6_excited_state(capsys, half_mass, threshold_mass, consts):
    checks = {}
    for label, pair in (("a0/2", half_mass), ("a0", threshold_mass)):
        g, x = pair.ground.record, pair.excited.record
        rel = verify_solution(x, pair.excited.kernel).P_rel
        land = check_energy_landscape(g, x, consts, x.params)
        checks.update({
            f"[{label}] converged": x.converged,
            f"[{label}] 0 < E- = {x.energy:.6g}": x.energy > 0,
            f"[{label}] E- < m_a + gap": land["excited_energy_below_gap"].status == "pass",
            f"[{label}] |P| rel {rel:.1e} <= 1e-6": rel <= 1e-6,
            f"[{label}] |tau- - 1| = {abs(x.fiber.tau_minus - 1):.1e} <= 1e-4": abs(x.fiber.tau_minus - 1) <= 1e-4,
            f"[{label}] lambda = {x.lam:.4g} < 0": x.lam < 0,
            f"[{label}] E- > E+": x.energy > g.energy,
        })
    checks["threshold mass in Omega2"] = classify_regime(threshold_mass.excited.record.params, consts).regime == "Omega2"
    seconds = sum(p.ground_seconds + p.excited_seconds for p in (half_mass, threshold_mass))
    report(capsys, 6, checks, seconds, 300.0)


def test_criterion_7_landscape(capsys, base_params, consts, half_mass):
    t0 = time.perf_counter()
    m = {}
    for frac in (0.2, 0.4, 0.8):
        m[frac] = ground_state(base_params.with_mass(frac * consts.a0), consts).record.energy
    checks = {f"m_a < 0 at {f} a0": m[f] < 0 for f in m}
    for a, half in ((0.4, 0.2), (0.8, 0.4)):
        margin = 2 * m[half] - m[a]
        checks[f"m at {a} a0 below 2 m at {half} a0 by {margin:.2e} >= 1e-6"] = margin >= 1e-6
    ref, kernel = half_mass.ground.record, half_mass.ground.kernel
    for factor in (0.99, 1.01):
        p = ref.params.with_mass(factor * ref.params.a)
        e = solve_ground(p, consts, kernel, SolverConfig(flow_tol=1e-3), seed=ref.u.values).energy
        rel = abs(e / ref.energy - 1)
        checks[f"m_a continuity at {factor} a: rel {rel:.3f} <= 0.05"] = rel <= 0.05
    seconds = time.perf_counter() - t0
    report(capsys, 7, checks, seconds, 300.0)


def test_criterion_8_dynamics_integrity(capsys, half_mass, gaussian_setup, base_params):
    t0 = time.perf_counter()
    rec, kernel = half_mass.ground.record, half_mass.ground.kernel
    traj, _ = stability_experiment(rec, 0.01, 5.0, DynamicsConfig(dt=0.005), kernel)
    mass_step, e_drift = traj.max_step_mass_drift, traj.energy_drift()

    # dt-halving on the nonlinear Gaussian; the linear flow is exact in time, so its error does not scale
    g, k = gaussian_setup
    psi0 = np.exp(-g.r**2 / 2)
    psi0[-1] = 0
    p = ModelParams(3, 2.0, 1.0, g.norm2(psi0), 3.0)
    prop = RadialPropagator(k, p, 0.01)
    finals = {}
    for dt in (0.02, 0.01, 0.005, 0.00125):
        psi = psi0.astype(complex)
        for _ in range(int(round(1 / dt))):
            psi = strang_step(psi, dt, prop)
        finals[dt] = psi
    errs = [math.sqrt(g.norm2(finals[dt] - finals[0.00125])) for dt in (0.02, 0.01, 0.005)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]

    box = CartesianGrid3(16.0, 128)
    bprop = CartesianPropagator(box, base_params, 0.25, nonlinear=False)
    r = box.radius()
    psi = np.exp(-r**2 / 2).astype(complex)
    for _ in range(4):
        psi = strang_step(psi, 0.25, bprop)
    z = 1 + 2j
    box_err = float(np.max(np.abs(psi - z ** -1.5 * np.exp(-r**2 / (2 * z)))))

    vtraj, _ = run_simulation(psi0, 1.0, 0.01, p, RadialPropagator(k, p, 0.01), Monitors(sample_every=1))
    vir = check_virial_identity(vtraj)["virial_identity"]
    seconds = time.perf_counter() - t0
    report(capsys, 8, {
        f"mass drift per step {mass_step:.1e} <= 1e-10": mass_step <= 1e-10,
        f"energy drift over T=5 {e_drift:.1e} <= 1e-6": e_drift <= 1e-6,
        "dt-halving ratios " + ", ".join(f"{x:.2f}" for x in ratios) + " in [3.5, 4.5]":
            all(3.5 <= x <= 4.5 for x in ratios),
        f"n=128 box linear Gaussian error {box_err:.1e} <= 1e-6": box_err <= 1e-6,
        f"virial Phi'' vs 8P rel {vir.measured:.1e} <= 0.01": vir.status == "pass",
    }, seconds, 300.0)


def test_criterion_9_stability(capsys, stability_runs):
    run, control = stability_runs[(0.01, 1.0)], stability_runs[(0.0, 1.0)]
    d, d0 = run.outcome.max_orbit_dist, control.outcome.max_orbit_dist
    report(capsys, 9, {
        f"delta=0.01 orbit distance {d:.2e} <= 0.1 over T={run.outcome.t_end:g}":
            d <= 0.1 and run.outcome.t_end >= 20.0 - 1e-9,
        f"delta=0 orbit distance {d0:.1e} <= 1e-3": d0 <= 1e-3,
    }, run.seconds + control.seconds, 600.0)


def test_criterion_10_instability(capsys, instability_runs):
    run, control = instability_runs[1.1], instability_runs[1.0]
    P = run.traj.as_arrays()["pohozaev"]
    report(capsys, 10, {
        f"s=1.1 verdict {run.outcome.verdict} at t={run.outcome.t_star}": run.outcome.verdict == "blowup",
        f"P <= -{-np.max(P):.3g} < 0 throughout": bool(np.max(P) < 0),
        f"s=1.0 verdict {control.outcome.verdict}": control.outcome.verdict != "blowup",
    }, run.seconds + control.seconds, 600.0)
