import dataclasses
import json
import math

import numpy as np
import pytest

from choquard.discretization.radial import RadialField, build_radial_grid
from choquard.dynamics import TrajectoryRecord
from choquard.solvers import excited_state, ground_state
from choquard.verify import (Check, DiagnosticReport, check_bubble_expansions, check_conservation,
                             check_energy_landscape, check_inequalities, check_pohozaev_full, check_qualitative,
                             check_virial_identity, decay_fit, fit_constant, fit_exponent, full_report,
                             lebesgue_power_law, pohozaev_identity, radial_bound_ratio)


def with_profile(record, values):
    return dataclasses.replace(record, u=RadialField(record.grid, values))


# -- qualitative properties ------------------------------------------------------------------------


@pytest.mark.parametrize("which", ["ground", "excited"])
def test_qualitative_passes_on_solutions(half_mass, which):
    rep = check_qualitative(getattr(half_mass, which).record)
    assert rep.ok, rep.table()
    assert rep["decay_rate_vs_sqrt_minus_lambda"].status == "skip"


def test_decay_rate_close_to_multiplier(half_mass):
    slope, r2, kappa = decay_fit(half_mass.ground.record)
    assert r2 >= 0.99
    assert -slope / kappa == pytest.approx(1.0, abs=0.1)


def test_qualitative_flags_sign_flip(half_mass):
    rec = half_mass.ground.record
    rep = check_qualitative(with_profile(rec, -rec.u.values))
    assert rep["positivity"].status == "fail"


def test_qualitative_flags_bump(half_mass):
    rec = half_mass.ground.record
    g = rec.grid
    bumped = rec.u.values + 0.05 * rec.u.values[0] * np.exp(-((g.r - 5) / 0.5) ** 2)
    bumped[-1] = 0
    rep = check_qualitative(with_profile(rec, bumped))
    assert rep["monotone_nonincreasing"].status == "fail"
    assert rep["positivity"].status == "pass"


def test_qualitative_flags_oscillating_tail(half_mass):
    rec = half_mass.ground.record
    g = rec.grid
    wavy = rec.u.values * (1 + 0.5 * np.cos(g.r) * (g.r > g.R / 3))
    rep = check_qualitative(with_profile(rec, wavy))
    assert rep["decay_fit_r2"].status == "fail"


# -- Pohozaev identity -----------------------------------------------------------------------------


@pytest.mark.parametrize("which", ["ground", "excited"])
def test_pohozaev_identity_holds(half_mass, which):
    solved = getattr(half_mass, which)
    assert check_pohozaev_full(solved.record, solved.kernel).ok


def test_pohozaev_identity_detects_wrong_multiplier(half_mass):
    rec, kernel = half_mass.ground.record, half_mass.ground.kernel
    bad = dataclasses.replace(rec, lam=1.01 * rec.lam)
    lhs, rhs = pohozaev_identity(bad, kernel)
    assert lhs != pytest.approx(rhs, rel=1e-5)
    assert check_pohozaev_full(bad, kernel)["pohozaev_identity"].status == "fail"


# -- energy landscape ------------------------------------------------------------------------------


def test_landscape_passes(half_mass, consts):
    rep = check_energy_landscape(half_mass.ground.record, half_mass.excited.record, consts,
                                 half_mass.ground.record.params)
    assert rep.ok, rep.table()


def test_landscape_detects_swapped_records(half_mass, consts):
    rep = check_energy_landscape(half_mass.excited.record, half_mass.ground.record, consts,
                                 half_mass.ground.record.params)
    names = {c.name for c in rep.failed}
    assert {"ground_energy_negative", "excited_energy_positive", "excited_above_ground"} <= names


def test_landscape_detects_small_gap_and_ball(half_mass, consts):
    params = half_mass.ground.record.params
    rho_g = half_mass.ground.record.breakdown.grad_sq
    shrunk = dataclasses.replace(consts, S_alpha=0.5 * consts.S_alpha, rho0=0.5 * rho_g)
    rep = check_energy_landscape(half_mass.ground.record, half_mass.excited.record, shrunk, params)
    assert rep["excited_energy_below_gap"].status == "fail"
    assert rep["ground_inside_ball"].status == "fail"


# -- inequalities ----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def inequality_grid():
    from choquard.discretization.riesz import build_riesz_kernel
    g = build_radial_grid(3, 30.0, 512, kind="graded")
    return g, build_riesz_kernel(g, 2.0)


def test_inequalities_pass(inequality_grid, bubble_setup, consts, base_params):
    g, k = inequality_grid
    bg, bk = bubble_setup
    rep = check_inequalities(g, k, consts, base_params, bubble_grid=bg, bubble_kernel=bk)
    assert rep.ok, rep.table()
    asserted = {c.name for c in rep.checks if c.status == "pass"}
    assert asserted >= {"gn_strict_random", "gn_equality_witness", "hls_diagonal_random", "radial_pointwise_bound_t2",
                        "radial_pointwise_bound_t2star", "hartree_sobolev_lower_bound",
                        "hartree_sobolev_bubble_limit"}


def test_inequalities_detect_wrong_constants(inequality_grid, bubble_setup, consts, base_params):
    g, k = inequality_grid
    bg, bk = bubble_setup
    bad = dataclasses.replace(consts, C_Nq=0.9 * consts.C_Nq, C_alpha=0.2 * consts.C_alpha,
                              S_alpha=1.5 * consts.S_alpha)
    rep = check_inequalities(g, k, bad, base_params, bubble_grid=bg, bubble_kernel=bk)
    failed = {c.name for c in rep.failed}
    assert {"gn_strict_random", "hls_diagonal_random", "hartree_sobolev_lower_bound",
            "hartree_sobolev_bubble_limit"} <= failed


def test_inequalities_need_ten_samples(inequality_grid, consts, base_params):
    g, k = inequality_grid
    with pytest.raises(ValueError, match=">= 10"):
        check_inequalities(g, k, consts, base_params, n_samples=5)


def test_pointwise_bound_fails_for_shell():
    g = build_radial_grid(3, 10.0, 256)
    shell = np.exp(-((g.r - 2) / 0.05) ** 2)
    shell[-1] = 0
    assert radial_bound_ratio(g, shell, 2.0) > 1
    assert radial_bound_ratio(g, shell, 6.0) > 1
    ball = np.exp(-g.r**2)
    ball[-1] = 0
    assert radial_bound_ratio(g, ball, 2.0) <= 1


# -- bubble expansions -----------------------------------------------------------------------------


@pytest.mark.parametrize("N, t, expected", [
    (3, 2.0, (1.0, False, 2.0)),
    (3, 3.0, (1.5, True, 1.5)),
    (3, 4.0, (1.0, False, 2.0)),
    (3, 6.0, (0.0, False, 3.0)),
    (3, 2.5, (1.25, False, 1.75)),
])
def test_lebesgue_power_law(N, t, expected):
    assert lebesgue_power_law(N, t) == pytest.approx(expected)


def test_fit_exponent_synthetic():
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    beta, misfit = fit_exponent(eps, 2 * eps**1.25 + 3 * eps**1.75, 1.25, False, 1.75)
    assert beta == pytest.approx(1.25, abs=1e-6) and misfit < 1e-12
    beta, _ = fit_exponent(eps, 2 * eps**1.5 * np.abs(np.log(eps)) + 0.5 * eps**1.5, 1.5, True, 1.5)
    assert beta == pytest.approx(1.5, abs=1e-6)


def test_fit_constant_synthetic():
    eps = np.array([0.2, 0.1, 0.05])
    assert fit_constant(eps, 4 + 2 * eps + eps**2, [1, 2]) == pytest.approx(4.0, rel=1e-12)


def test_bubble_expansions_pass(bubble_setup, consts, base_params):
    grid, kernel = bubble_setup
    rep = check_bubble_expansions(grid, consts, base_params, kernel=kernel)
    assert rep.ok, rep.table()
    assert {c.name for c in rep.checks} >= {"bubble_gradient_constant", "bubble_hartree_constant",
                                             "bubble_mass_exponent", "bubble_local_Lq_exponent"}


def test_bubble_expansions_detect_wrong_sobolev_constant(bubble_setup, consts, base_params):
    grid, kernel = bubble_setup
    bad = dataclasses.replace(consts, S=1.05 * consts.S)
    rep = check_bubble_expansions(grid, bad, base_params, kernel=kernel)
    assert rep["bubble_gradient_constant"].status == "fail"


def test_bubble_expansions_need_three_eps(bubble_setup, consts, base_params):
    with pytest.raises(ValueError, match="three"):
        check_bubble_expansions(bubble_setup[0], consts, base_params, eps_list=(0.2, 0.1))


# -- dynamics checks -------------------------------------------------------------------------------


def test_conservation_check_flags_drift():
    traj = TrajectoryRecord(times=[0, 1, 2], energy=[1.0, 1.0 + 1e-3, 1.0], mass=[1.0, 1.0, 1.0],
                            max_step_mass_drift=1e-8)
    rep = check_conservation(traj)
    assert rep["energy_drift"].status == "fail"
    assert rep["mass_drift_per_step"].status == "fail"


def test_virial_check_on_exact_parabola():
    t = np.linspace(0, 1, 11)
    traj = TrajectoryRecord(times=list(t), virial=list(3 - 2 * t**2), pohozaev=[-0.5] * t.size)
    assert check_virial_identity(traj).ok
    wrong = TrajectoryRecord(times=list(t), virial=list(3 - 2 * t**2), pohozaev=[-0.6] * t.size)
    assert not check_virial_identity(wrong).ok


def test_virial_check_needs_uniform_samples():
    traj = TrajectoryRecord(times=[0, 0.1, 0.3, 0.4], virial=[1, 1, 1, 1], pohozaev=[-1] * 4)
    with pytest.raises(ValueError, match="uniformly"):
        check_virial_identity(traj)


# -- reports ---------------------------------------------------------------------------------------


def test_report_structure():
    rep = DiagnosticReport()
    rep.add(Check("a", "first", "pass", 1.0, 2.0))
    rep.add(Check("b", "first", "fail", 3.0, 2.0))
    rep.add(Check("c", "second", "skip", None, None, reason="reported only"))
    assert not rep.ok and [c.name for c in rep.failed] == ["b"]
    assert rep.summary() == {"first": False, "second": True}
    data = json.loads(rep.to_json())
    assert data["ok"] is False and len(data["checks"]) == 3
    table = rep.table()
    assert "FAIL" in table and "c: reported only" in table
    with pytest.raises(KeyError):
        rep["missing"]


def test_check_validation():
    with pytest.raises(ValueError, match="bad status"):
        Check("x", "y", "maybe", 1.0, 1.0)
    with pytest.raises(ValueError, match="needs a reason"):
        Check("x", "y", "skip", 1.0, 1.0)


def test_full_report(half_mass, consts):
    g, x = half_mass.ground, half_mass.excited
    rep = full_report(g.record, x.record, consts, g.record.params, g.kernel, x.kernel)
    assert rep.ok, rep.table()


@pytest.mark.slow
@pytest.mark.parametrize("frac", [0.25, 0.75])
def test_full_report_over_masses(frac, base_params, consts):
    params = base_params.with_mass(frac * consts.a0)
    g = ground_state(params, consts)
    x = excited_state(params, consts, g.record)
    rep = full_report(g.record, x.record, consts, params, g.kernel, x.kernel)
    assert rep.ok, rep.table()
    assert math.isfinite(x.record.energy) and x.record.energy > 0
