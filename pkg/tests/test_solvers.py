import math

import numpy as np
import pytest

from choquard.artifacts import load_record, metadata, save_record
from choquard.discretization.radial import build_radial_grid
from choquard.discretization.riesz import build_riesz_kernel
from choquard.model import ParameterError, gn_constant
from choquard.solvers import (RegimeError, SolverConfig, excited_state, ground_state, make_bubble, solve_excited,
                              solve_ground, verify_solution)
from choquard.solvers.bubble import ResolutionError, cutoff
from choquard.solvers.scalar import (ShootingError, shoot_initial_value, shoot_scalar_ground_state,
                                     strong_residual)
from choquard.solvers.standing import newton_polish, refine_record
from choquard.verify import gn_ratio


# -- scalar shooting -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def scalar_state():
    return shoot_scalar_ground_state(3, 3.0)


def test_shooting_profile_solves_ode(scalar_state):
    Q, _ = scalar_state
    assert np.max(np.abs(strong_residual(Q.grid, Q.values, 3.0))) <= 1e-6


def test_shooting_profile_positive_and_decreasing(scalar_state):
    Q, _ = scalar_state
    v = Q.values[:-1]
    assert np.all(v > 0)
    assert np.all(np.diff(v) <= 1e-14 * v[0])


def test_shooting_integral_identities(scalar_state):
    # Nehari: T + M = L_q; Pohozaev: (N-2)/2 T + N/2 M = N/q L_q
    Q, mass = scalar_state
    g, q, N = Q.grid, 3.0, 3
    T, Lq = g.dirichlet(Q.values), g.integrate(Q.values**q)
    assert T + mass == pytest.approx(Lq, rel=1e-9)
    assert (N - 2) / 2 * T + N / 2 * mass == pytest.approx(N / q * Lq, rel=1e-9)


def test_gn_equality_witness(scalar_state, base_params):
    Q, mass = scalar_state
    ratio = gn_ratio(Q.grid, Q.values, base_params, gn_constant(3, 3.0, mass))
    assert abs(ratio - 1) <= 1e-6


def test_shooting_mass_grid_independent(scalar_state):
    _, mass = scalar_state
    finer = build_radial_grid(3, 50.0, 2048)
    assert shoot_scalar_ground_state(3, 3.0, grid=finer)[1] == pytest.approx(mass, rel=1e-9)


def test_shooting_bracket_error():
    with pytest.raises(ShootingError, match="bracket"):
        shoot_initial_value(3, 3.0, lo=1.0, hi=2.0)


def test_shooting_rejects_supercritical_power():
    with pytest.raises(ParameterError):
        shoot_scalar_ground_state(3, 6.0)


# -- bubbles ---------------------------------------------------------------------------------------


def test_cutoff_shape():
    r = np.linspace(0, 3, 3001)
    c = cutoff(r)
    assert np.all(c[r <= 1] == 1) and np.all(c[r >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    # C^1 at both joins
    d = np.gradient(c, r)
    assert abs(d[1000]) < 1e-6 and abs(d[2000]) < 1e-6


def test_bubble_profile(bubble_setup):
    grid, _ = bubble_setup
    b = make_bubble(0.1, grid)
    r = grid.r
    inner = r <= 1
    expected = (3 * 0.01) ** 0.25 / np.sqrt(0.01 + r[inner] ** 2)
    assert np.allclose(b.field.values[inner], expected, rtol=1e-14)
    assert np.all(b.field.values[r >= 2] == 0)


@pytest.mark.parametrize("eps", [0.0, 0.6])
def test_bubble_rejects_eps(bubble_setup, eps):
    with pytest.raises(ValueError):
        make_bubble(eps, bubble_setup[0])


def test_bubble_resolution_errors():
    with pytest.raises(ResolutionError, match="r >= 2"):
        make_bubble(0.1, build_radial_grid(3, 1.5, 64))
    with pytest.raises(ResolutionError, match="nodes below"):
        make_bubble(0.01, build_radial_grid(3, 30.0, 64))


# -- ground and excited states --------------------------------------------------------------------


def test_ground_state_properties(half_mass, consts):
    rec = half_mass.ground.record
    assert rec.branch == "ground" and rec.converged
    assert rec.energy < 0 and rec.lam < 0
    assert rec.breakdown.grad_sq < consts.rho0
    assert rec.breakdown.mass == pytest.approx(rec.params.a, rel=1e-12)
    assert abs(rec.fiber.tau_plus - 1) <= 1e-4
    assert abs(rec.breakdown.pohozaev) / rec.breakdown.grad_sq <= 1e-6


def test_ground_flow_energy_monotone(half_mass, consts):
    ref, kernel = half_mass.ground.record, half_mass.ground.kernel
    seed = np.exp(-(kernel.grid.r / 10) ** 2)
    seed[-1] = 0
    hist = np.asarray(solve_ground(ref.params, consts, kernel, seed=seed).history)
    assert hist.size > 10
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[1:]))


def test_excited_state_properties(half_mass, consts):
    g, x = half_mass.ground.record, half_mass.excited.record
    assert x.branch == "excited"
    assert 0 < x.energy < g.energy + consts.energy_gap_bound(x.params)
    assert x.lam < 0
    assert abs(x.fiber.tau_minus - 1) <= 1e-4
    assert x.fiber.psi2_minus < 0
    assert x.breakdown.mass == pytest.approx(x.params.a, rel=1e-12)


@pytest.mark.parametrize("which", ["ground", "excited"])
def test_verify_solution_report(half_mass, which):
    solved = getattr(half_mass, which)
    rep = verify_solution(solved.record, solved.kernel)
    assert rep.residual_rel <= 1e-6
    assert rep.pohozaev_rel <= 1e-5
    assert rep.nehari_rel <= 1e-6
    assert rep.P_rel <= 1e-6
    assert set(rep.to_dict()) >= {"residual", "pohozaev_rel", "nehari_rel", "P_rel"}


def test_ground_state_independent_of_seed(half_mass, consts):
    ref = half_mass.ground.record
    kernel = half_mass.ground.kernel
    g = kernel.grid
    seeds = [np.exp(-(g.r / 3) ** 2), np.exp(-(g.r / 10) ** 2), 1 / np.cosh(g.r / 5),
             np.exp(-g.r / 4) * (1 + g.r / 4), np.exp(-(g.r / 6) ** 4)]
    for seed in seeds:
        seed = seed.copy()
        seed[-1] = 0
        rec = solve_ground(ref.params, consts, kernel, seed=seed)
        assert rec.energy == pytest.approx(ref.energy, rel=1e-9)
        assert math.sqrt(g.norm2(rec.u.values - ref.u.values) / g.norm2(ref.u.values)) <= 1e-6


def test_excited_state_independent_of_bubble_width(half_mass, consts):
    ref = half_mass.excited.record
    kernel = half_mass.excited.kernel
    for eps in (0.05, 0.2):
        rec = solve_excited(ref.params, consts, kernel, SolverConfig(bubble_eps=eps), ground=half_mass.ground.record)
        assert rec.energy == pytest.approx(ref.energy, rel=1e-8)


def test_mass_continuation_matches_full_flow(half_mass, consts):
    ref = half_mass.ground.record
    kernel = half_mass.ground.kernel
    params = ref.params.with_mass(0.99 * ref.params.a)
    cont = solve_ground(params, consts, kernel, SolverConfig(flow_tol=1e-3), seed=ref.u.values)
    full = solve_ground(params, consts, kernel)
    assert cont.energy == pytest.approx(full.energy, rel=1e-9)


def test_newton_polish_recovers_perturbed_solution(half_mass):
    rec, kernel = half_mass.ground.record, half_mass.ground.kernel
    g = rec.grid
    bump = 1e-3 * np.exp(-(g.r / 4) ** 2) * rec.u.values[0]
    u0 = rec.u.values + bump
    u0 *= math.sqrt(rec.params.a / g.norm2(u0))
    u, lam, _ = newton_polish(g, u0, rec.lam, rec.params, kernel)
    assert lam == pytest.approx(rec.lam, rel=1e-9)
    assert np.max(np.abs(u - rec.u.values)) <= 1e-8 * rec.u.values[0]


def test_refine_onto_new_grid(half_mass, consts):
    rec = half_mass.ground.record
    g = build_radial_grid(3, 1.1 * rec.grid.R, 1024, kind="graded", grading=10.0)
    refined = refine_record(rec, build_riesz_kernel(g, 2.0), consts)
    assert refined.energy == pytest.approx(rec.energy, rel=1e-8)
    assert any("refined" in n for n in refined.notes)


def test_omega3_refused(base_params, consts, gaussian_setup):
    params = base_params.with_mass(2 * consts.a0)
    with pytest.raises(RegimeError, match="Omega3"):
        ground_state(params, consts)
    with pytest.raises(RegimeError):
        solve_ground(params, consts, gaussian_setup[1])
    with pytest.raises(RegimeError):
        excited_state(params, consts, None)


def test_excited_needs_ground_or_seed(half_mass, consts):
    rec = half_mass.ground.record
    with pytest.raises(ValueError, match="ground state or an explicit seed"):
        solve_excited(rec.params, consts, half_mass.excited.kernel)


@pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(grad_tol=-1.0), dict(seed_kind="random")])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


@pytest.mark.parametrize("which", ["ground", "excited"])
def test_record_round_trip(half_mass, tmp_path, which):
    solved = getattr(half_mass, which)
    rec = solved.record
    save_record(rec, solved.kernel, tmp_path / which, metadata({"test": which}))
    back, kernel = load_record(tmp_path / which)
    assert np.array_equal(back.u.values, rec.u.values)
    assert np.array_equal(back.grid.r, rec.grid.r)
    assert back.energy == pytest.approx(rec.energy, rel=1e-12)
    assert back.lam == rec.lam and back.branch == rec.branch
    assert kernel.k_max == solved.kernel.k_max
