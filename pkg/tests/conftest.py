"""Shared session fixtures: constants, converged solution pairs and the expensive simulations."""
from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from choquard.discretization.radial import build_radial_grid
from choquard.discretization.riesz import build_riesz_kernel
from choquard.dynamics import DynamicsConfig, instability_experiment, stability_experiment
from choquard.model import ModelParams, compute_constants
from choquard.solvers.pipeline import excited_state, ground_state
from choquard.verify import default_bubble_grid


@dataclass
class SolvedPair:
    ground: object
    excited: object
    ground_seconds: float
    excited_seconds: float


@dataclass
class Run:
    traj: object
    outcome: object
    seconds: float


def _solve_pair(params, consts):
    t0 = time.perf_counter()
    g = ground_state(params, consts)
    t1 = time.perf_counter()
    x = excited_state(params, consts, g.record)
    t2 = time.perf_counter()
    return SolvedPair(g, x, t1 - t0, t2 - t1)


@pytest.fixture(scope="session")
def base_params():
    """Default model N=3, alpha=2, mu=1, q=3 (mass placeholder 1)."""
    return ModelParams(3, 2.0, 1.0, 1.0, 3.0)


@pytest.fixture(scope="session")
def consts(base_params):
    return compute_constants(base_params)


@pytest.fixture(scope="session")
def half_mass(base_params, consts):
    """Ground and excited states at a = a0 / 2."""
    return _solve_pair(base_params.with_mass(0.5 * consts.a0), consts)


@pytest.fixture(scope="session")
def threshold_mass(base_params, consts):
    """Ground and excited states at the threshold mass a = a0."""
    return _solve_pair(base_params.with_mass(consts.a0), consts)


@pytest.fixture(scope="session")
def bubble_setup(base_params):
    grid = default_bubble_grid(base_params.N)
    return grid, build_riesz_kernel(grid, base_params.alpha)


@pytest.fixture(scope="session")
def gaussian_setup():
    """Uniform radial grid on [0, 30] with its alpha = 2 kernel; hosts Gaussian test data."""
    grid = build_radial_grid(3, 30.0, 512, kind="uniform")
    return grid, build_riesz_kernel(grid, 2.0)


@pytest.fixture(scope="session")
def stability_runs(half_mass):
    """Perturbed ground-state runs over T = 20: delta 0.01, delta 0, and delta 0.01 with flipped bump."""
    rec, kernel = half_mass.ground.record, half_mass.ground.kernel
    runs = {}
    for delta, sign in ((0.01, 1.0), (0.0, 1.0), (0.01, -1.0)):
        t0 = time.perf_counter()
        traj, out = stability_experiment(rec, delta, 20.0, DynamicsConfig(bump_sign=sign), kernel)
        runs[(delta, sign)] = Run(traj, out, time.perf_counter() - t0)
    return runs


@pytest.fixture(scope="session")
def instability_runs(half_mass):
    """Dilated excited state s = 1.1 and the unscaled control s = 1, same horizon."""
    rec, kernel = half_mass.excited.record, half_mass.excited.kernel
    cfg = DynamicsConfig()
    runs = {}
    for s in (1.1, 1.0):
        t0 = time.perf_counter()
        traj, out = instability_experiment(rec, s, cfg.instability_T, cfg, kernel)
        runs[s] = Run(traj, out, time.perf_counter() - t0)
    return runs
