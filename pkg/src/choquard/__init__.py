"""Normalized standing waves and dynamics of the upper-critical Choquard equation
with a focusing local perturbation."""
from .model import (AccuracyError, ModelParams, ParameterError, RegimeReport, SharpConstants, classify_regime,
                    compute_constants, f_max_closed_form, f_mu_a, rho_mu_a)
from .discretization import RadialField, RadialGrid, build_radial_grid, build_riesz_kernel
from .functionals import EnergyBreakdown, FiberMap, energy, find_fiber_points, pohozaev
from .solvers import SolutionRecord, SolverConfig, excited_state, ground_state, solve_excited, solve_ground

__all__ = ["AccuracyError", "ModelParams", "ParameterError", "RegimeReport", "SharpConstants", "classify_regime",
           "compute_constants", "f_max_closed_form", "f_mu_a", "rho_mu_a", "RadialField", "RadialGrid",
           "build_radial_grid", "build_riesz_kernel", "EnergyBreakdown", "FiberMap", "energy", "find_fiber_points",
           "pohozaev", "SolutionRecord", "SolverConfig", "excited_state", "ground_state", "solve_excited",
           "solve_ground"]
