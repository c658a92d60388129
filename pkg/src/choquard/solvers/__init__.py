"""Scalar shooting, bubbles and the two normalized standing-wave solvers."""
from .bubble import BubbleProfile, make_bubble
from .pipeline import Solved, excited_state, ground_state
from .scalar import scalar_ground_state_mass, shoot_scalar_ground_state
from .standing import (ConvergenceError, DivergenceError, RegimeError, SolutionRecord, SolverConfig, solve_excited,
                       solve_ground, verify_solution)

__all__ = ["BubbleProfile", "make_bubble", "Solved", "excited_state", "ground_state", "scalar_ground_state_mass",
           "shoot_scalar_ground_state", "ConvergenceError", "DivergenceError", "RegimeError", "SolutionRecord",
           "SolverConfig", "solve_excited", "solve_ground", "verify_solution"]
