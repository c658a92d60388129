"""Grid selection and two-pass solves.

A first solve on a heuristic grid gives the multiplier lambda; the domain is
then resized to span a fixed number of decay lengths 1/sqrt(-lambda) and the
record is re-solved there.  Too short a domain truncates the tail, too long
a domain drives the tail below roundoff, where positivity becomes noise.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from ..discretization.riesz import build_riesz_kernel
from .standing import (DECAY_LENGTHS, EXCITED_K_MAX, SolverConfig, excited_grid, ground_grid,
                       refine_record, require_admissible, solve_excited, solve_ground)

log = logging.getLogger(__name__)

RESIZE_TOL = 0.15


@dataclass(eq=False)
class Solved:
    record: object
    kernel: object


def _needs_resize(grid, lam):
    target = max(30.0, DECAY_LENGTHS / math.sqrt(-lam))
    return abs(grid.R / target - 1) > RESIZE_TOL, target


def ground_state(params, consts, cfg=SolverConfig(), n=1024):
    """Ground state with an automatically sized domain."""
    require_admissible(params, consts)
    grid = ground_grid(params, consts, n=n)
    kernel = build_riesz_kernel(grid, params.alpha)
    rec = solve_ground(params, consts, kernel, cfg)
    resize, target = _needs_resize(grid, rec.lam)
    if resize:
        log.info("ground: resizing domain R=%.4g -> %.4g", grid.R, target)
        grid = ground_grid(params, consts, n=n, kappa=DECAY_LENGTHS / target)
        kernel = build_riesz_kernel(grid, params.alpha)
        rec = refine_record(rec, kernel, consts)
    return Solved(rec, kernel)


def excited_state(params, consts, ground, cfg=SolverConfig(), n=1024, k_max=EXCITED_K_MAX):
    """Excited state seeded from ``ground`` (a :class:`SolutionRecord`) with an auto-sized domain."""
    require_admissible(params, consts)
    grid = excited_grid(params, n=n)
    kernel = build_riesz_kernel(grid, params.alpha, k_max=k_max)
    rec = solve_excited(params, consts, kernel, cfg, ground=ground)
    resize, target = _needs_resize(grid, rec.lam)
    if resize:
        log.info("excited: resizing domain R=%.4g -> %.4g", grid.R, target)
        grid = excited_grid(params, n=n, R=target)
        kernel = build_riesz_kernel(grid, params.alpha, k_max=k_max)
        rec = refine_record(rec, kernel, consts)
    return Solved(rec, kernel)
