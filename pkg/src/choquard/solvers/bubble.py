"""Cut-off Aubin-Talenti bubbles used as concentration seeds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..discretization.radial import RadialField
from ..model import aubin_talenti

MIN_NODES_BELOW_EPS = 8


class ResolutionError(ValueError):
    """The grid cannot resolve the requested bubble width."""


def cutoff(r):
    """Smooth radial cut-off: 1 on [0, 1], 0 on [2, inf), C^3 septic blend in between."""
    x = np.clip(np.asarray(r, dtype=float) - 1.0, 0.0, 1.0)
    blend = x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)
    return 1.0 - blend


@dataclass(eq=False)
class BubbleProfile:
    eps: float
    field: RadialField


def make_bubble(eps, grid):
    """u_eps = cutoff * U_eps sampled on ``grid``."""
    if not 0 < eps <= 0.5:
        raise ValueError(f"eps must lie in (0, 0.5], got {eps}")
    if grid.R < 2:
        raise ResolutionError("grid must extend to r >= 2 to hold the cut-off")
    below = int(np.count_nonzero(grid.r < eps))
    if below < MIN_NODES_BELOW_EPS:
        raise ResolutionError(f"only {below} nodes below eps={eps}; need {MIN_NODES_BELOW_EPS}")
    vals = cutoff(grid.r) * aubin_talenti(grid.r, grid.N, eps)
    vals[-1] = 0.0
    return BubbleProfile(eps=float(eps), field=RadialField(grid, vals))
