"""Positive radial solution of -Q'' - (N-1)Q'/r + Q = Q^{q-1} by shooting.

The shooting value Q(0) is bisected between profiles that cross zero (too
large) and profiles that turn back up (too small).  The profile is then
polished by Newton's method on a spectral-element grid, where its mass and
the Gagliardo-Nirenberg integrals are evaluated.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import diags
from scipy.sparse.linalg import spsolve

from ..discretization.radial import RadialField, build_radial_grid
from ..model import ParameterError

R_START = 1e-3
# the bracket only seeds the Newton polish, which fixes the profile to roundoff
BISECT_TOL = 1e-8
BISECT_RTOL = 1e-10


class ShootingError(RuntimeError):
    """No admissible bracket for the shooting parameter."""


def _rhs(N, q):
    def f(r, y):
        Q, dQ = y
        return [dQ, -(N - 1) / r * dQ + Q - np.abs(Q) ** (q - 2) * Q]
    return f


def _series_start(Q0, N, q, r0=R_START):
    c = (Q0 - Q0 ** (q - 1)) / (2 * N)
    return [Q0 + c * r0**2, 2 * c * r0]


def classify_shot(Q0, N, q, r_max=60.0, rtol=1e-12):
    """Return +1 when the shot crosses zero (Q0 too big), -1 when it turns up, 0 otherwise."""
    def crosses(r, y):
        return y[0]
    crosses.terminal = True

    def turns(r, y):
        return y[1]
    turns.terminal = True
    turns.direction = 1

    sol = solve_ivp(_rhs(N, q), (R_START, r_max), _series_start(Q0, N, q), method="DOP853",
                    rtol=rtol, atol=1e-14, events=(crosses, turns))
    if sol.t_events[0].size:
        return 1, sol
    if sol.t_events[1].size:
        return -1, sol
    return 0, sol


def shoot_initial_value(N, q, lo=1e-3, hi=1e3, tol=BISECT_TOL, max_iter=200, rtol=BISECT_RTOL):
    """Bisect Q(0) in [lo, hi] (in log scale) to relative tolerance ``tol``."""
    if classify_shot(lo, N, q, rtol=rtol)[0] != -1 or classify_shot(hi, N, q, rtol=rtol)[0] != 1:
        raise ShootingError(f"no shooting bracket in Q(0) in [{lo:g}, {hi:g}] for N={N}, q={q}")
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        side = classify_shot(mid, N, q, rtol=rtol)[0]
        if side == 1:
            hi = mid
        else:
            lo = mid
        if hi / lo - 1 < tol:
            break
    return math.sqrt(lo * hi)


def shot_profile(Q0, N, q, r):
    """Integrate the shot from Q0 and sample it at radii ``r`` until the first event."""
    side, sol = classify_shot(Q0, N, q, r_max=float(np.max(r)) + 1.0)
    r_end = sol.t[-1]
    dense = solve_ivp(_rhs(N, q), (R_START, r_end), _series_start(Q0, N, q), method="DOP853",
                      rtol=1e-12, atol=1e-14, dense_output=True).sol
    out = np.zeros_like(r)
    inside = (r >= R_START) & (r <= r_end)
    out[inside] = dense(r[inside])[0]
    out[r < R_START] = Q0
    return out, r_end


def _polish(grid, q, Q, tol=1e-13, max_iter=30):
    """Newton iterations for K Q + M Q - M Q^{q-1} = 0 on the free nodes."""
    K = grid.stiffness[:-1, :-1]
    w = grid.w[:-1]
    x = Q[:-1].copy()
    for _ in range(max_iter):
        F = K @ x + w * x - w * np.abs(x) ** (q - 2) * x
        J = K + diags(w - (q - 1) * w * np.abs(x) ** (q - 2))
        dx = spsolve(J.tocsc(), F)
        x -= dx
        if np.max(np.abs(dx)) < tol * np.max(np.abs(x)):
            break
    out = np.zeros_like(Q)
    out[:-1] = x
    return out


def strong_residual(grid, Q, q):
    """Pointwise residual Q'' + (N-1)Q'/r - Q + Q^{q-1} of the element interpolant."""
    dQ = grid.derivative(Q)
    d2Q = grid.derivative(dQ)
    r = grid.r
    with np.errstate(divide="ignore", invalid="ignore"):
        drift = np.where(r > 0, (grid.N - 1) * dQ / np.where(r > 0, r, 1.0), (grid.N - 1) * d2Q)
    return d2Q + drift - Q + np.abs(Q) ** (q - 2) * Q


def default_scalar_grid(N):
    return build_radial_grid(N, 40.0, 1024, kind="uniform")


def shoot_scalar_ground_state(N, q, grid=None):
    """Positive radial ground state Q_q and its mass ||Q_q||_2^2.

    Parameters
    ----------
    N : int
    q : float
        Power, 2 < q < 2N/(N-2).
    grid : RadialGrid, optional
        Target grid; the default spans [0, 40] with 1024 nodes.

    Returns
    -------
    (RadialField, float)
    """
    crit = 2 * N / (N - 2)
    if not 2 < q < crit:
        raise ParameterError(f"q must satisfy 2 < q < {crit:g}, got {q}")
    if grid is None:
        grid = default_scalar_grid(N)
    Q0 = shoot_initial_value(N, q)
    Q, r_end = shot_profile(Q0, N, q, grid.r)
    Q[grid.r > r_end] = 0.0
    Q[-1] = 0.0
    Q = _polish(grid, q, Q)
    return RadialField(grid, Q), grid.norm2(Q)


@lru_cache(maxsize=32)
def scalar_ground_state_mass(N, q):
    return shoot_scalar_ground_state(N, q)[1]
