"""Normalized standing waves: the local minimizer (ground) and the fiber-maximum solution (excited).

Both solvers work on nodal arrays of a :class:`RadialGrid`, with the last
node pinned to zero.  A semi-implicit normalized gradient flow brings the
iterate near a critical point, then Newton's method on the augmented system
``(K - lambda M) u - M N(u) = 0, |u|^2 = a`` finishes the solve.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ..discretization.radial import RadialField, build_radial_grid, dilate
from ..functionals import (FiberMap, FiberStructureError, abs_power_factor, base_integrals,
                           breakdown_from_integrals, fiber_points_from_map, lagrange_multiplier,
                           nonlinear_potential)
from ..model import ParameterError, classify_regime
from .bubble import make_bubble
from .scalar import shoot_scalar_ground_state



class RegimeError(ParameterError):
    """The (mu, a) pair lies outside the regime with an existence theory."""


class DivergenceError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.5
    grad_tol: float = 1e-9
    flow_tol: float = 1e-4
    max_iter: int = 20000
    seed_kind: str = "bubble_superposition"
    bubble_eps: float = 0.1
    bubble_t: float = 1.0
    newton: bool = True
    newton_max_iter: int = 40
    max_restarts: int = 5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.seed_kind not in ("gaussian", "bubble_superposition"):
            raise ValueError(f"unknown seed_kind {self.seed_kind!r}")


@dataclass(eq=False)
class SolutionRecord:
    u: RadialField
    lam: float
    breakdown: object
    branch: str
    fiber: object
    iterations: int
    residual: float
    params: object
    converged: bool = True
    history: list = field(default_factory=list, repr=False)
    notes: list = field(default_factory=list)

    @property
    def energy(self):
        return self.breakdown.total

    @property
    def grid(self):
        return self.u.grid


# -- small helpers ----------------------------------------------------------


def _normalize(grid, u, a):
    return u * math.sqrt(a / grid.norm2(u))


def _projected_gradient(grid, u, V, a):
    """Return (lambda, ||grad E - lambda u||_M) for the current iterate."""
    g = grid.stiffness @ u / grid.w - V * u
    g[-1] = 0
    lam = float(np.dot(grid.w, g * u)) / a
    res = g - lam * u
    return lam, math.sqrt(float(np.dot(grid.w[:-1], res[:-1] ** 2)))


def _semi_implicit_step(grid, ab, u, V, dt):
    rhs = grid.w * (u + dt * V * u)
    return grid.solve_shifted(ab, rhs)


def equation_residual(grid, u, lam, params, kernel):
    """Discrete L2 norm of -Lap u - lambda u - N(u) on the free nodes."""
    V = nonlinear_potential(u, params, kernel)
    r = grid.stiffness @ u / grid.w - lam * u - V * u
    return math.sqrt(float(np.dot(grid.w[:-1], r[:-1] ** 2)))


def newton_polish(grid, u, lam, params, kernel, tol=1e-14, max_iter=40):
    """Newton's method for the mass-constrained stationary equation.

    Returns ``(u, lam, iterations)``.  Iteration stops once the relative step
    falls below ``tol`` or stagnates at the roundoff floor; otherwise
    :class:`ConvergenceError` is raised.
    """
    a = params.a
    pb, q, mu = params.p_bar, params.q, params.mu
    m = grid.size - 1
    K = grid.stiffness[:m, :m].toarray()
    Kr = kernel.matrix[:m, :m]
    w = grid.w[:m]
    x = u[:m].astype(float).copy()
    f_prev = np.inf
    for it in range(1, max_iter + 1):
        g = np.abs(x) ** pb
        H = Kr @ g
        s1 = abs_power_factor(x, pb - 2)
        N_u = H * s1 * x + mu * abs_power_factor(x, q - 2) * x
        F1 = K @ x - lam * w * x - w * N_u
        F2 = 0.5 * (np.dot(w, x * x) - a)
        dN = np.diag((pb - 1) * H * s1 + mu * (q - 1) * abs_power_factor(x, q - 2))
        dN += (s1 * x)[:, None] * Kr * (pb * s1 * x)[None, :]
        J = np.zeros((m + 1, m + 1))
        J[:m, :m] = K - lam * np.diag(w) - w[:, None] * dN
        J[:m, m] = -w * x
        J[m, :m] = w * x
        step = np.linalg.solve(J, -np.concatenate((F1, [F2])))
        x += step[:m]
        lam += step[m]
        rel = np.linalg.norm(step[:m]) / np.linalg.norm(x)
        f_norm = np.linalg.norm(F1)
        # stop at the roundoff floor: tiny step and no further decrease of the residual
        if rel <= tol or (rel <= 1e-9 and f_norm >= 0.5 * f_prev):
            break
        f_prev = f_norm
    else:
        raise ConvergenceError(f"Newton did not converge in {max_iter} iterations")
    out = np.zeros(grid.size)
    out[:m] = x
    return out, float(lam), it


def _finalize(grid, u, lam, params, kernel, branch, iterations, history, notes):
    b = base_integrals(u, params, kernel)
    br = breakdown_from_integrals(b, params)
    fm = FiberMap.from_integrals(b, params)
    fiber = fiber_points_from_map(fm)
    res = equation_residual(grid, u, lam, params, kernel)
    return SolutionRecord(u=RadialField(grid, u), lam=lam, breakdown=br, branch=branch, fiber=fiber,
                          iterations=iterations, residual=res, params=params, history=history, notes=notes)


def require_admissible(params, consts):
    rep = classify_regime(params, consts)
    if rep.regime == "Omega3":
        raise RegimeError(f"mass a={params.a:g} lies in Omega3 (mu a^e={rep.lhs:.6g} > {rep.rhs:.6g}); "
                          "no existence theory, refusing to solve")
    return rep


# -- grid heuristics ---------------------------------------------------------


def local_decay_estimate(params, Q_mass):
    """Decay rate kappa of the pure local problem at mass a (Hartree term dropped)."""
    N, q = params.N, params.q
    e = 4.0 / (q - 2) - N
    return (params.a * params.mu ** (2.0 / (q - 2)) / Q_mass) ** (1.0 / e)


DECAY_LENGTHS = 22.0


def ground_grid(params, consts, n=1024, kappa=None):
    """Mildly graded grid sized so the ground-state tail spans ~22 decay lengths."""
    if kappa is None:
        kappa = local_decay_estimate(params, consts.Q_mass)
    R = max(30.0, DECAY_LENGTHS / kappa)
    return build_radial_grid(params.N, R, n, kind="graded", grading=10.0)


def excited_grid(params, kappa=None, n=1024, R=None):
    """Strongly graded grid resolving the concentrated excited profile near the origin."""
    if R is None:
        R = 60.0 if kappa is None else max(30.0, DECAY_LENGTHS / kappa)
    return build_radial_grid(params.N, R, n, kind="graded", grading=30.0)


EXCITED_K_MAX = 160.0
PLATEAU_WINDOW = 200
PLATEAU_RATIO = 0.8
GROUND_HANDOVER_FACTOR = 10.0


# -- ground state -----------------------------------------------------------


def ground_seed(grid, params, Q_mass=None):
    """Local-problem profile (kappa^2/mu)^{1/(q-2)} Q(kappa r) at mass a."""
    Q, Qm = shoot_scalar_ground_state(params.N, params.q)
    kappa = local_decay_estimate(params, Qm)
    amp = (kappa**2 / params.mu) ** (1.0 / (params.q - 2))
    u = amp * Q.grid.interpolate(Q.values, kappa * grid.r)
    u[-1] = 0
    return _normalize(grid, u, params.a)


def _downscale_into_ball(grid, u, params, kernel, rho0, target_frac=0.5):
    """Dilate u until ||grad u||^2 < target_frac * rho0 and E(u) < 0."""
    tau = 1.0
    b = base_integrals(u, params, kernel)
    if b.grad_sq >= target_frac * rho0:
        tau = math.sqrt(target_frac * rho0 / b.grad_sq) * 0.99
    for _ in range(60):
        v = _normalize(grid, dilate(grid, u, tau, grid.N / 2), params.a) if tau != 1 else u
        bv = base_integrals(v, params, kernel)
        if bv.grad_sq < target_frac * rho0 and breakdown_from_integrals(bv, params).total < 0:
            return v
        tau *= 0.7
    raise DivergenceError("could not rescale the iterate into the ball with negative energy")


def solve_ground(params, consts, kernel, cfg=SolverConfig(), seed=None):
    """Interior local minimizer of E on the mass sphere inside the ball of radius rho0."""
    require_admissible(params, consts)
    grid = kernel.grid
    a, rho0 = params.a, consts.rho0
    u = ground_seed(grid, params) if seed is None else _normalize(grid, np.asarray(seed, float), a)
    u = _downscale_into_ball(grid, u, params, kernel, rho0)
    dt = cfg.dt
    ab = grid.banded_shifted(1.0, dt)
    E_old = breakdown_from_integrals(base_integrals(u, params, kernel), params).total
    history, notes = [E_old], []
    restarts = 0
    target = cfg.flow_tol if cfg.newton else cfg.grad_tol
    lam, res = _projected_gradient(grid, u, nonlinear_potential(u, params, kernel), a)
    it = accepted = 0
    window_res = res
    plateau = False
    while res > target and it < cfg.max_iter:
        it += 1
        if cfg.newton and accepted and accepted % PLATEAU_WINDOW == 0:
            # soft modes make the flow sublinear near the minimizer; Newton takes over once it stalls close by
            if res > PLATEAU_RATIO * window_res and res <= GROUND_HANDOVER_FACTOR * target:
                plateau = True
                break
            window_res = res
        V = nonlinear_potential(u, params, kernel)
        trial = _normalize(grid, _semi_implicit_step(grid, ab, u, V, dt), a)
        b = base_integrals(trial, params, kernel)
        if b.grad_sq >= rho0:
            restarts += 1
            notes.append(f"ball exit at iteration {it}; rescaled into the ball")
            if restarts > cfg.max_restarts:
                raise DivergenceError("ground flow left the ball repeatedly")
            u = _downscale_into_ball(grid, trial, params, kernel, rho0)
            E_old = breakdown_from_integrals(base_integrals(u, params, kernel), params).total
            continue
        E_new = breakdown_from_integrals(b, params).total
        if E_new > E_old + 1e-12 * abs(E_old):
            dt *= 0.5
            ab = grid.banded_shifted(1.0, dt)
            if dt < 1e-8:
                raise DivergenceError("step size underflow in the ground flow")
            continue
        u, E_old = trial, E_new
        accepted += 1
        history.append(E_new)
        lam, res = _projected_gradient(grid, u, nonlinear_potential(u, params, kernel), a)
    if res > target and not plateau:
        raise ConvergenceError(f"ground flow stalled at residual {res:.2e}", best=u)
    if cfg.newton:
        try:
            u, lam, n_it = newton_polish(grid, u, lam, params, kernel, max_iter=cfg.newton_max_iter)
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            raise ConvergenceError(f"Newton polish failed after the flow (residual {res:.2e}): {exc}",
                                   best=u) from exc
        it += n_it
        if base_integrals(u, params, kernel).grad_sq >= rho0:
            raise DivergenceError("Newton polish left the ball")
        if plateau:
            notes.append(f"flow plateaued at residual {res:.2e}; finished by Newton")
    rec = _finalize(grid, u, lam, params, kernel, "ground", it, history, notes)
    if abs(rec.fiber.tau_plus - 1) > 1e-6:
        raise ConvergenceError(f"converged field is not on the fiber minimum (tau_plus={rec.fiber.tau_plus:.6g})",
                               best=u)
    return rec


# -- excited state ----------------------------------------------------------


def _fiber_project(grid, u, params, kernel):
    """Rescale u onto the fiber maximum tau_u^- and return (v, fiber map of u, tau)."""
    fm = FiberMap.from_field(u, params, kernel)
    pts = fiber_points_from_map(fm)
    return _normalize(grid, dilate(grid, u, pts.tau_minus, grid.N / 2), params.a), pts


def transfer(values, src_grid, dst_grid):
    """Interpolate nodal values between radial grids (zero beyond the source radius)."""
    out = src_grid.interpolate(values, dst_grid.r)
    out[-1] = 0
    return out


def excited_seed(grid, params, ground, cfg):
    """Mass-a seed built from the ground state plus t times a concentrated profile.

    ``u_hat = u_plus + t u_eps`` is dilated with the energy-critical scaling
    ``s^{(N-2)/2} u_hat(s x)``, s = ||u_hat||_2 / sqrt(a), which keeps the
    kinetic and Hartree integrals and fixes the mass.
    """
    u_plus = transfer(ground.u.values, ground.grid, grid)
    if cfg.seed_kind == "bubble_superposition":
        bump = make_bubble(cfg.bubble_eps, grid).field.values
    else:
        bump = np.exp(-(grid.r / cfg.bubble_eps) ** 2) * cfg.bubble_eps ** (-(grid.N - 2) / 2)
        bump[-1] = 0
    u_hat = u_plus + cfg.bubble_t * bump
    s = math.sqrt(grid.norm2(u_hat) / params.a)
    out = dilate(grid, u_hat, s, (grid.N - 2) / 2)
    return _normalize(grid, out, params.a)


def solve_excited(params, consts, kernel, cfg=SolverConfig(), ground=None, seed=None):
    """Minimizer of E over the fiber-maximum set by fiber-projected gradient descent."""
    require_admissible(params, consts)
    grid = kernel.grid
    a = params.a
    notes = []
    if params.p_bar < 2 and params.N >= 5:
        notes.append("co-centred superposition seed used although p_bar < 2 and N >= 5")
    if seed is None:
        if ground is None:
            raise ValueError("solve_excited needs the ground state or an explicit seed")
        seed = excited_seed(grid, params, ground, cfg)
    u, pts = _fiber_project(grid, _normalize(grid, np.asarray(seed, float), a), params, kernel)
    E_old = breakdown_from_integrals(base_integrals(u, params, kernel), params).total
    bound = None
    if ground is not None:
        bound = ground.energy + consts.energy_gap_bound(params)
    history = [E_old]
    dt = cfg.dt
    ab = grid.banded_shifted(1.0, dt)
    target = cfg.flow_tol if cfg.newton else cfg.grad_tol
    lam, res = _projected_gradient(grid, u, nonlinear_potential(u, params, kernel), a)
    it = accepted = 0
    window_res = res
    plateau = False
    while res > target and it < cfg.max_iter:
        it += 1
        if cfg.newton and accepted and accepted % PLATEAU_WINDOW == 0:
            # the projected step has an O(dt) fixed-point bias; hand over to Newton once it stalls
            if res > PLATEAU_RATIO * window_res:
                plateau = True
                break
            window_res = res
        V = nonlinear_potential(u, params, kernel)
        stepped = _normalize(grid, _semi_implicit_step(grid, ab, u, V, dt), a)
        try:
            trial, pts = _fiber_project(grid, stepped, params, kernel)
        except FiberStructureError:
            dt *= 0.5
            ab = grid.banded_shifted(1.0, dt)
            continue
        E_new = breakdown_from_integrals(base_integrals(trial, params, kernel), params).total
        if E_new > E_old + 1e-12 * abs(E_old):
            dt *= 0.5
            if dt < 1e-10:
                break
            ab = grid.banded_shifted(1.0, dt)
            continue
        u, E_old = trial, E_new
        accepted += 1
        history.append(E_new)
        lam, res = _projected_gradient(grid, u, nonlinear_potential(u, params, kernel), a)
    if res > target and not plateau:
        msg = f"excited descent stalled at residual {res:.2e} after {it} iterations"
        if bound is not None and E_old >= bound:
            msg += f"; energy {E_old:.6g} above the upper bound {bound:.6g}"
        raise ConvergenceError(msg, best=u)
    if cfg.newton:
        try:
            u, lam, n_it = newton_polish(grid, u, lam, params, kernel, max_iter=cfg.newton_max_iter)
        except (ConvergenceError, np.linalg.LinAlgError) as exc:
            raise ConvergenceError(f"Newton polish failed after descent (residual {res:.2e}): {exc}",
                                   best=u) from exc
        it += n_it
        if plateau:
            notes.append(f"descent plateaued at residual {res:.2e}; finished by Newton")
    # land exactly on the fiber maximum
    fm = FiberMap.from_field(u, params, kernel)
    tau = fiber_points_from_map(fm).tau_minus
    if abs(tau - 1) > 1e-14:
        u = _normalize(grid, dilate(grid, u, tau, grid.N / 2), a)
        lam = lagrange_multiplier(u, breakdown_from_integrals(base_integrals(u, params, kernel), params), params)
    rec = _finalize(grid, u, lam, params, kernel, "excited", it, history, notes)
    if abs(rec.fiber.tau_minus - 1) > 1e-6:
        raise ConvergenceError(f"converged field is not on the fiber maximum (tau_minus={rec.fiber.tau_minus:.6g})",
                               best=u)
    if rec.fiber.psi2_minus >= 0:
        warnings.warn("fiber curvature at the excited state is not negative", RuntimeWarning, stacklevel=2)
    return rec


# -- verification ------------------------------------------------------------


@dataclass(frozen=True)
class ResidualReport:
    residual: float
    residual_rel: float
    pohozaev_lhs: float
    pohozaev_rhs: float
    pohozaev_rel: float
    nehari_lhs: float
    nehari_rhs: float
    nehari_rel: float
    P_rel: float

    def to_dict(self):
        return dict(self.__dict__)


def verify_solution(record, kernel):
    """Residual of the stationary equation plus the two integral identities it implies."""
    p = record.params
    u = record.u.values
    grid = record.grid
    b = base_integrals(u, p, kernel)
    lam = record.lam
    res = equation_residual(grid, u, lam, p, kernel)
    scale = math.sqrt(float(np.dot(grid.w[:-1], (grid.stiffness @ u / grid.w)[:-1] ** 2)))
    N, alpha = p.N, p.alpha
    lhs = (N - 2) / 2 * b.grad_sq
    rhs = N * lam / 2 * b.mass + (N + alpha) / (2 * p.p_bar) * b.hartree_D + p.mu * N / p.q * b.local_Lq
    n_lhs = b.grad_sq
    n_rhs = lam * b.mass + b.hartree_D + p.mu * b.local_Lq
    P = b.grad_sq - b.hartree_D - p.mu * p.gamma_q * b.local_Lq
    return ResidualReport(residual=res, residual_rel=res / scale, pohozaev_lhs=lhs, pohozaev_rhs=rhs,
                          pohozaev_rel=abs(lhs - rhs) / abs(lhs), nehari_lhs=n_lhs, nehari_rhs=n_rhs,
                          nehari_rel=abs(n_lhs - n_rhs) / abs(n_lhs), P_rel=abs(P) / b.grad_sq)


def replace_params(params, **kw):
    return replace(params, **kw)


def refine_record(record, kernel, consts):
    """Transfer a converged record to ``kernel.grid`` and re-solve there with Newton."""
    grid = kernel.grid
    params = record.params
    u = _normalize(grid, transfer(record.u.values, record.grid, grid), params.a)
    u, lam, n_it = newton_polish(grid, u, record.lam, params, kernel)
    if record.branch == "excited":
        fm = FiberMap.from_field(u, params, kernel)
        tau = fiber_points_from_map(fm).tau_minus
        if abs(tau - 1) > 1e-14:
            u = _normalize(grid, dilate(grid, u, tau, grid.N / 2), params.a)
    elif base_integrals(u, params, kernel).grad_sq >= consts.rho0:
        raise DivergenceError("refined ground state left the ball")
    notes = list(record.notes) + [f"refined on a grid with R={grid.R:.4g}"]
    return _finalize(grid, u, lam, params, kernel, record.branch, record.iterations + n_it,
                     record.history, notes)
