"""Energy, Pohozaev functional, L2 gradient, Lagrange multiplier and fiber map.

Every function accepts either a bare nodal array or a :class:`RadialField`,
together with a kernel whose ``grid`` supplies ``integrate``, ``norm2`` and
``dirichlet`` (the discrete ||grad u||^2).  Radial and box kernels both work.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq

from .discretization.radial import RadialField, RadialGrid

ZERO_CUTOFF = 1e-14
FIBER_RTOL = 1e-12


class EvaluationError(ValueError):
    """Non-finite field or undefined functional."""


class FiberStructureError(RuntimeError):
    """The fiber derivative does not show the expected two sign changes."""


class FiberWarning(RuntimeWarning):
    pass


def _values(u):
    vals = u.values if isinstance(u, RadialField) else np.asarray(u)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("field contains NaN or Inf")
    return vals


def abs_power_factor(u, exponent):
    """|u|^{exponent}, with values below ZERO_CUTOFF * max|u| mapped to 0 when exponent < 0."""
    au = np.abs(u)
    if exponent >= 0:
        return au**exponent
    out = np.zeros_like(au)
    nz = au > ZERO_CUTOFF * np.max(au) if au.size else au > 0
    out[nz] = au[nz] ** exponent
    return out


@dataclass(frozen=True)
class BaseIntegrals:
    """||grad u||^2, D(u) and ||u||_q^q, the three inputs of the fiber map."""

    grad_sq: float
    hartree_D: float
    local_Lq: float
    mass: float


def base_integrals(u, params, kernel):
    vals = _values(u)
    grid = kernel.grid
    g = np.abs(vals) ** params.p_bar
    D = float(grid.integrate(g * kernel.apply(g)))
    return BaseIntegrals(grad_sq=grid.dirichlet(vals), hartree_D=D,
                         local_Lq=float(grid.integrate(np.abs(vals) ** params.q)),
                         mass=grid.norm2(vals))


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    hartree: float
    local: float
    total: float
    pohozaev: float
    mass: float
    grad_sq: float
    hartree_D: float
    local_Lq: float

    def to_dict(self, lam=None):
        d = {k: getattr(self, k) for k in ("kinetic", "hartree", "local", "total", "pohozaev", "mass")}
        if lam is not None:
            d["lambda"] = lam
        return d

    def to_json(self, lam=None):
        return json.dumps(self.to_dict(lam))


def breakdown_from_integrals(b, params):
    kin = 0.5 * b.grad_sq
    har = b.hartree_D / (2 * params.p_bar)
    loc = params.mu / params.q * b.local_Lq
    pz = b.grad_sq - b.hartree_D - params.mu * params.gamma_q * b.local_Lq
    return EnergyBreakdown(kinetic=kin, hartree=har, local=loc, total=kin - har - loc, pohozaev=pz,
                           mass=b.mass, grad_sq=b.grad_sq, hartree_D=b.hartree_D, local_Lq=b.local_Lq)


def energy(u, params, kernel):
    """Energy terms and Pohozaev value of ``u`` from shared quadratures."""
    return breakdown_from_integrals(base_integrals(u, params, kernel), params)


def pohozaev(u, params, kernel):
    return energy(u, params, kernel).pohozaev


def nonlinear_potential(u, params, kernel):
    """Real potential (I * |u|^p)|u|^{p-2} + mu |u|^{q-2}."""
    vals = _values(u)
    g = np.abs(vals) ** params.p_bar
    hartree = kernel.apply(g)
    return hartree * abs_power_factor(vals, params.p_bar - 2) + params.mu * abs_power_factor(vals, params.q - 2)


def l2_gradient(u, params, kernel):
    """-Lap u - (I * |u|^p)|u|^{p-2}u - mu|u|^{q-2}u on the kernel's grid."""
    vals = _values(u)
    grad = -kernel.grid.laplacian(vals) - nonlinear_potential(vals, params, kernel) * vals
    if isinstance(kernel.grid, RadialGrid):
        grad = np.asarray(grad)
        grad[-1] = 0
    return RadialField(u.grid, grad) if isinstance(u, RadialField) else grad


def lagrange_multiplier(u, breakdown, params):
    """lambda = (||grad u||^2 - D(u) - mu ||u||_q^q) / ||u||_2^2."""
    if not breakdown.mass > 0:
        raise EvaluationError("Lagrange multiplier undefined for a zero field")
    return (breakdown.grad_sq - breakdown.hartree_D - params.mu * breakdown.local_Lq) / breakdown.mass


# -- fiber map -------------------------------------------------------------


@dataclass(frozen=True)
class FiberMap:
    """Psi(tau) = E(tau^{N/2} u(tau x)) expressed through the base integrals of u."""

    T: float
    D: float
    L: float
    p_bar: float
    q: float
    q_gamma: float
    mu: float

    @classmethod
    def from_field(cls, u, params, kernel):
        b = base_integrals(u, params, kernel)
        return cls.from_integrals(b, params)

    @classmethod
    def from_integrals(cls, b, params):
        return cls(T=b.grad_sq, D=b.hartree_D, L=b.local_Lq, p_bar=params.p_bar, q=params.q,
                   q_gamma=params.q_gamma, mu=params.mu)

    def _check(self, tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(tau <= 0):
            raise EvaluationError("fiber map defined for tau > 0 only")
        return tau

    def value(self, tau):
        t = self._check(tau)
        return (0.5 * t**2 * self.T - t ** (2 * self.p_bar) * self.D / (2 * self.p_bar)
                - self.mu / self.q * t**self.q_gamma * self.L)

    def derivative(self, tau):
        """Psi'(tau); equals P(u_tau) / tau."""
        t = self._check(tau)
        gam = self.q_gamma / self.q
        return (t * self.T - t ** (2 * self.p_bar - 1) * self.D
                - self.mu * gam * t ** (self.q_gamma - 1) * self.L)

    def second_derivative_fd(self, tau, rel_step=1e-6):
        h = rel_step * tau
        return (self.derivative(tau + h) - self.derivative(tau - h)) / (2 * h)

    def reduced(self, tau):
        """Psi'(tau) tau^{1 - q gamma}: increasing then decreasing, same sign as Psi'."""
        t = self._check(tau)
        gam = self.q_gamma / self.q
        return (t ** (2 - self.q_gamma) * self.T - t ** (2 * self.p_bar - self.q_gamma) * self.D
                - self.mu * gam * self.L)

    def reduced_peak(self):
        return ((2 - self.q_gamma) * self.T / ((2 * self.p_bar - self.q_gamma) * self.D)) ** (
            1.0 / (2 * self.p_bar - 2))


@dataclass(frozen=True)
class FiberPoints:
    tau_plus: float
    tau_minus: float
    E_plus: float
    E_minus: float
    psi2_minus: float

    def to_dict(self):
        return asdict(self)


def fiber_value(u, params, tau, kernel):
    return float(FiberMap.from_field(u, params, kernel).value(tau))


def fiber_derivative(u, params, tau, kernel):
    return float(FiberMap.from_field(u, params, kernel).derivative(tau))


def fiber_points_from_map(fm, rtol=FIBER_RTOL):
    """Both critical points of the fiber map by bracketing and Brent's method."""
    if not (fm.T > 0 and fm.D > 0 and fm.L > 0):
        raise FiberStructureError("fiber map needs positive kinetic, Hartree and local integrals")
    peak = fm.reduced_peak()
    top = fm.reduced(peak)
    if not top > 0:
        raise FiberStructureError(f"fiber derivative has no sign change (peak value {top:.3e}); "
                                  "mass outside the admissible regime?")
    lo = peak
    while fm.reduced(lo) > 0:
        lo *= 0.5
    hi = peak
    while fm.reduced(hi) > 0:
        hi *= 2.0
    t_plus = brentq(fm.reduced, lo, peak, xtol=1e-300, rtol=rtol, maxiter=500)
    t_minus = brentq(fm.reduced, peak, hi, xtol=1e-300, rtol=rtol, maxiter=500)
    curv = fm.second_derivative_fd(t_minus)
    if not curv < 0:
        warnings.warn(f"Psi'' at tau_minus is {curv:.3e}, expected negative", FiberWarning, stacklevel=2)
    return FiberPoints(tau_plus=float(t_plus), tau_minus=float(t_minus), E_plus=float(fm.value(t_plus)),
                       E_minus=float(fm.value(t_minus)), psi2_minus=float(curv))


def find_fiber_points(u, params, kernel, mass_rtol=1e-8, check_mass=True):
    """tau_u^+ < tau_u^- with their fiber energies for a field on the mass sphere."""
    b = base_integrals(u, params, kernel)
    if check_mass and abs(b.mass - params.a) > mass_rtol * params.a:
        raise EvaluationError(f"field mass {b.mass:.10g} differs from a={params.a:.10g}")
    return fiber_points_from_map(FiberMap.from_integrals(b, params))


def fiber_scan(fm, n=200, lo=1e-2, hi=1e2):
    tau = np.geomspace(lo, hi, n)
    return tau, fm.value(tau)


__all__ = ["EnergyBreakdown", "FiberPoints", "FiberMap", "BaseIntegrals", "energy", "pohozaev",
           "l2_gradient", "nonlinear_potential", "lagrange_multiplier", "fiber_value", "fiber_derivative",
           "find_fiber_points", "fiber_points_from_map", "base_integrals", "EvaluationError",
           "FiberStructureError", "abs_power_factor"]
