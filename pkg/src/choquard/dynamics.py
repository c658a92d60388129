"""Time-dependent equation i psi_t + Lap psi + (I * |psi|^p)|psi|^{p-2} psi + mu |psi|^{q-2} psi = 0.

Strang splitting: half a step of free flight, a full nonlinear phase step with
the potential frozen at the start of the substep (exact, since the phase step
leaves |psi| unchanged), and another half step of free flight.

Two backends share one interface:

* :class:`RadialPropagator` on a radial spectral-element grid, where free
  flight is applied exactly through the generalised eigendecomposition
  ``K v = omega M v``;
* :class:`CartesianPropagator` on the periodic box, with FFT free flight and
  the zero-padded free-space Riesz multiplier.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from .discretization.cartesian import CartesianRiesz
from .discretization.radial import dilate
from .functionals import (FiberMap, base_integrals, breakdown_from_integrals, fiber_points_from_map,
                          nonlinear_potential)

log = logging.getLogger(__name__)


class IntegratorAccuracyError(RuntimeError):
    """Energy drift exceeded the accuracy limit of the integrator."""


class DynamicsRegimeError(ValueError):
    """Data outside the regime treated by the time-dependent solver."""


class DynamicsWarning(RuntimeWarning):
    pass


def check_dynamics_params(params):
    if params.p_bar < 2 - 1e-12:
        raise DynamicsRegimeError(f"p_bar={params.p_bar:g} < 2: the Hartree nonlinearity is not "
                                  "locally Lipschitz and the time-dependent problem is not treated")
    if params.alpha >= params.N - 2:
        warnings.warn("alpha >= N - 2: outside the hypothesis of the orbital stability result; "
                      "the scheme itself runs unchanged", DynamicsWarning, stacklevel=3)


# -- backends -----------------------------------------------------------------


class RadialPropagator:
    """Exact free flight on the radial grid plus frozen-potential phase steps."""

    def __init__(self, kernel, params, dt, nonlinear=True):
        self.nonlinear = nonlinear
        self.kernel = kernel
        self.grid = kernel.grid
        self.params = params
        g = self.grid
        m = g.size - 1
        sq = np.sqrt(g.w[:m])
        A = g.stiffness[:m, :m].toarray() / sq[:, None] / sq[None, :]
        self.omega, self.modes = np.linalg.eigh(0.5 * (A + A.T))
        self._sq = sq
        self.set_dt(dt)

    def set_dt(self, dt):
        self.dt = float(dt)
        self._half = self._flight(0.5 * dt)
        self._full = self._flight(dt)

    def _flight(self, t):
        V = self.modes
        return (V * np.exp(-1j * self.omega * t)[None, :]) @ V.T

    def free_flight(self, psi, t):
        """exp(i t Lap_h) psi; M-unitary, so the discrete mass is preserved."""
        U = self._half if t == 0.5 * self.dt else self._full if t == self.dt else self._flight(t)
        out = np.zeros(self.grid.size, dtype=complex)
        out[:-1] = (U @ (self._sq * psi[:-1])) / self._sq
        return out

    def potential(self, psi):
        return nonlinear_potential(psi, self.params, self.kernel)

    def nonlinear_phase(self, psi, t):
        if not self.nonlinear:
            return psi
        return np.exp(1j * t * self.potential(psi)) * psi

    # observables
    def mass(self, psi):
        return self.grid.norm2(psi)

    def integrals(self, psi):
        return base_integrals(psi, self.params, self.kernel)

    def virial(self, psi):
        return float(np.dot(self.grid.w, self.grid.r**2 * np.abs(psi) ** 2))

    def sup(self, psi):
        return float(np.max(np.abs(psi)))

    def h1_inner(self, u, psi):
        """<u, psi>_{H^1} with the form K + M."""
        g = self.grid
        return np.vdot(u, g.stiffness @ psi) + np.vdot(u, g.w * psi)

    @staticmethod
    def h1_form(grid, f):
        return float(np.real(np.vdot(f, grid.stiffness @ f) + np.vdot(f, grid.w * f)))

    def resolution_fraction(self, psi):
        """Mass fraction carried by the upper half of the discrete spectrum."""
        c = np.abs(self.modes.T @ (self._sq * psi[:-1])) ** 2
        return float(c[c.size // 2:].sum() / c.sum())

    def boundary_fraction(self, psi, width=0.1):
        """Mass fraction in the outer ``width`` part of the domain."""
        g = self.grid
        dens = g.w * np.abs(psi) ** 2
        return float(dens[g.r > (1 - width) * g.R].sum() / dens.sum())


class CartesianPropagator:
    """FFT free flight on the periodic box with the free-space Riesz potential."""

    def __init__(self, box, params, dt, riesz_mode="free", nonlinear=True):
        self.nonlinear = nonlinear
        if params.N != 3:
            raise DynamicsRegimeError("the box backend is three-dimensional")
        self.grid = box
        self.params = params
        self.riesz = CartesianRiesz(box, params.alpha, riesz_mode)
        self._k2 = box.k2()
        self._r2 = box.r2()
        self.set_dt(dt)

    # duck-typed so that base_integrals can use the propagator as its kernel
    def apply(self, f):
        return self.riesz.apply(f)

    @property
    def kernel(self):
        return self

    def set_dt(self, dt):
        self.dt = float(dt)
        self._half = np.exp(-1j * self._k2 * 0.5 * dt)
        self._full = np.exp(-1j * self._k2 * dt)

    def free_flight(self, psi, t):
        ph = self._half if t == 0.5 * self.dt else self._full if t == self.dt else np.exp(-1j * self._k2 * t)
        return sfft.ifftn(ph * sfft.fftn(psi))

    def potential(self, psi):
        return nonlinear_potential(psi, self.params, self)

    def nonlinear_phase(self, psi, t):
        if not self.nonlinear:
            return psi
        return np.exp(1j * t * self.potential(psi)) * psi

    def mass(self, psi):
        return self.grid.norm2(psi)

    def integrals(self, psi):
        return base_integrals(psi, self.params, self)

    def virial(self, psi):
        return float(np.sum(self._r2 * np.abs(psi) ** 2) * self.grid.cell)

    def sup(self, psi):
        return float(np.max(np.abs(psi)))

    def h1_inner(self, u, psi):
        g = self.grid
        uh, ph = sfft.fftn(u), sfft.fftn(psi)
        return np.vdot(uh, (1 + self._k2) * ph) * g.cell / u.size

    def resolution_fraction(self, psi):
        """Mass fraction beyond 2/3 of the Nyquist wavenumber."""
        ph = np.abs(sfft.fftn(psi)) ** 2
        kmax = np.max(np.abs(self.grid.k1))
        return float(ph[self._k2 > (2 * kmax / 3) ** 2].sum() / ph.sum())

    def boundary_fraction(self, psi, width=0.1):
        return self.grid.tail_fraction(psi)


def strang_step(psi, dt, propagator):
    """One Strang step of length ``dt`` (the propagator's own dt when equal)."""
    if dt != propagator.dt:
        propagator.set_dt(dt)
    psi = propagator.free_flight(psi, 0.5 * dt)
    psi = propagator.nonlinear_phase(psi, dt)
    return propagator.free_flight(psi, 0.5 * dt)


# -- records --------------------------------------------------------------------


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    virial: list = field(default_factory=list)
    pohozaev: list = field(default_factory=list)
    sup_amp: list = field(default_factory=list)
    orbit_dist: list = field(default_factory=list)
    max_step_mass_drift: float = 0.0

    COLUMNS = ("times", "mass", "energy", "kinetic", "virial", "pohozaev", "sup_amp", "orbit_dist")

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k), dtype=float) for k in self.COLUMNS}

    def energy_drift(self):
        e = np.asarray(self.energy)
        return float(np.max(np.abs(e - e[0])) / abs(e[0]))

    def mass_drift(self):
        m = np.asarray(self.mass)
        return float(np.max(np.abs(m - m[0])) / m[0])

    def to_csv(self, path, header_meta=None):
        with open(path, "w", newline="") as fh:
            if header_meta:
                fh.write("# " + json.dumps(header_meta, sort_keys=True) + "\n")
            wr = csv.writer(fh)
            wr.writerow(self.COLUMNS)
            n = len(self.times)
            for i in range(n):
                wr.writerow([repr(float(getattr(self, k)[i])) if getattr(self, k) else "" for k in self.COLUMNS])


@dataclass
class SimOutcome:
    verdict: str
    t_star: float | None
    max_orbit_dist: float | None
    halted: str | None = None
    delta_hat: float | None = None
    t_end: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Monitors:
    sample_every: int = 10
    reference: object = None
    amp_ceiling_factor: float = 1e3
    energy_halt: float = 1e-4
    halt_on_drift: bool = False
    orbit_tol: float | None = None
    boundary_tol: float = 1e-6
    adaptive: bool = False
    resolution_tol: float = 1e-4
    dt_floor_factor: float = 1e-6


def _orbit_distance(prop, u_ref, psi, ref_norm2):
    psi_norm2 = float(prop.h1_inner(psi, psi).real)
    overlap = abs(prop.h1_inner(u_ref, psi))
    return math.sqrt(max(psi_norm2 + ref_norm2 - 2 * overlap, 0.0))


def _sample(traj, prop, psi, t, params, mon, ref_norm2):
    b = prop.integrals(psi)
    br = breakdown_from_integrals(b, params)
    traj.times.append(t)
    traj.mass.append(b.mass)
    traj.energy.append(br.total)
    traj.kinetic.append(b.grad_sq)
    traj.virial.append(prop.virial(psi))
    traj.pohozaev.append(br.pohozaev)
    traj.sup_amp.append(prop.sup(psi))
    if mon.reference is not None:
        traj.orbit_dist.append(_orbit_distance(prop, mon.reference, psi, ref_norm2))
    return br


def virial_blowup_criterion(traj, T):
    """Virial-parabola test: all sampled P < 0, Phi concave and non-increasing,
    and Phi(0) + Phi'(0) t - 4 delta t^2 (delta = -max P) vanishes before 2T."""
    t = np.asarray(traj.times)
    phi = np.asarray(traj.virial)
    P = np.asarray(traj.pohozaev)
    if t.size < 5 or np.any(P >= 0):
        return False, None, None
    delta_hat = float(-np.max(P))
    # Phi'(0) from a quadratic fit of the first samples
    k = min(t.size, 5)
    dphi0 = np.polyfit(t[:k], phi[:k], 2)[1]
    disc = dphi0**2 + 16 * delta_hat * phi[0]
    t_cross = (dphi0 + math.sqrt(disc)) / (8 * delta_hat)
    # concave: on or above the chord from the first to the last sample, strictly somewhere
    tol = 1e-12 * abs(phi[0])
    chord = phi[0] + (phi[-1] - phi[0]) * (t - t[0]) / (t[-1] - t[0])
    concave = bool(np.all(phi >= chord - tol) and np.max(phi - chord) > tol)
    decreasing = bool(np.all(np.diff(phi) <= tol) and phi[-1] < phi[0] - tol)
    return bool(t_cross < 2 * T and concave and decreasing), float(t_cross), delta_hat


def run_simulation(psi0, T, dt, params, propagator, monitors=Monitors()):
    """Integrate to time T; returns (TrajectoryRecord, SimOutcome).

    The run halts early on the amplitude ceiling, on energy drift above
    ``monitors.energy_halt`` (an error unless ``halt_on_drift``), or when mass
    reaches the boundary layer.
    """
    check_dynamics_params(params)
    prop = propagator
    prop.set_dt(dt)
    psi = np.array(psi0, dtype=complex)
    mon = monitors
    ref_norm2 = float(prop.h1_inner(mon.reference, mon.reference).real) if mon.reference is not None else 0.0
    traj = TrajectoryRecord()
    br0 = _sample(traj, prop, psi, 0.0, params, mon, ref_norm2)
    E0 = br0.total
    m_prev = traj.mass[0]
    ceiling = mon.amp_ceiling_factor * traj.sup_amp[0]
    halted, t_star = None, None
    verdict = None
    t, step, amp_ref = 0.0, 0, traj.sup_amp[0]
    dt_floor = dt * mon.dt_floor_factor
    while T - t > 1e-9 * dt:
        h = min(dt, T - t)
        if h != prop.dt:
            prop.set_dt(h)
        psi = prop.free_flight(psi, 0.5 * h)
        psi = prop.nonlinear_phase(psi, h)
        psi = prop.free_flight(psi, 0.5 * h)
        t += h
        step += 1
        m = prop.mass(psi)
        traj.max_step_mass_drift = max(traj.max_step_mass_drift, abs(m - m_prev) / m_prev)
        m_prev = m
        amp = prop.sup(psi)
        if amp >= ceiling or not np.isfinite(amp):
            if np.isfinite(amp):
                _sample(traj, prop, psi, t, params, mon, ref_norm2)
            verdict, t_star, halted = "blowup", t, "amplitude ceiling"
            break
        if step % mon.sample_every == 0 or T - t <= 1e-9 * dt:
            br = _sample(traj, prop, psi, t, params, mon, ref_norm2)
            drift = abs(br.total - E0) / abs(E0)
            if drift > mon.energy_halt:
                if not mon.halt_on_drift:
                    raise IntegratorAccuracyError(f"energy drift {drift:.2e} at t={t:.4g}; reduce dt or refine")
                halted = f"energy drift {drift:.2e}"
                break
            if prop.resolution_fraction(psi) > mon.resolution_tol:
                halted = "grid resolution limit"
                break
            if prop.boundary_fraction(psi) > mon.boundary_tol:
                halted = "mass reached the boundary layer"
                break
        if mon.adaptive and (amp / amp_ref) ** (4 / (params.N - 2)) > 2:
            # parabolic scaling: time scale ~ amplitude^{-4/(N-2)} shrinks with concentration
            dt *= 0.5
            amp_ref = amp
            if dt < dt_floor:
                halted = "time step floor"
                break
    t_end = traj.times[-1]
    if halted:
        log.info("simulation halted at t=%.6g: %s", t_end, halted)
    max_orbit = max(traj.orbit_dist) if traj.orbit_dist else None
    out = SimOutcome(verdict="inconclusive", t_star=t_star, max_orbit_dist=max_orbit, halted=halted, t_end=t_end)
    if verdict == "blowup":
        out.verdict = "blowup"
        return traj, out
    ok, t_cross, delta_hat = virial_blowup_criterion(traj, T)
    out.delta_hat = delta_hat
    if ok:
        out.verdict, out.t_star = "blowup", t_end
        out.notes.append(f"virial parabola vanishes at t={t_cross:.4g}")
        return traj, out
    if halted == "mass reached the boundary layer":
        out.notes.append("virial unreliable: mass at the boundary")
        return traj, out
    if halted is None and mon.orbit_tol is not None and max_orbit is not None and max_orbit <= mon.orbit_tol:
        out.verdict = "stable"
    return traj, out


# -- experiments ----------------------------------------------------------------


@dataclass(frozen=True)
class DynamicsConfig:
    """Experiment settings; ``backend`` is "radial" or "cartesian"."""

    T: float = 20.0
    dt: float = 0.005
    delta: float = 0.01
    scale_s: float = 1.1
    sample_every: int = 10
    orbit_factor: float = 10.0
    bump_width: float | None = None
    bump_sign: float = 1.0
    instability_T: float = 1.0
    instability_dt: float = 5e-5
    backend: str = "radial"
    box_L: float = 16.0
    box_n: int = 64


def perturbation_bump(record, prop, width=None):
    """Smooth radial Gaussian with unit H^1 norm, width set by the decay length of ``record``."""
    g = record.grid
    if width is None:
        width = 1.0 / math.sqrt(-record.lam)
    eta = np.exp(-0.5 * (g.r / width) ** 2)
    eta[-1] = 0
    return eta / math.sqrt(RadialPropagator.h1_form(g, eta))


def _backend(record, kernel, cfg, dt, fields):
    """Propagator and the given radial nodal fields moved onto the chosen backend."""
    p = record.params
    if cfg.backend == "radial":
        return RadialPropagator(kernel, p, dt), [f.astype(complex) for f in fields]
    if cfg.backend == "cartesian":
        from .discretization.cartesian import CartesianGrid3
        box = CartesianGrid3(cfg.box_L, cfg.box_n)
        g = record.grid
        out = [box.sample_radial(lambda rr, f=f: g.interpolate(f, rr.ravel()).reshape(rr.shape)).astype(complex)
               for f in fields]
        box.validate_field(out[0])
        return CartesianPropagator(box, p, dt), out
    raise ValueError(f"unknown backend {cfg.backend!r}")


def stability_experiment(ground, delta, T, cfg, kernel):
    """Evolve the mass-normalised perturbation (u + delta eta) and track the H^1 orbit distance.

    Returns (TrajectoryRecord, SimOutcome); the verdict is "stable" when the
    orbit distance stays below ``cfg.orbit_factor * delta`` (1e-3 for delta = 0).
    """
    p = ground.params
    g = ground.grid
    u = ground.u.values
    eta = cfg.bump_sign * perturbation_bump(ground, None, cfg.bump_width)
    psi0 = u + delta * eta
    psi0 = psi0 * math.sqrt(p.a / g.norm2(psi0))
    prop, (psi0, ref) = _backend(ground, kernel, cfg, cfg.dt, [psi0, u])
    tol = cfg.orbit_factor * delta if delta > 0 else 1e-3
    mon = Monitors(sample_every=cfg.sample_every, reference=ref, orbit_tol=tol)
    return run_simulation(psi0, T, cfg.dt, p, prop, mon)


def instability_experiment(excited, s, T, cfg, kernel):
    """Evolve u_s = s^{N/2} u(s x) from the excited state and decide blow-up.

    For s > 1 the scaled datum must satisfy tau^-(u_s) < 1, checked on the
    fiber map before integrating.  The time step halves whenever the
    amplitude growth shortens the parabolic time scale by half.
    """
    p = excited.params
    if not p.dynamics_admissible:
        check_dynamics_params(p)
    g = excited.grid
    psi0 = dilate(g, excited.u.values, s, g.N / 2)
    notes = []
    if s != 1:
        pts = fiber_points_from_map(FiberMap.from_field(psi0, p, kernel))
        if not pts.tau_minus < 1:
            raise DynamicsRegimeError(f"scaled datum has tau_minus={pts.tau_minus:.6g} >= 1")
        E0 = breakdown_from_integrals(base_integrals(psi0, p, kernel), p).total
        notes.append(f"tau_minus(u_s)={pts.tau_minus:.8g}; E(u_s)={E0:.8g} vs E(u)={excited.energy:.8g}")
    prop, (psi0,) = _backend(excited, kernel, cfg, cfg.instability_dt, [psi0])
    mon = Monitors(sample_every=cfg.sample_every, halt_on_drift=True, adaptive=True)
    traj, out = run_simulation(psi0, T, cfg.instability_dt, p, prop, mon)
    out.notes = notes + out.notes
    return traj, out


__all__ = ["RadialPropagator", "CartesianPropagator", "strang_step", "run_simulation", "TrajectoryRecord",
           "SimOutcome", "Monitors", "DynamicsConfig", "stability_experiment", "instability_experiment",
           "virial_blowup_criterion", "IntegratorAccuracyError", "DynamicsRegimeError", "DynamicsWarning",
           "perturbation_bump", "check_dynamics_params"]
