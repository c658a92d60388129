"""Problem parameters, sharp constants and the (mu, a) regime classification.

All formulas are written in terms of the upper critical exponent
``p_bar = (N + alpha) / (N - 2)`` and ``gamma_q = N/2 - N/q``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import gammaln

MAX_DIMENSION = 12
OMEGA2_RTOL = 1e-9


class ParameterError(ValueError):
    """A model parameter lies outside its admissible range."""


class AccuracyError(RuntimeError):
    """A numerical procedure did not reach its requested tolerance."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


def derive_exponents(N, alpha, q):
    """Return ``(p_bar, gamma_q)`` after validating the parameter ranges."""
    if int(N) != N or N < 3:
        raise ParameterError(f"N must be an integer >= 3, got {N}")
    if N > MAX_DIMENSION:
        raise ParameterError(f"N must be <= {MAX_DIMENSION}, got {N}")
    if not 0.0 < alpha < N:
        raise ParameterError(f"alpha must satisfy 0 < alpha < N={N}, got {alpha}")
    q_upper = 2.0 + 4.0 / N
    if not 2.0 < q < q_upper:
        raise ParameterError(f"q must satisfy 2 < q < 2 + 4/N = {q_upper:g}, got {q}")
    p_bar = (N + alpha) / (N - 2)
    gamma_q = N / 2 - N / q
    return p_bar, gamma_q


@dataclass(frozen=True)
class ModelParams:
    N: int
    alpha: float
    mu: float
    a: float
    q: float
    p_bar: float = field(init=False)
    gamma_q: float = field(init=False)

    def __post_init__(self):
        p_bar, gamma_q = derive_exponents(self.N, self.alpha, self.q)
        if not self.mu > 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if not self.a > 0:
            raise ParameterError(f"a must be > 0, got {self.a}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "p_bar", p_bar)
        object.__setattr__(self, "gamma_q", gamma_q)

    @property
    def q_gamma(self):
        return self.q * self.gamma_q

    @property
    def mass_exponent(self):
        """Exponent of ``a`` in the regime quantity ``mu * a**(q(1-gamma_q)/2)``."""
        return self.q * (1.0 - self.gamma_q) / 2.0

    @property
    def dynamics_admissible(self):
        """True when p_bar >= 2, the regime in which the flow is treated."""
        return self.p_bar >= 2.0 - 1e-12

    def with_mass(self, a):
        return replace(self, a=float(a))

    def to_dict(self):
        return {"N": self.N, "alpha": self.alpha, "mu": self.mu, "a": self.a, "q": self.q,
                "p_bar": self.p_bar, "gamma_q": self.gamma_q}


def sphere_area(N):
    """Surface area of the unit sphere S^{N-1} in R^N."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def riesz_normalization(N, alpha):
    """A_alpha(N) = Gamma((N-alpha)/2) / (Gamma(alpha/2) pi^{N/2} 2^alpha)."""
    if not 0.0 < alpha < N:
        raise ParameterError(f"A_alpha(N) needs 0 < alpha < N, got alpha={alpha}, N={N}")
    log_val = (gammaln((N - alpha) / 2) - gammaln(alpha / 2)
               - (N / 2) * math.log(math.pi) - alpha * math.log(2.0))
    return math.exp(log_val)


def hls_sharp_constant(N, beta, p=None):
    """Sharp Hardy-Littlewood-Sobolev constant C_beta(N) in the diagonal case.

    Only ``p = r = 2N/(N+beta)`` admits the closed form, so any other ``p``
    is rejected.
    """
    if not 0.0 < beta < N:
        raise ParameterError(f"C_beta(N) needs 0 < beta < N, got beta={beta}, N={N}")
    if p is not None and not math.isclose(p, 2 * N / (N + beta), rel_tol=1e-12):
        raise NotImplementedError("only the diagonal exponent p = r = 2N/(N+beta) is supported")
    log_val = ((N - beta) / 2 * math.log(math.pi) + gammaln(beta / 2) - gammaln((N + beta) / 2)
               - (beta / N) * (gammaln(N / 2) - gammaln(N)))
    return math.exp(log_val)


def aubin_talenti(r, N, eps=1.0):
    """Aubin-Talenti profile U_eps(r) = (N(N-2)eps^2)^{(N-2)/4} / (eps^2 + r^2)^{(N-2)/2}."""
    r = np.asarray(r, dtype=float)
    return (N * (N - 2) * eps**2) ** ((N - 2) / 4) / (eps**2 + r**2) ** ((N - 2) / 2)


def aubin_talenti_slope(r, N, eps=1.0):
    r = np.asarray(r, dtype=float)
    c = (N * (N - 2) * eps**2) ** ((N - 2) / 4)
    return -(N - 2) * c * r / (eps**2 + r**2) ** (N / 2)


def _half_line_rule(n):
    """Gauss-Legendre rule on (0, inf) through r = t/(1-t)^2 -> smooth algebraic tails."""
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * w
    r = t / (1.0 - t) ** 2
    dr = (1.0 + t) / (1.0 - t) ** 3
    return r, wt * dr


def _sobolev_quotient(N, n):
    r, w = _half_line_rule(n)
    crit = 2 * N / (N - 2)
    grad = np.sum(w * aubin_talenti_slope(r, N) ** 2 * r ** (N - 1))
    pot = np.sum(w * aubin_talenti(r, N) ** crit * r ** (N - 1))
    # the sphere area cancels only partially: quotient has homogeneity 1 - (N-2)/N
    omega = sphere_area(N)
    return omega * grad / (omega * pot) ** ((N - 2) / N)


def sobolev_constant(N, tol=1e-8):
    """Best Sobolev constant S, from the Rayleigh quotient of U_1.

    The quotient is evaluated with a mapped Gauss-Legendre rule at two
    resolutions; disagreement above ``tol`` raises :class:`AccuracyError`.
    """
    if int(N) != N or N < 3:
        raise ParameterError(f"N must be an integer >= 3, got {N}")
    coarse = _sobolev_quotient(N, 400)
    fine = _sobolev_quotient(N, 800)
    achieved = abs(fine - coarse) / abs(fine)
    if achieved > tol:
        raise AccuracyError(f"Sobolev quotient quadrature did not converge (rel. diff {achieved:.2e})",
                            achieved=achieved)
    return float(fine)


def gn_prefactor(N, q):
    """Explicit factor of C_{N,q}^q multiplying ||Q_q||_2^{-(q-2)}."""
    c = 2 * N + (2 - N) * q
    return (2 * q / c) * (c / (N * (q - 2))) ** (N * (q - 2) / 4)


def gn_constant(N, q, Q_mass):
    """Sharp Gagliardo-Nirenberg constant C_{N,q} given ||Q_q||_2^2."""
    if not Q_mass > 0:
        raise ParameterError(f"Q_mass must be positive, got {Q_mass}")
    crit = math.inf if N <= 2 else 2 * N / (N - 2)
    if not 2 < q < crit:
        raise ParameterError(f"q must satisfy 2 < q < 2*, got {q}")
    cq = gn_prefactor(N, q) / Q_mass ** ((q - 2) / 2)
    return cq ** (1.0 / q)


@dataclass(frozen=True)
class SharpConstants:
    A_alpha: float
    C_alpha: float
    S: float
    S_alpha: float
    C_Nq: float
    K: float
    rho0: float
    a0: float
    Q_mass: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: float(data[k]) for k in cls.__dataclass_fields__})

    def energy_gap_bound(self, params):
        """(2+alpha)/(2(N+alpha)) * S_alpha^{(N+alpha)/(2+alpha)}."""
        N, alpha = params.N, params.alpha
        return (2 + alpha) / (2 * (N + alpha)) * self.S_alpha ** ((N + alpha) / (2 + alpha))


def threshold_rhs(params, K):
    """(2K)^{(q gamma_q - 2 p_bar) / (2 (p_bar - 1))}."""
    pb = params.p_bar
    return (2 * K) ** ((params.q_gamma - 2 * pb) / (2 * (pb - 1)))


def threshold_constants(params, A_alpha, C_alpha, S, S_alpha, C_Nq, Q_mass=float("nan")):
    """Fill K, rho0 and a0 from the already computed sharp constants."""
    pb, qg, q = params.p_bar, params.q_gamma, params.q
    cq = C_Nq**q
    K = ((2 * pb - qg) / (2 * pb * (2 - qg) * S_alpha**pb)
         * (pb * (2 - qg) * cq * S_alpha**pb / (q * (pb - 1))) ** ((2 * pb - 2) / (2 * pb - qg)))
    rho0 = (pb * (2 - qg) * S_alpha**pb / (2 * pb - qg)) ** (1.0 / (pb - 1))
    rhs = threshold_rhs(params, K)
    a0 = (rhs / params.mu) ** (1.0 / params.mass_exponent)
    return SharpConstants(A_alpha=float(A_alpha), C_alpha=float(C_alpha), S=float(S), S_alpha=float(S_alpha),
                          C_Nq=float(C_Nq), K=float(K), rho0=float(rho0), a0=float(a0), Q_mass=float(Q_mass))


def compute_constants(params, Q_mass=None):
    """Run the full constants pipeline for ``params``.

    ``Q_mass`` defaults to the value produced by the radial shooting solver.
    """
    N, alpha = params.N, params.alpha
    A = riesz_normalization(N, alpha)
    C = hls_sharp_constant(N, alpha)
    S = sobolev_constant(N)
    S_alpha = S / (A * C) ** (1.0 / params.p_bar)
    if Q_mass is None:
        from .solvers.scalar import scalar_ground_state_mass
        Q_mass = scalar_ground_state_mass(N, params.q)
    C_Nq = gn_constant(N, params.q, Q_mass)
    return threshold_constants(params, A, C, S, S_alpha, C_Nq, Q_mass=Q_mass)


def f_mu_a(params, consts, rho):
    """Lower-bound profile f_{mu,a}(rho) with E(u) >= ||grad u||^2 f(||grad u||^2)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ParameterError("f_mu_a is defined for rho > 0 only")
    pb, qg, q = params.p_bar, params.q_gamma, params.q
    return (0.5 - consts.S_alpha ** (-pb) * rho ** (pb - 1) / (2 * pb)
            - params.mu / q * consts.C_Nq**q * params.a**params.mass_exponent * rho ** ((qg - 2) / 2))


def rho_mu_a(params, consts):
    """Unique maximiser of f_{mu,a}."""
    pb, qg, q = params.p_bar, params.q_gamma, params.q
    inner = (pb * params.mu * (2 - qg) / (q * (pb - 1)) * consts.C_Nq**q
             * params.a**params.mass_exponent * consts.S_alpha**pb)
    return inner ** (2.0 / (2 * pb - qg))


def f_max_closed_form(params, consts):
    """1/2 - K (mu a^{q(1-gamma_q)/2})^{2(p_bar-1)/(2 p_bar - q gamma_q)}."""
    pb, qg = params.p_bar, params.q_gamma
    lhs = params.mu * params.a**params.mass_exponent
    return 0.5 - consts.K * lhs ** (2 * (pb - 1) / (2 * pb - qg))


@dataclass(frozen=True)
class RegimeReport:
    regime: str
    lhs: float
    rhs: float
    fmax: float
    rho_max: float

    def to_dict(self):
        return asdict(self)


def classify_regime(params, consts, rtol=OMEGA2_RTOL):
    lhs = params.mu * params.a**params.mass_exponent
    rhs = threshold_rhs(params, consts.K)
    rho_max = rho_mu_a(params, consts)
    fmax = float(f_mu_a(params, consts, rho_max))
    if abs(lhs - rhs) <= rtol * rhs:
        regime = "Omega2"
    elif lhs < rhs:
        regime = "Omega1"
    else:
        regime = "Omega3"
    return RegimeReport(regime=regime, lhs=lhs, rhs=rhs, fmax=fmax, rho_max=rho_max)


def mass_threshold(mu, params, consts):
    """a0 for an arbitrary mu at fixed (N, alpha, q)."""
    return (threshold_rhs(params, consts.K) / mu) ** (1.0 / params.mass_exponent)
