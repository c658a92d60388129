"""Periodic 3-D box [-L, L)^3 with FFT-based derivatives and Riesz potential."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.special import roots_jacobi

from ..model import riesz_normalization, sphere_area
from .riesz import radial_fourier_kernel

TAIL_MASS_TOL = 1e-8


class BoxError(ValueError):
    """Invalid box or field/box mismatch."""


@dataclass(eq=False)
class CartesianGrid3:
    """Uniform periodic grid with ``n`` points per axis on [-L, L)."""

    L: float
    n: int
    dx: float = field(init=False)

    def __post_init__(self):
        if self.n < 32 or self.n & (self.n - 1):
            raise BoxError(f"n must be a power of two >= 32, got {self.n}")
        if not self.L > 0:
            raise BoxError(f"L must be positive, got {self.L}")
        self.dx = 2.0 * self.L / self.n

    @property
    def x1(self):
        return -self.L + self.dx * np.arange(self.n)

    @property
    def k1(self):
        return 2 * math.pi * sfft.fftfreq(self.n, d=self.dx)

    @property
    def cell(self):
        return self.dx**3

    def radius(self):
        x = self.x1
        return np.sqrt(x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2)

    def r2(self):
        x = self.x1 ** 2
        return x[:, None, None] + x[None, :, None] + x[None, None, :]

    def k2(self):
        k = self.k1 ** 2
        return k[:, None, None] + k[None, :, None] + k[None, None, :]

    def integrate(self, f):
        return np.sum(f) * self.cell

    def norm2(self, f):
        return float(np.sum(np.abs(f) ** 2) * self.cell)

    def kinetic(self, psi):
        """||grad psi||^2 via Parseval."""
        ph = sfft.fftn(psi)
        return float(np.sum(self.k2() * np.abs(ph) ** 2) * self.cell / psi.size)

    dirichlet = kinetic

    def laplacian(self, psi):
        return sfft.ifftn(-self.k2() * sfft.fftn(psi))

    def tail_fraction(self, psi):
        """Fraction of the mass outside |x| > L/2."""
        dens = np.abs(psi) ** 2
        total = dens.sum()
        return float(dens[self.radius() > self.L / 2].sum() / total) if total > 0 else 0.0

    def validate_field(self, psi, tol=TAIL_MASS_TOL):
        if psi.shape != (self.n,) * 3:
            raise BoxError(f"field shape {psi.shape} does not match box ({self.n},)*3")
        frac = self.tail_fraction(psi)
        if frac > tol:
            raise BoxError(f"{frac:.2e} of the mass lies outside |x| > L/2 (limit {tol:.0e}); enlarge the box")
        return frac

    def sample_radial(self, profile):
        """Sample a radial callable ``profile(r)`` on the box."""
        return profile(self.radius())


def truncated_riesz_symbol(kk, alpha, D, N=3, nodes=None):
    """Fourier symbol of A_alpha |x|^{alpha-N} restricted to |x| < D.

    ``A |S^{N-1}| int_0^D rho^{alpha-1} Lambda(k rho) d rho`` evaluated per
    wavenumber with a Gauss-Jacobi rule absorbing rho^{alpha-1}.
    """
    kk = np.asarray(kk, dtype=float)
    if nodes is None:
        nodes = int(max(64, 1.5 * np.max(kk) * D / math.pi + 64))
    t, wt = roots_jacobi(nodes, 0.0, alpha - 1.0)
    s = (1 + t) / 2
    wt = wt / 2**alpha
    pref = riesz_normalization(N, alpha) * sphere_area(N) * D**alpha
    out = np.empty_like(kk)
    chunk = max(1, 2_000_000 // nodes)
    for i in range(0, kk.size, chunk):
        blk = kk.ravel()[i:i + chunk]
        out.ravel()[i:i + chunk] = radial_fourier_kernel(np.outer(blk * D, s), N) @ wt
    return pref * out


@dataclass(eq=False)
class CartesianRiesz:
    """Riesz potential on a box.

    ``mode="free"`` zero-pads to twice the box and uses the exact symbol of
    the kernel truncated at D = 2L, which reproduces the free-space
    convolution for data supported in the ball of radius L.
    ``mode="periodic"`` applies ``|k|^{-alpha}`` with the zero mode removed.
    """

    grid: CartesianGrid3
    alpha: float
    mode: str = "free"
    symbol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        g, a = self.grid, self.alpha
        if not 0 < a < 3:
            raise BoxError("alpha >= 3 has no Riesz multiplier on a 3-D box; use the radial backend")
        if self.mode == "periodic":
            k2 = g.k2()
            with np.errstate(divide="ignore"):
                sym = np.where(k2 > 0, k2 ** (-a / 2), 0.0)
            self.symbol = sym
        elif self.mode == "free":
            m = 2 * g.n
            k1 = 2 * math.pi * sfft.fftfreq(m, d=g.dx)
            k2 = k1[:, None, None] ** 2 + k1[None, :, None] ** 2 + k1[None, None, :m // 2 + 1] ** 2
            uniq, inv = np.unique(k2.ravel(), return_inverse=True)
            vals = truncated_riesz_symbol(np.sqrt(uniq), a, D=2 * g.L)
            self.symbol = vals[inv].reshape(k2.shape)
        else:
            raise BoxError(f"unknown Riesz mode {self.mode!r}")

    def apply(self, f):
        g = self.grid
        if f.shape != (g.n,) * 3:
            raise BoxError("field does not match the box")
        if self.mode == "periodic":
            return sfft.ifftn(self.symbol * sfft.fftn(f)).real
        m = 2 * g.n
        fh = sfft.rfftn(f, s=(m, m, m))
        out = sfft.irfftn(self.symbol * fh, s=(m, m, m))
        return out[:g.n, :g.n, :g.n]


def fourier_riesz_multiplier(grid, alpha, f, mode="free"):
    """One-shot Riesz potential of a real box field (builds the symbol each call)."""
    return CartesianRiesz(grid, alpha, mode).apply(np.asarray(f, dtype=float))


def save_box_field(path, grid, psi):
    """Binary blob preceded by a one-line JSON header (shape, L, dtype)."""
    arr = np.ascontiguousarray(psi, dtype="<c16" if np.iscomplexobj(psi) else "<f8")
    header = json.dumps({"shape": list(arr.shape), "L": grid.L, "dtype": arr.dtype.str}).encode()
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(arr.tobytes())


def load_box_field(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype=header["dtype"]).reshape(header["shape"])
    grid = CartesianGrid3(L=header["L"], n=header["shape"][0])
    return grid, data.copy()
