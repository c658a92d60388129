"""Riesz potential I_alpha * f for radial f through the radial Fourier transform.

For radial f the Fourier transform is
``fhat(k) = int f(r) Lambda(k r) dmu(r)`` with
``Lambda(z) = Gamma(N/2) (2/z)^{N/2-1} J_{N/2-1}(z)`` and dmu the radial
measure, and I_alpha is the multiplier ``|k|^{-alpha}``.  Both transforms
are discretised by quadrature, so the kernel matrix factors as
``W^{-1} T^T diag(c) T`` which is exactly self-adjoint in the grid inner
product.  The k-integral uses a Gauss-Jacobi panel absorbing the
``k^{N-1-alpha}`` behaviour at the origin followed by Gauss-Legendre panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, jv, roots_jacobi

from ..model import riesz_normalization, sphere_area
from .radial import GridError, RadialField

PANEL_NODES = 16


def radial_fourier_kernel(z, N):
    """Lambda(z) = Gamma(N/2) (2/z)^{N/2-1} J_{N/2-1}(z), the angular average of e^{i k.x}."""
    z = np.asarray(z, dtype=float)
    nu = N / 2 - 1
    out = np.ones_like(z)
    nz = z > 1e-8
    if N == 3:
        out[nz] = np.sin(z[nz]) / z[nz]
    else:
        zz = z[nz]
        out[nz] = math.exp(gammaln(N / 2)) * (2.0 / zz) ** nu * jv(nu, zz)
    small = ~nz
    # series 1 - z^2/(2N) covers the origin for every N
    out[small] = 1.0 - z[small] ** 2 / (2 * N)
    return out


def wavenumber_rule(N, alpha, R, k_max, panel_width=None, nodes=PANEL_NODES):
    """Nodes and weights for ``int_0^{k_max} g(k) k^{N-1-alpha} dk``.

    Panels have width ``panel_width`` (default 3 pi / R, i.e. a few
    oscillations of Lambda(k R) per panel).
    """
    if panel_width is None:
        panel_width = 3.0 * math.pi / R
    beta = N - 1 - alpha
    n_pan = max(1, int(math.ceil(k_max / panel_width)))
    edges = np.linspace(0.0, n_pan * panel_width, n_pan + 1)
    xj, wj = roots_jacobi(nodes, 0.0, beta)
    h0 = edges[1]
    k_first = h0 * (1 + xj) / 2
    c_first = (h0 / 2) ** (beta + 1) * wj
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    a = edges[1:-1, None]
    h = np.diff(edges)[1:, None]
    k_rest = (a + h * (1 + xg[None, :]) / 2).ravel()
    c_rest = ((h / 2) * wg[None, :]).ravel() * k_rest**beta
    return np.concatenate((k_first, k_rest)), np.concatenate((c_first, c_rest))


@dataclass(eq=False)
class RieszKernel:
    """Dense kernel ``matrix`` with ``(I_alpha * f)(r_i) = matrix[i] @ f``."""

    grid: object
    alpha: float
    matrix: np.ndarray = field(repr=False)
    k_max: float = 0.0
    n_k: int = 0

    def apply(self, f):
        if f.shape != (self.grid.size,):
            raise GridError(f"field of shape {f.shape} does not match kernel grid ({self.grid.size})")
        return self.matrix @ f


def default_k_max(grid, factor=4.0):
    """Cut-off ``factor * order / h_min``: well past what the finest element resolves."""
    return factor * grid.order / grid.h_min


def _oversampled_transform_factors(grid, oversample):
    """Quadrature points, weights and interpolation matrix for integrating the
    element-wise polynomial interpolant of nodal data against the radial measure.
    """
    N, P = grid.N, grid.order
    Q = oversample * P
    xg, wg = np.polynomial.legendre.leggauss(Q)
    xj, wj = roots_jacobi(Q, 0.0, float(N - 1))
    omega = sphere_area(N)
    pts, wts, rows, cols, vals = [], [], [], [], []
    offset = 0
    for e, (idx, _, (xn, lam, a, h)) in enumerate(grid._elements):
        if e == 0:
            x, wq = xj, omega * (h / 2) ** N * wj
        else:
            x = xg
            wq = omega * (h / 2) * wg * (a + h * (1 + xg) / 2) ** (N - 1)
        diff = x[:, None] - xn[None, :]
        L = lam[None, :] / diff
        L /= L.sum(axis=1, keepdims=True)
        pts.append(a + h * (1 + x) / 2)
        wts.append(wq)
        ii, jj = np.meshgrid(np.arange(offset, offset + x.size), idx, indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(L.ravel())
        offset += x.size
    from scipy import sparse
    interp = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(offset, grid.size)).tocsr()
    return np.concatenate(pts), np.concatenate(wts), interp


def build_riesz_kernel(grid, alpha, k_max=None, panel_width=None, oversample=3, chunk=1024):
    """Assemble the Riesz kernel matrix on a radial grid.

    The forward transform integrates the element-wise interpolant of the
    nodal data with ``oversample * order`` Gauss points per element, which
    keeps the transform free of aliasing up to the cut-off.  The result is
    the lumped Galerkin form ``W^{-1} T^T diag(c) T``.

    Parameters
    ----------
    grid : RadialGrid
    alpha : float
        Riesz order, 0 < alpha < N.
    k_max : float, optional
        Wavenumber cut-off; defaults to ``4 * order / h_min``.
    panel_width : float, optional
        Width of the Gauss-Legendre panels in k.
    """
    N = grid.N
    if not 0 < alpha < N:
        raise GridError(f"alpha must lie in (0, N) for the Riesz kernel, got {alpha}")
    if k_max is None:
        k_max = default_k_max(grid)
    k, c = wavenumber_rule(N, alpha, grid.R, k_max, panel_width)
    c = c * sphere_area(N) / (2 * math.pi) ** N
    rho, wq, interp = _oversampled_transform_factors(grid, oversample)
    interp_T = interp.T.tocsr()
    S = np.zeros((grid.size, grid.size))
    for s in range(0, k.size, chunk):
        B = radial_fourier_kernel(np.outer(k[s:s + chunk], rho), N) * wq[None, :]
        T = (interp_T @ B.T).T
        S += T.T @ (c[s:s + chunk, None] * T)
    S = 0.5 * (S + S.T)
    return RieszKernel(grid=grid, alpha=float(alpha), matrix=S / grid.w[:, None], k_max=float(k_max),
                       n_k=int(k.size))


def riesz_convolve(kernel, f):
    """(I_alpha * f) on the kernel's grid for a :class:`RadialField` or array."""
    if isinstance(f, RadialField):
        if f.grid is not kernel.grid:
            raise GridError("field and kernel live on different grids")
        return RadialField(kernel.grid, kernel.apply(f.values))
    return kernel.apply(np.asarray(f))


def angular_kernel_closed_form(r, s, N, alpha):
    """Spherical mean of A_alpha |x - y|^{alpha-N} over |y| = s at |x| = r.

    With grid weights that include the sphere area, ``sum_j w_j G(r_i, r_j) f_j``
    is the convolution.  Serves as an independent oracle away from r = s.
    """
    from scipy.special import beta as beta_fn, hyp2f1
    A = riesz_normalization(N, alpha)
    r, s = np.broadcast_arrays(np.asarray(r, float), np.asarray(s, float))
    big, small = np.maximum(r, s), np.minimum(r, s)
    t = small / big
    b = (N - alpha) / 2
    ang = sphere_area(N - 1) * beta_fn((N - 1) / 2, 0.5) * hyp2f1(b, b - (N - 2) / 2, N / 2, t**2)
    return A * big ** (alpha - N) * ang / sphere_area(N)
