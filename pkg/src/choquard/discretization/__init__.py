"""Radial spectral-element grid, radial Riesz kernel and the periodic 3-D box."""
from .cartesian import CartesianGrid3, CartesianRiesz, fourier_riesz_multiplier
from .radial import RadialField, RadialGrid, build_radial_grid, radial_laplacian, rescale_field
from .riesz import RieszKernel, build_riesz_kernel, riesz_convolve

__all__ = ["CartesianGrid3", "CartesianRiesz", "fourier_riesz_multiplier", "RadialField", "RadialGrid",
           "build_radial_grid", "radial_laplacian", "rescale_field", "RieszKernel", "build_riesz_kernel",
           "riesz_convolve"]
