"""Kernel-based solvers for 1D compressible Navier-Stokes with discontinuous specific volume."""

__version__ = "0.1.0"
