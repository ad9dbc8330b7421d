"""Hermite-Galerkin spectral toolkit for the homogeneous Landau equation
linearized near a unit Maxwellian.

Modules:
    hermite_core   basis algebra, coefficient tensors, ladder operators
    kernel         collision kernel matrix, diffusion profiles, expansions
    operators      linearized operators L1, L2 and the bilinear form Gamma
    inequalities   identity and inequality verification harnesses
    solver         implicit-explicit time stepping and conservation checks
    diagnostics    Gevrey radius fits and smoothing-effect diagnostics
    cli            command line entry point
"""

__version__ = "0.1.0"
