"""Numerical laboratory for signed interacting-particle systems on the flat
torus and their continuum density limits.

Modules
-------
torus         geometry of T^d (wrapping, nearest images, distances)
kernels       interaction kernels, external potentials, assumption checks
dynamics      particle gradient flow, dipole coordinates, stiff integrator
pde           upwind finite-volume solver for the density system, diagnostics
metrics       torus 2-Wasserstein distances for empirical and signed measures
initial_data  mass quantization, grid empiricalization, dipole data
experiments   convergence / non-convergence / Gronwall drivers
snapshots     CSV and binary serialization
config        TOML experiment configuration
cli           the `torusdyn` command-line tool
"""

from .dynamics import (DipoleSystem, ParticleSystem, energy, from_dipoles,
                       integrate, integrate_dipoles, to_dipoles, velocity)
from .kernels import (ClosedFormKernel1D, CosinePotential, EdgeCoreField,
                      FourierPotential, SpectralKernel, ZeroPotential,
                      check_assumptions, lambda_delta, make_custom_kernel,
                      make_edge_kernel, make_screw_kernel)
from .metrics import (EmpiricalPair, w2_densities, w2_density_vs_empirical,
                      w2_empirical, w2_signed, w2_signed_bruteforce)
from .pde import DensityPair, entropy, entropy_budget, solve_densities

__all__ = [
    "ClosedFormKernel1D", "CosinePotential", "DensityPair", "DipoleSystem",
    "EdgeCoreField", "EmpiricalPair", "FourierPotential", "ParticleSystem",
    "SpectralKernel", "ZeroPotential", "check_assumptions", "energy",
    "entropy", "entropy_budget", "from_dipoles", "integrate",
    "integrate_dipoles", "lambda_delta", "make_custom_kernel",
    "make_edge_kernel", "make_screw_kernel", "solve_densities", "to_dipoles",
    "velocity", "w2_densities", "w2_density_vs_empirical", "w2_empirical",
    "w2_signed", "w2_signed_bruteforce",
]

__version__ = "0.1.0"
