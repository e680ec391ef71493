"""Real Ginibre spectra conditioned on the number of real eigenvalues.

Modules
-------
core          configurations, measures, manifests, RNG streams
potential     two-phase log-gas energy and its gradient
gasdyn        Langevin / gradient-flow dynamics and energy minimization
mcmc          Metropolis-Hastings sampler of the conditioned ensemble
matrix_oracle direct random-matrix experiments
ratefn        rate function, constrained minima, y*, stationarity checks
analysis      histograms, support boundaries, gaps
"""
from .core import (CollisionError, EmpiricalMeasure, GasParams, ParityError, RunManifest,
                   SpectralConfiguration, SpectrumError, check_parity, k_for_alpha,
                   make_configuration, to_measure)
from .potential import grad_energy, total_energy
from .gasdyn import evolve, relax, relax_to_minimum
from .mcmc import log_target_density, sample_chain
from .matrix_oracle import conditional_ensemble, count_real, eigenvalues, estimate_pnk
from .ratefn import minimum_estimate, rate_function, solve_ystar
from .analysis import axis_gap, complex_support, real_histogram

__version__ = "0.1.0"

__all__ = [
    "CollisionError", "EmpiricalMeasure", "GasParams", "ParityError", "RunManifest",
    "SpectralConfiguration", "SpectrumError", "check_parity", "k_for_alpha",
    "make_configuration", "to_measure", "grad_energy", "total_energy", "evolve", "relax",
    "relax_to_minimum", "log_target_density", "sample_chain", "conditional_ensemble",
    "count_real", "eigenvalues", "estimate_pnk", "minimum_estimate", "rate_function",
    "solve_ystar", "axis_gap", "complex_support", "real_histogram",
]
