"""Interacting-particle simulators and 1D cross-diffusion PDE solvers.

Two stochastic particle systems whose many-particle limits are
Shigesada-Kawasaki-Teramoto-type cross-diffusion equations: one carries the
pairwise interaction inside the diffusion coefficient, the other inside the
drift.  The package pairs them with mean-field samplers driven by grid PDE
solutions, local and nonlocal finite-volume solvers, distribution metrics,
and a reproducible experiment runner.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .config import ExperimentConfig, preset
from .kernels import (
    KernelFamily,
    kernel_mass,
    profile_deriv,
    profile_eval,
    scaled_kernel_eval,
    scaled_kernel_grad,
)
from .metrics import (
    DensityEstimate,
    StrongError,
    histogram_density,
    lp_density_error,
    mode_count,
    segregation_overlap,
    strong_error,
    wasserstein2_1d,
)
from .nonlinearity import (
    CustomNonlinearity,
    CutoffNonlinearity,
    Nonlinearity,
    make_cutoff,
    make_nonlinearity,
)
from .particles import (
    GaussianMixture,
    ParticleEnsemble,
    empirical_convolution,
    empirical_grad_convolution,
    interaction_grad_sums,
    interaction_sums,
    sample_initial,
)
from .pde import (
    FieldState,
    grid_convolution,
    interpolate_field,
    inverse_cdf_sample,
    make_initial_field,
    solve,
    stable_step_bound,
    step_local,
    step_nonlocal,
)
from .runner import (
    RunManifest,
    StudyResult,
    convergence_study,
    emit_plot_data,
    run,
)
from .sde import (
    CoupledResult,
    IncrementSource,
    NoisePlan,
    TimeGrid,
    em_step_gradient,
    em_step_meanfield,
    em_step_skt,
    min_particles,
    run_coupled,
)

__all__ = [
    "__version__",
    "CoupledResult",
    "CustomNonlinearity",
    "CutoffNonlinearity",
    "DensityEstimate",
    "ExperimentConfig",
    "FieldState",
    "GaussianMixture",
    "IncrementSource",
    "KernelFamily",
    "Nonlinearity",
    "NoisePlan",
    "ParticleEnsemble",
    "RunManifest",
    "StrongError",
    "StudyResult",
    "TimeGrid",
    "convergence_study",
    "em_step_gradient",
    "em_step_meanfield",
    "em_step_skt",
    "emit_plot_data",
    "empirical_convolution",
    "empirical_grad_convolution",
    "grid_convolution",
    "histogram_density",
    "interaction_grad_sums",
    "interaction_sums",
    "interpolate_field",
    "inverse_cdf_sample",
    "kernel_mass",
    "lp_density_error",
    "make_cutoff",
    "make_initial_field",
    "make_nonlinearity",
    "min_particles",
    "mode_count",
    "preset",
    "profile_deriv",
    "profile_eval",
    "run",
    "run_coupled",
    "sample_initial",
    "scaled_kernel_eval",
    "scaled_kernel_grad",
    "segregation_overlap",
    "solve",
    "stable_step_bound",
    "step_local",
    "step_nonlocal",
    "strong_error",
    "wasserstein2_1d",
]
