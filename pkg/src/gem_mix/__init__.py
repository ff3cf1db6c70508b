"""Gradient EM for isotropic Gaussian mixtures with known weights.

Population and sample gradient EM, closed-form convergence constants,
Monte-Carlo estimates of the uniform gradient deviation, and a config-driven
experiment runner.
"""

from .bounds import (
    BoundReport,
    CertificateError,
    bound_report,
    contraction_radius,
    eps_unif,
    gamma_gs,
    restart_count,
    verify_gs_empirical,
    zeta_rate,
)
from .em import (
    GradientEstimate,
    Trajectory,
    match_components,
    oracle_gradient_q,
    population_gradient,
    run_gradient_em,
    sample_gradient,
    stochastic_em_run,
)
from .empirical import SupEstimate, empirical_rademacher, scaling_study, sup_gradient_deviation
from .gaussian import gaussian_norm_moment, gaussian_norm_tail, mixture_subgaussian_norm, sphere_covering_bound
from .mixture import (
    MixtureConfig,
    Sample,
    SeparationStats,
    center_means,
    log_density,
    responsibilities,
    sample,
    separation_stats,
)

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "CertificateError",
    "GradientEstimate",
    "MixtureConfig",
    "Sample",
    "SeparationStats",
    "SupEstimate",
    "Trajectory",
    "bound_report",
    "center_means",
    "contraction_radius",
    "empirical_rademacher",
    "eps_unif",
    "gamma_gs",
    "gaussian_norm_moment",
    "gaussian_norm_tail",
    "log_density",
    "match_components",
    "mixture_subgaussian_norm",
    "oracle_gradient_q",
    "population_gradient",
    "responsibilities",
    "restart_count",
    "run_gradient_em",
    "sample",
    "sample_gradient",
    "scaling_study",
    "separation_stats",
    "sphere_covering_bound",
    "stochastic_em_run",
    "sup_gradient_deviation",
    "verify_gs_empirical",
    "zeta_rate",
]
