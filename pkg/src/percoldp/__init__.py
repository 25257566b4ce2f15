"""Quenched large deviations for random walks on periodized percolation clusters.

Finite-torus laboratory: environments and giant clusters, walk kernels,
pair measures, the entropy functional and its variational value, tilted
transfer operators, gradient fields with correctors, and a CLI.
"""

from .gradient import (
    GradientField,
    corrector,
    from_potential,
    lambda_value,
    minimize_lambda,
    perron_field,
    sublinearity_scan,
    validate,
    zero_field,
)
from .env import (
    Environment,
    LatticeTorus,
    chemdist_survey,
    chemical_distance,
    condition_on_origin,
    density_count,
    giant_cluster,
    label_clusters,
    sample_environment,
    translate,
)
from .errors import (
    AdmissibilityError,
    ConditioningError,
    ConvergenceError,
    DegenerateClusterError,
    NumericError,
    ParameterError,
    PercolError,
    StructureError,
)
from .kernel import TransitionKernel, beta_kernel, mean_velocity, simulate, srw_kernel, tilt_from_potential
from .pair import KernelDensityPair, PairMeasure, ergodic_average, in_m1_star, kdp_from, marginals, pair_empirical, pair_from
from .rate import constrained_rate, convexity_probe, entropy_I, h_bar, level1_rate, xi_contraction
from .spectral import build_tilted, finite_n_mgf, log_perron, mc_mgf, stationary
from .tilts import ConstantTilt, LinearTilt, TableTilt, WindowTilt, as_tilt

__all__ = [name for name in dir() if not name.startswith("_")]
