"""Poisson cluster and Hawkes processes: exact simulation, large-deviation
rate functions, and Monte Carlo checks of their limit theorems."""

from .distributions import (
    BorelLaw,
    ClusterSizeCapError,
    ClusterSizeLaw,
    DomainError,
    TablePmf,
    borel_pmf,
    domain_sup,
    mgf,
    mgf_derivative,
    sample_cluster_size,
)
from .ratefn import (
    PiecewiseLinearPath,
    ScalarRate,
    cgf,
    finite_dim_rate,
    hawkes_rate,
    legendre,
    path_rate,
    tilt,
)
from .simulate import (
    Exponential,
    TablePdf,
    TemporalSpec,
    UniformOn,
    count_in_interval,
    count_path,
    sample_cluster,
    simulate_truncated,
    surrogate_compound,
)
from .spatial import Gaussian, SpatialSpec, UniformBall, count_in_ball, estimate_void, empty_space, omega_d, simulate_spatial

__version__ = "0.1.0"
