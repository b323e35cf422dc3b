"""Limits and CLTs for spiked eigenvalues and eigenvectors of sample covariance
and sample correlation matrices, with a Monte Carlo verification harness."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BelowPhaseTransition,
    DomainError,
    InputError,
    InsufficientData,
    NumericalError,
    SeparationError,
    SolverError,
    SpikeLimitsError,
)
from .model import (  # noqa: E402
    BulkSpectrum,
    PopulationModel,
    SpikeSet,
    build_equicorrelation,
    build_general,
    bulk_esd,
    validate,
)
from .rmt import RmtPoint, phi_suite, solve_stieltjes  # noqa: E402
from .limits import (  # noqa: E402
    eigenvalue_clt_block,
    eigenvalue_limit,
    eigvec_limit,
    eigvec_variance,
    normalization_effect,
    projection_context,
    simple_spike_joint_cov,
)
from .simulate import SourceDistribution  # noqa: E402

__all__ = [
    "BelowPhaseTransition",
    "BulkSpectrum",
    "DomainError",
    "InputError",
    "InsufficientData",
    "NumericalError",
    "PopulationModel",
    "RmtPoint",
    "SeparationError",
    "SolverError",
    "SourceDistribution",
    "SpikeLimitsError",
    "SpikeSet",
    "build_equicorrelation",
    "build_general",
    "bulk_esd",
    "eigenvalue_clt_block",
    "eigenvalue_limit",
    "eigvec_limit",
    "eigvec_variance",
    "normalization_effect",
    "phi_suite",
    "projection_context",
    "simple_spike_joint_cov",
    "solve_stieltjes",
    "validate",
]
