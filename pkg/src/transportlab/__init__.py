"""Numerical laboratory for transport coefficients of Langevin dynamics on
periodic domains: NEMD, Green-Kubo and Girsanov-martingale estimators,
splitting integrators, and quadrature / finite-difference oracles."""

__version__ = "0.1.0"
CONFIG_SCHEMA_VERSION = 1

from .model import (  # noqa: F401
    ForcingSpec,
    OverdampedState,
    PhaseState,
    PhysicalParams,
    PotentialModel,
    TorusDomain,
)
from .integrators import IntegratorRun, SchemeSpec, replica_rng  # noqa: F401
from .estimators import EstimatorResult, LinearResponseFit  # noqa: F401
