"""Cascading-collision value-at-risk for delayed, noisy vehicle platoons."""

__version__ = "0.1.0"

from .errors import (
    DegenerateCorrelationError,
    GraphConstructionError,
    InsufficientSamplesError,
    InvalidParameterError,
    NumericalFailureError,
    PlatoonRiskError,
    ScenarioParseError,
    SimulationDivergenceError,
    StabilityDomainError,
)
from .graph import (
    EigenStructure,
    WeightedGraph,
    analytic_spectrum,
    build_complete,
    build_family,
    build_path,
    build_pcycle,
    eigendecompose,
    from_edge_list,
    graph_eigenstructure,
    laplacian,
)
from .risk import (
    RiskTag,
    RiskValue,
    cascading_risk,
    iota,
    kappa,
    kappa_objective,
    risk_vector,
    single_risk,
)
from .spectral import (
    DistanceStatistics,
    PlatoonConfig,
    conditional_distribution,
    correlation,
    distance_covariance,
    mode_integral,
)
from .stability import StabilityReport, in_stability_set, platoon_is_stable, s2_bound, solve_a
from .simulator import SimulationPlan, estimate_statistics, simulate

__all__ = [name for name in dir() if not name.startswith("_")]
