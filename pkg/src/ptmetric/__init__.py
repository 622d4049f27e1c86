"""Metric-consistent dynamics for pseudo-Hermitian Hamiltonians."""

from .errors import PtMetricError
from .metric import MetricBuildOptions, MetricOperator, SpectralRegime, build_metric, classify_regime
from .model import ModelParams, PreparedState, closed_metric, derive, hamiltonian, initial_state
from .dynamics import (
    Snapshot,
    Trace,
    asymptotic_sp,
    closed_form_snapshot,
    evolve,
    expectation,
    numeric_snapshot,
    numeric_trace,
    survival_probability,
    uncertainty_gap,
)

__version__ = "0.1.0"

__all__ = [
    "PtMetricError",
    "MetricBuildOptions",
    "MetricOperator",
    "SpectralRegime",
    "build_metric",
    "classify_regime",
    "ModelParams",
    "PreparedState",
    "closed_metric",
    "derive",
    "hamiltonian",
    "initial_state",
    "Snapshot",
    "Trace",
    "asymptotic_sp",
    "closed_form_snapshot",
    "evolve",
    "expectation",
    "numeric_snapshot",
    "numeric_trace",
    "survival_probability",
    "uncertainty_gap",
    "__version__",
]
