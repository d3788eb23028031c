"""Simulate, measure, decompose and correct identity-fragmentation bias in linear regression."""

from .biascalc import (
    BiasDecomposition,
    bias_common,
    bias_common_J,
    bias_common_scalar,
    bias_device_specific_J,
    bias_device_specific_split,
    bias_device_specific_stacked,
    check_stc,
    correlation_diagnostic,
    vartheta_common,
    vartheta_device_specific,
)
from .correctives import aggregate_strata, debias_stc, estimate_aggregated, sweep_mixed
from .datagen import DGPConfig, ExposureSpec, Population, PreferenceSpec, attach_strata, generate_population
from .errors import ConfigError, FraglabError, ParseError, SingularDesignError, STCViolation
from .estimators import EstimateReport, estimate_fragmented, estimate_mixed, estimate_true, ols
from .fragmentation import AssignmentMatrix, FragmentedDataset, draw_assignment, fragment, stack
from .montecarlo import MCFixture, MCReport, run_monte_carlo
from .scenarios import ScenarioConfig, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AssignmentMatrix", "BiasDecomposition", "ConfigError", "DGPConfig", "EstimateReport", "ExposureSpec",
    "FraglabError", "FragmentedDataset", "MCFixture", "MCReport", "ParseError", "Population", "PreferenceSpec",
    "STCViolation", "ScenarioConfig", "SingularDesignError", "aggregate_strata", "attach_strata", "bias_common",
    "bias_common_J", "bias_common_scalar", "bias_device_specific_J", "bias_device_specific_split",
    "bias_device_specific_stacked", "check_stc", "correlation_diagnostic", "debias_stc", "draw_assignment",
    "estimate_aggregated", "estimate_fragmented", "estimate_mixed", "estimate_true", "fragment",
    "generate_population", "ols", "run_monte_carlo", "run_scenario", "stack", "sweep_mixed", "vartheta_common",
    "vartheta_device_specific",
]
