"""Parallel-in-time diffusion solver for a brick-and-mortar membrane benchmark."""

from .discretization import BoundarySpec, StateVector, StencilOperator, assemble, face_coefficient
from .grid import (
    BrickMortarSpec,
    CoefficientField,
    Grid3D,
    build_brick_mortar,
    effective_coefficient_1d,
    lag_time,
    uniform_field,
)
from .multigrid import MGConfig, MGHierarchy, build_hierarchy
from .parareal import (
    PararealConfig,
    PararealTrace,
    defect,
    defect_table,
    discretization_error_estimate,
    run_parareal,
    run_serial_fine,
)
from .perf_model import (
    CostProfile,
    SpeedupEstimate,
    imbalance_scenario,
    speedup_general,
    speedup_simple,
    validate_model,
    weak_scaling_efficiency,
)
from .propagators import CostRecord, Propagator, PropagatorSpec

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "BrickMortarSpec",
    "CoefficientField",
    "CostProfile",
    "CostRecord",
    "Grid3D",
    "MGConfig",
    "MGHierarchy",
    "PararealConfig",
    "PararealTrace",
    "Propagator",
    "PropagatorSpec",
    "SpeedupEstimate",
    "StateVector",
    "StencilOperator",
    "assemble",
    "build_brick_mortar",
    "build_hierarchy",
    "defect",
    "defect_table",
    "discretization_error_estimate",
    "effective_coefficient_1d",
    "face_coefficient",
    "imbalance_scenario",
    "lag_time",
    "run_parareal",
    "run_serial_fine",
    "speedup_general",
    "speedup_simple",
    "uniform_field",
    "validate_model",
    "weak_scaling_efficiency",
]
