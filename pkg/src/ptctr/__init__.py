"""Continuation solver with trust-region time-stepping for ``min f(x) s.t. A x = b``."""

from .baselines import (FlowConfig, PenaltyConfig, gradient_flow_solve, penalty_conditioning,
                        penalty_solve)
from .constraints import (DegenerateConstraintsError, RankPolicy, RawConstraints,
                          ReducedConstraints, apply_projector, project_point, reduce)
from .problems import ObjectiveProblem, analytic_oracle, make_example
from .solver import (IterateRecord, NumericalFailure, SolveReport, SolverConfig, SolverState,
                     Status, solve)

__version__ = "0.1.0"

__all__ = [
    "DegenerateConstraintsError", "FlowConfig", "IterateRecord", "NumericalFailure",
    "ObjectiveProblem", "PenaltyConfig", "RankPolicy", "RawConstraints",
    "ReducedConstraints", "SolveReport", "SolverConfig", "SolverState", "Status",
    "analytic_oracle", "apply_projector", "gradient_flow_solve", "make_example",
    "penalty_conditioning", "penalty_solve", "project_point", "reduce", "solve",
]
