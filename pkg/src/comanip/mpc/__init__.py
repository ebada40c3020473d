from .engine import MpcEngine
from .problem import (
    FORCE_LIMIT,
    DecisionVariables,
    MpcProblem,
    SolverConfig,
    Variants,
    Weights,
    build_problem,
    expected_objective,
    risk_objective,
    stage_cost,
)
from .solver import Infeasible, MpcSolution, SolverStats, solve

__all__ = [
    "FORCE_LIMIT",
    "DecisionVariables",
    "Infeasible",
    "MpcEngine",
    "MpcProblem",
    "MpcSolution",
    "SolverConfig",
    "SolverStats",
    "Variants",
    "Weights",
    "build_problem",
    "expected_objective",
    "risk_objective",
    "solve",
    "stage_cost",
]
