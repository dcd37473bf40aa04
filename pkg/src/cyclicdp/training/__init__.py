from .backend import BACKEND_NAME, kernels, load_backend
from .engine import (
    ExperimentResult,
    RuleRun,
    VersionedParams,
    grad_stagewise,
    run_experiment,
    schedule_consistency_check,
    step_cdp,
    step_dp,
)
from .models import (
    CoupledQuadratic,
    NonFiniteGradientError,
    StageMlp,
    ToyTask,
    least_squares_optimum,
    make_mlp_task,
    make_quadratic_task,
)

__all__ = [
    "BACKEND_NAME",
    "kernels",
    "load_backend",
    "ExperimentResult",
    "RuleRun",
    "VersionedParams",
    "grad_stagewise",
    "run_experiment",
    "schedule_consistency_check",
    "step_cdp",
    "step_dp",
    "CoupledQuadratic",
    "NonFiniteGradientError",
    "StageMlp",
    "ToyTask",
    "least_squares_optimum",
    "make_mlp_task",
    "make_quadratic_task",
]
