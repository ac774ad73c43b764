"""(mu/mu_I, lambda)-CSA-ES with projection repair on a conically constrained
linear problem: simulation, one-generation theory, mean-value iteration and
steady-state analysis."""

__version__ = "0.1.0"

from .cone import AxisCoords, ConeSpec, axis_coords, is_feasible, project_onto_cone
from .es import (
    DynamicsSeries,
    EsConfig,
    GenerationSample,
    LocalMeasures,
    average_series,
    one_generation_experiment,
    run_batch,
    run_es,
    tail_statistics,
)
from .meanvalue import ClosedForm, Experimental, MeanState, iterate, step
from .steady import SsRegime, SteadyState, sigma_ss_closed, solve_sigma_ss_numeric, steady_state
from .theory import TheoryParams, TheoryState, progress_coefficient, progress_rates

__all__ = [
    "AxisCoords",
    "ClosedForm",
    "ConeSpec",
    "DynamicsSeries",
    "EsConfig",
    "Experimental",
    "GenerationSample",
    "LocalMeasures",
    "MeanState",
    "SsRegime",
    "SteadyState",
    "TheoryParams",
    "TheoryState",
    "average_series",
    "axis_coords",
    "is_feasible",
    "iterate",
    "one_generation_experiment",
    "progress_coefficient",
    "progress_rates",
    "project_onto_cone",
    "run_batch",
    "run_es",
    "sigma_ss_closed",
    "solve_sigma_ss_numeric",
    "steady_state",
    "step",
    "tail_statistics",
]
