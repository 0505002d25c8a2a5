"""Distributed stochastic nonconvex optimization by successive convex approximation."""

from .algorithm import (
    AgentState,
    DecaySequence,
    IterationMetrics,
    NetworkState,
    SCAConfig,
    StepSchedule,
    StopRule,
    consensus_error,
    initialize,
    never,
    run,
    stationarity_measure,
    step,
)
from .graph import (
    Topology,
    complete_graph,
    metropolis_weights,
    path_graph,
    random_connected_graph,
    ring_graph,
    validate_weights,
)
from .problem import (
    ProblemInstance,
    full_objective,
    make_nn_regression_instance,
    make_quadratic_instance,
    pooled,
)

__version__ = "0.1.0"
