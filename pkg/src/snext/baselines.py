"""
Reference algorithms run under the same harness as S-NEXT.

* ``dsgd``: distributed proximal SGD, adapt-then-combine.
* ``csgd``: centralized proximal SGD on the pooled problem.
* ``csca``: centralized stochastic SCA, i.e. S-NEXT with a single agent
  holding the pooled problem.

All of them read ``xi^t = problem.source.draw(t)``, so runs with the same
seed see identical minibatches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algorithm as alg
from . import problem as pb
from .sca import prox_operator


@dataclass
class BaselineConfig:
    algorithm: str
    schedule: alg.DecaySequence

    def __post_init__(self):
        if self.algorithm not in ("dsgd", "csgd", "csca"):
            raise ValueError(f"unknown baseline {self.algorithm!r}")


@dataclass
class SGDState:
    t: int
    x: np.ndarray
    problem: pb.ProblemInstance
    weights: np.ndarray
    schedule: alg.DecaySequence

    @property
    def x_mean(self):
        return self.x.mean(axis=0)


def dsgd_step(x, problem: pb.ProblemInstance, weights, alpha: float, sample) -> np.ndarray:
    """
    One synchronous adapt-then-combine round::

        x_i <- P_K prox_{(alpha/I) G}( sum_j w_ij (x_j - alpha grad f_j(x_j, xi_j)) )

    The network average follows ``-(alpha/I) grad (F + G)``, so fixed points
    are stationary for ``sum_i f_i + G``. With ``I = 1`` this is plain
    proximal SGD.
    """
    x = np.asarray(x, dtype=float)
    I = problem.agent_count
    W = np.asarray(weights, dtype=float)
    if x.shape != (I, problem.dim) or W.shape != (I, I):
        raise ValueError("dimension mismatch between iterates, weights and problem")
    G = problem.regularizer
    gamma = alpha / I
    mixed = W @ (x - alpha * problem.local_gradients(x, sample))
    if G.smooth:
        # prox then projection: exact for the shipped (l2, box) pairs
        return np.stack([problem.feasible_set.project(G.prox(v, gamma)) for v in mixed])
    backward = prox_operator(G, problem.feasible_set)
    return np.stack([backward(v, gamma) for v in mixed])


def _sgd_advance(state: SGDState) -> SGDState:
    t = state.t
    x = dsgd_step(state.x, state.problem, state.weights, state.schedule(t), state.problem.source.draw(t))
    return SGDState(t + 1, x, state.problem, state.weights, state.schedule)


def dsgd_run(problem: pb.ProblemInstance, weights, schedule: alg.DecaySequence, budget: int, x0=None,
             stop_rule=None, metric_period: int = 1, wallclock: bool = True, on_metrics=None):
    """Run distributed SGD; returns ``(trajectory, final_state)`` like :func:`snext.algorithm.run`."""
    state = SGDState(0, alg._broadcast_x0(problem, x0), problem, np.asarray(weights, dtype=float), schedule)
    return alg.drive(state, _sgd_advance, budget, stop_rule, metric_period, wallclock,
                     on_metrics)


def centralized_sgd_run(problem: pb.ProblemInstance, schedule: alg.DecaySequence, budget: int, x0=None,
                        stop_rule=None, metric_period: int = 1, wallclock: bool = True, on_metrics=None):
    """Proximal SGD on the pooled single-agent problem."""
    central = pb.pooled(problem)
    if x0 is not None and np.ndim(x0) == 2:
        x0 = np.asarray(x0).mean(axis=0)
    return dsgd_run(central, np.ones((1, 1)), schedule, budget, x0, stop_rule, metric_period, wallclock,
                    on_metrics)


def centralized_sca_run(problem: pb.ProblemInstance, schedule: alg.StepSchedule, budget: int, x0=None,
                        sca: alg.SCAConfig | None = None, stop_rule=None, metric_period: int = 1,
                        wallclock: bool = True, on_metrics=None):
    """
    Centralized stochastic SCA: S-NEXT with one agent on the pooled problem.

    With ``I = 1`` and ``W = [1]`` the tracker equals the sampled gradient
    and the recursion reduces to the single-node sample-approximation scheme.
    """
    central = pb.pooled(problem)
    if x0 is not None and np.ndim(x0) == 2:
        x0 = np.asarray(x0).mean(axis=0)
    state = alg.initialize(central, np.ones((1, 1)), schedule, x0, sca=sca)
    return alg.run(state, budget, stop_rule, metric_period, wallclock, on_metrics)
