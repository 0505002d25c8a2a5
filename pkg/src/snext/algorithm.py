"""
S-NEXT: in-network stochastic SCA with gradient tracking.

Each iteration runs, in order:

S1  every agent solves its strongly convex subproblem for ``x_hat_i`` and
    moves ``z_i = x_i + alpha (x_hat_i - x_i)``;
S2  a new realization ``xi^{t+1}`` is drawn, iterates are mixed
    ``x_i <- sum_j w_ij z_j`` and the gradient tracker is corrected
    ``y_i <- sum_j w_ij y_j + grad f_i(x_i^{t+1}) - grad f_i(x_i^t)``;
    then ``pi_i = I y_i - grad f_i(x_i^{t+1})``;
S3  ``d_i <- (1 - rho) d_i + rho I y_i``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from typing import Any, Callable

import numpy as np

from . import problem as pb
from .sca import SOLVERS, SubproblemError, SurrogateSpec, prox_operator, solve_subproblem


# --------------------------------------------------------------------------
# step sizes

class DecaySequence:
    """``s^t = s^{t-1} (1 - eps s^{t-1})`` starting from ``s^0 = initial``."""

    def __init__(self, initial: float, eps: float):
        if not 0.0 < initial <= 1.0:
            raise ValueError("initial value must lie in (0, 1]")
        if not 0.0 <= eps < 1.0:
            raise ValueError("eps must lie in [0, 1)")
        self.initial = float(initial)
        self.eps = float(eps)
        self._values = [self.initial]

    def __call__(self, t: int) -> float:
        vals = self._values
        while len(vals) <= t:
            s = vals[-1]
            vals.append(s * (1.0 - self.eps * s))
        return vals[t]

    def values(self, n: int) -> np.ndarray:
        """The first `n` terms."""
        if n > 0:
            self(n - 1)
        return np.array(self._values[:n])

    def __repr__(self):
        return f"DecaySequence({self.initial}, {self.eps})"


@dataclass
class StepSchedule:
    """Coupled step sizes ``alpha^t`` (iterate motion) and ``rho^t`` (gradient averaging)."""

    alpha0: float = 0.01
    eps_alpha: float = 1e-3
    rho0: float = 0.9
    eps_rho: float = 5e-4

    def __post_init__(self):
        self._alpha = DecaySequence(self.alpha0, self.eps_alpha)
        self._rho = DecaySequence(self.rho0, self.eps_rho)

    def alpha(self, t: int) -> float:
        return self._alpha(t)

    def rho(self, t: int) -> float:
        return self._rho(t)

    def sequences(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self._alpha.values(n), self._rho.values(n)


@dataclass
class SCAConfig:
    tau: float = 1.0
    solver: str = "auto"
    tolerance: float = 1e-8
    max_iterations: int = 10_000

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")


# --------------------------------------------------------------------------
# state

@dataclass
class AgentState:
    x: np.ndarray
    y: np.ndarray
    pi_tilde: np.ndarray
    d: np.ndarray
    z: np.ndarray
    last_grad: np.ndarray


@dataclass
class NetworkState:
    t: int
    agents: list[AgentState]
    problem: pb.ProblemInstance
    weights: np.ndarray
    schedule: StepSchedule
    sca: SCAConfig
    sample: tuple

    @property
    def x(self) -> np.ndarray:
        return np.stack([a.x for a in self.agents])

    @property
    def y(self) -> np.ndarray:
        return np.stack([a.y for a in self.agents])

    @property
    def grads(self) -> np.ndarray:
        return np.stack([a.last_grad for a in self.agents])

    @property
    def x_mean(self) -> np.ndarray:
        return self.x.mean(axis=0)


@dataclass
class IterationMetrics:
    iter: int
    objective: float
    consensus_err: float
    stationarity: float
    conservation_residual: float
    alpha: float
    rho: float
    ms: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, name) for name in self.header()]


def _broadcast_x0(problem, x0):
    I, p = problem.agent_count, problem.dim
    if x0 is None:
        x0 = problem.feasible_set.project(np.zeros(p))
    X0 = np.asarray(x0, dtype=float)
    if X0.shape == (p,):
        X0 = np.tile(X0, (I, 1))
    if X0.shape != (I, p):
        raise ValueError(f"x0 must have shape ({p},) or ({I}, {p})")
    for i, x in enumerate(X0):
        if not problem.feasible_set.contains(x):
            raise pb.InfeasiblePointError(f"x0 of agent {i} is infeasible")
    return X0


def initialize(problem: pb.ProblemInstance, weights, schedule: StepSchedule | None = None, x0=None,
               seed: int | None = None, sca: SCAConfig | None = None) -> NetworkState:
    """
    Build the initial network state.

    Draws ``xi^0`` and sets ``y_i = grad f_i(x_i^0, xi^0)``,
    ``pi_i = (I - 1) y_i`` and ``d_i = I y_i``.
    """
    if seed is not None:
        problem = problem.with_seed(seed)
    W = np.asarray(weights, dtype=float)
    I = problem.agent_count
    if W.shape != (I, I):
        raise ValueError(f"weights have shape {W.shape}, expected {(I, I)}")
    X0 = _broadcast_x0(problem, x0)
    xi0 = problem.source.draw(0)
    G0 = problem.local_gradients(X0, xi0)
    agents = [AgentState(x=X0[i].copy(), y=G0[i].copy(), pi_tilde=(I - 1) * G0[i], d=I * G0[i],
                         z=X0[i].copy(), last_grad=G0[i])
              for i in range(I)]
    return NetworkState(0, agents, problem, W, schedule or StepSchedule(), sca or SCAConfig(), xi0)


def subproblem_spec(state: NetworkState, i: int) -> SurrogateSpec:
    """The S1 subproblem of agent `i` at the current iteration."""
    a = state.agents[i]
    prob = state.problem
    f = prob.objectives[i]
    return SurrogateSpec(a.x, f.surrogate(a.x, state.sample[i], state.sca.tau), a.pi_tilde, a.d,
                         state.schedule.rho(state.t), prob.regularizer, prob.feasible_set)


def step(state: NetworkState, with_metrics: bool = True, clock_start: float | None = None):
    """
    Advance one iteration.

    Returns
    -------
    new_state : NetworkState
    metrics : IterationMetrics or None
        Metrics of `new_state` (``None`` if `with_metrics` is false).
    """
    prob = state.problem
    I = prob.agent_count
    t = state.t
    alpha, rho = state.schedule.alpha(t), state.schedule.rho(t)
    cfg = state.sca

    # S1
    Z = np.empty((I, prob.dim))
    for i, a in enumerate(state.agents):
        try:
            x_hat = solve_subproblem(subproblem_spec(state, i), cfg.solver, cfg.tolerance, cfg.max_iterations)
        except SubproblemError as err:
            raise SubproblemError(f"agent {i}, iteration {t}: {err}", err.residual, err.x) from err
        Z[i] = a.x + alpha * (x_hat - a.x)

    # S2
    W = state.weights
    xi_next = prob.source.draw(t + 1)
    X_next = W @ Z
    G_old = state.grads
    G_next = prob.local_gradients(X_next, xi_next)
    Y_next = W @ state.y + G_next - G_old
    Pi_next = I * Y_next - G_next

    # S3
    D_next = (1.0 - rho) * np.stack([a.d for a in state.agents]) + rho * I * Y_next

    agents = [AgentState(X_next[i], Y_next[i], Pi_next[i], D_next[i], Z[i], G_next[i]) for i in range(I)]
    new = NetworkState(t + 1, agents, prob, W, state.schedule, cfg, xi_next)
    return new, (collect_metrics(new, clock_start) if with_metrics else None)


# --------------------------------------------------------------------------
# metrics

def consensus_error(state) -> float:
    """``max_i ||x_i - mean(x)||``."""
    X = state.x
    return float(np.linalg.norm(X - X.mean(axis=0), axis=1).max())


def conservation_residual(state) -> float:
    """Relative gap ``||mean(y) - mean(grad f_i)|| / (1 + ||mean(grad f_i)||)``."""
    g = state.grads.mean(axis=0)
    return float(np.linalg.norm(state.y.mean(axis=0) - g) / (1.0 + np.linalg.norm(g)))


def stationarity_measure(state, samples=None) -> float:
    """
    Proximal-gradient residual ``||x - T(x)||`` at the mean iterate, step 1.

    ``T`` is one forward-backward step on the empirical objective built from
    `samples` (default: the problem's reference samples, i.e. the full data).
    It vanishes exactly at stationary points.
    """
    prob = state.problem
    x = state.x.mean(axis=0)
    g = pb.full_gradient(prob, x, samples)
    if prob.regularizer.smooth:
        g = g + prob.regularizer.grad(x)
    backward = prox_operator(prob.regularizer, prob.feasible_set)
    return float(np.linalg.norm(x - backward(x - g, 1.0)))


def collect_metrics(state, clock_start: float | None = None, alpha=None, rho=None) -> IterationMetrics:
    x_bar = state.x.mean(axis=0)
    sched = getattr(state, "schedule", None)
    if alpha is None and isinstance(sched, StepSchedule):
        alpha, rho = sched.alpha(state.t), sched.rho(state.t)
    elif alpha is None and isinstance(sched, DecaySequence):
        alpha = sched(state.t)
    cons = conservation_residual(state) if hasattr(state, "y") else float("nan")
    ms = float("nan") if clock_start is None else (time.perf_counter() - clock_start) * 1e3
    return IterationMetrics(
        iter=state.t,
        objective=pb.full_objective(state.problem, x_bar, check=False),
        consensus_err=consensus_error(state),
        stationarity=stationarity_measure(state),
        conservation_residual=cons,
        alpha=float("nan") if alpha is None else alpha,
        rho=float("nan") if rho is None else rho,
        ms=ms,
    )


@dataclass
class StopRule:
    """Stop once stationarity and consensus error are both below their thresholds."""

    stationarity: float = 1e-6
    consensus: float = 1e-6

    def __call__(self, m: IterationMetrics) -> bool:
        return m.stationarity < self.stationarity and m.consensus_err < self.consensus


def never(_metrics) -> bool:
    return False


def drive(state, advance: Callable, budget: int, stop_rule=None, metric_period: int = 1,
          wallclock: bool = True, on_metrics: Callable | None = None):
    """Shared outer loop: call ``advance(state) -> state`` up to `budget` times."""
    if budget < 1:
        raise ValueError("iteration budget must be >= 1")
    if metric_period < 1:
        raise ValueError("metric_period must be >= 1")
    stop_rule = StopRule() if stop_rule is None else stop_rule
    start = time.perf_counter() if wallclock else None
    trajectory = []

    def record(s):
        m = collect_metrics(s, start)
        trajectory.append(m)
        if on_metrics is not None:
            on_metrics(m)
        return m

    record(state)
    for k in range(budget):
        state = advance(state)
        if state.t % metric_period == 0 or k == budget - 1:
            if stop_rule(record(state)):
                break
    return trajectory, state


def run(state: NetworkState, iteration_budget: int, stop_rule: Callable[[IterationMetrics], bool] | None = None,
        metric_period: int = 1, wallclock: bool = True, on_metrics: Callable | None = None):
    """
    Iterate :func:`step` until the budget is spent or `stop_rule` fires.

    Metrics are recorded for the initial state and then every
    `metric_period` iterations (always for the last one); `stop_rule` is
    checked on each recorded row. Pass :func:`never` to always use the full
    budget. Returns ``(trajectory, final_state)``.
    """
    return drive(state, lambda s: step(s, with_metrics=False)[0], iteration_budget, stop_rule,
                 metric_period, wallclock, on_metrics)
