"""
Problem instances: local objectives, regularizer, feasible set, randomness.

The network minimizes ``E[sum_i f_i(x, xi)] + G(x)`` over ``x`` in ``K``.
A realization ``xi^t`` is a tuple with one entry per agent (a minibatch of
indices for data-driven objectives, a noise vector for the quadratic
fixture). Entry ``None`` means "deterministic": the full local data set, or
no noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from . import nn
from .sca import LinearizedLeastSquaresSurrogate, default_surrogate_quadratic


class InfeasiblePointError(ValueError):
    """A point outside the feasible set was passed where feasibility is required."""


# --------------------------------------------------------------------------
# local objectives

class LocalObjective:
    """
    Smooth local cost ``f_i(x, xi)`` known only to agent ``i``.

    Subclasses implement :meth:`value`, :meth:`grad` and :meth:`sample`.
    :meth:`surrogate` returns the strongly convex model used in the SCA
    step; the default is the linearization plus a proximal term.
    """

    dim: int
    lipschitz: float | None = None

    def value(self, x, xi=None) -> float:
        raise NotImplementedError

    def grad(self, x, xi=None) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator):
        return None

    def surrogate(self, x_t, xi, tau: float):
        return default_surrogate_quadratic(self, x_t, xi, tau)


class QuadraticObjective(LocalObjective):
    """``f(x, xi) = 0.5 x^T A x - (b + xi)^T x`` with ``xi`` uniform in ``[-noise, noise]^p``."""

    def __init__(self, A, b, noise: float = 0.0):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.noise = float(noise)
        self.dim = self.b.shape[0]
        self.lipschitz = float(np.linalg.eigvalsh(self.A).max(initial=0.0))

    def _lin(self, xi):
        return self.b if xi is None else self.b + xi

    def value(self, x, xi=None):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.A @ x - self._lin(xi) @ x)

    def grad(self, x, xi=None):
        return self.A @ np.asarray(x, dtype=float) - self._lin(xi)

    def sample(self, rng):
        if self.noise == 0.0:
            return None
        return rng.uniform(-self.noise, self.noise, self.dim)


class NNRegressionObjective(LocalObjective):
    """
    Minibatch mean squared error of an MLP on one agent's data shard.

    ``xi`` is an array of row indices into the shard (drawn with
    replacement), or ``None`` for the whole shard. When `batch_size` is at
    least the shard size, :meth:`sample` returns ``None`` and the objective is
    deterministic.
    """

    def __init__(self, arch: nn.MLPArchitecture, X, y, batch_size: int):
        self.arch = arch
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float).ravel()
        if self.X.shape[0] == 0:
            raise ValueError("empty data shard")
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.batch_size = int(batch_size)
        self.dim = arch.n_params

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    def batch(self, xi):
        if xi is None:
            return self.X, self.y
        return self.X[xi], self.y[xi]

    def value(self, w, xi=None):
        X, y = self.batch(xi)
        return float(np.mean((y - nn.forward(self.arch, w, X)) ** 2))

    def grad(self, w, xi=None):
        X, y = self.batch(xi)
        g, J = nn.forward_and_jacobian(self.arch, w, X)
        return -2.0 * J.T @ (y - g) / len(y)

    def sample(self, rng):
        if self.batch_size >= self.n_samples:
            return None
        return rng.integers(0, self.n_samples, self.batch_size)

    def surrogate(self, w_t, xi, tau):
        X, y = self.batch(xi)
        return LinearizedLeastSquaresSurrogate(nn.linearize_batch(self.arch, w_t, X, y), tau)


class SumObjective(LocalObjective):
    """Sum of several local objectives; ``xi`` is the tuple of their realizations."""

    def __init__(self, parts: Sequence[LocalObjective]):
        self.parts = list(parts)
        self.dim = self.parts[0].dim

    def value(self, x, xi=None):
        xi = xi if xi is not None else (None,) * len(self.parts)
        return float(sum(f.value(x, s) for f, s in zip(self.parts, xi)))

    def grad(self, x, xi=None):
        xi = xi if xi is not None else (None,) * len(self.parts)
        return sum(f.grad(x, s) for f, s in zip(self.parts, xi))

    def sample(self, rng):
        return tuple(f.sample(rng) for f in self.parts)

    def surrogate(self, x_t, xi, tau):
        xi = xi if xi is not None else (None,) * len(self.parts)
        if all(isinstance(f, NNRegressionObjective) for f in self.parts):
            pieces = [f.surrogate(x_t, s, tau) for f, s in zip(self.parts, xi)]
            return LinearizedLeastSquaresSurrogate.stack(pieces, tau)
        return default_surrogate_quadratic(self, x_t, xi, tau)


# --------------------------------------------------------------------------
# regularizers

class Regularizer:
    smooth = True
    separable = True

    def value(self, x) -> float:
        raise NotImplementedError

    def prox(self, v, gamma: float) -> np.ndarray:
        """``argmin_x G(x) + ||x - v||^2 / (2 gamma)``."""
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    curvature = 0.0


class ZeroRegularizer(Regularizer):
    lam = 0.0

    def value(self, x):
        return 0.0

    def prox(self, v, gamma):
        return np.array(v, dtype=float)

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class L2Regularizer(Regularizer):
    """``G(x) = lam * ||x||^2`` (squared norm, no 1/2)."""

    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.lam * (x @ x))

    def prox(self, v, gamma):
        return np.asarray(v, dtype=float) / (1.0 + 2.0 * gamma * self.lam)

    def grad(self, x):
        return 2.0 * self.lam * np.asarray(x, dtype=float)

    @property
    def curvature(self):
        return 2.0 * self.lam


@dataclass(frozen=True)
class L1Regularizer(Regularizer):
    """``G(x) = lam * ||x||_1``; prox is soft thresholding."""

    lam: float
    smooth = False

    def value(self, x):
        return float(self.lam * np.abs(x).sum())

    def prox(self, v, gamma):
        v = np.asarray(v, dtype=float)
        return np.sign(v) * np.maximum(np.abs(v) - gamma * self.lam, 0.0)


# --------------------------------------------------------------------------
# feasible sets

class FeasibleSet:
    separable = True

    def contains(self, x, tol: float = 1e-9) -> bool:
        raise NotImplementedError

    def project(self, v) -> np.ndarray:
        raise NotImplementedError


class RealSpace(FeasibleSet):
    def contains(self, x, tol=1e-9):
        return bool(np.all(np.isfinite(x)))

    def project(self, v):
        return np.array(v, dtype=float)


@dataclass(frozen=True)
class Box(FeasibleSet):
    lower: Any
    upper: Any

    def __post_init__(self):
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("empty box")

    def contains(self, x, tol=1e-9):
        x = np.asarray(x)
        return bool(np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol))

    def project(self, v):
        return np.clip(np.asarray(v, dtype=float), self.lower, self.upper)


@dataclass(frozen=True)
class Ball(FeasibleSet):
    center: Any
    radius: float
    separable = False

    def contains(self, x, tol=1e-9):
        return bool(np.linalg.norm(np.asarray(x) - self.center) <= self.radius + tol)

    def project(self, v):
        v = np.asarray(v, dtype=float)
        c = np.asarray(self.center, dtype=float)
        dist = np.linalg.norm(v - c)
        if dist <= self.radius:
            return v.copy()
        return c + (v - c) * (self.radius / dist)


# --------------------------------------------------------------------------
# randomness

@dataclass
class RandomSource:
    """
    Seeded i.i.d. realizations ``xi^t``, one independent substream per agent.

    ``draw(t)`` is a pure function of ``(seed, t)``: agent ``i`` samples with
    a generator seeded by ``[seed, i, t]``. Replays are therefore exact and
    any algorithm that asks for ``xi^t`` sees the same minibatches. If `log`
    is a list, every draw is appended to it as ``(t, xi)``.
    """

    seed: int
    samplers: Sequence[Callable[[np.random.Generator], Any]]
    log: list | None = field(default=None, compare=False)

    def draw(self, t: int) -> tuple:
        xi = tuple(s(np.random.default_rng([self.seed, i, t])) for i, s in enumerate(self.samplers))
        if self.log is not None:
            self.log.append((t, xi))
        return xi

    def with_log(self) -> "RandomSource":
        return replace(self, log=[])


@dataclass
class _PooledSource:
    """Single-agent view of a multi-agent source: ``xi^t`` is wrapped in a 1-tuple."""

    inner: Any

    @property
    def seed(self):
        return self.inner.seed

    @property
    def log(self):
        return self.inner.log

    def draw(self, t):
        return (self.inner.draw(t),)


# --------------------------------------------------------------------------
# problem instance

@dataclass(frozen=True)
class ProblemInstance:
    objectives: tuple
    regularizer: Regularizer
    feasible_set: FeasibleSet
    source: Any
    reference_samples: tuple = ()
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        if not self.objectives:
            raise ValueError("at least one agent is required")
        dims = {f.dim for f in self.objectives}
        if len(dims) != 1:
            raise ValueError(f"agents disagree on the dimension: {sorted(dims)}")
        if not self.reference_samples:
            object.__setattr__(self, "reference_samples", ((None,) * len(self.objectives),))

    @property
    def agent_count(self) -> int:
        return len(self.objectives)

    @property
    def dim(self) -> int:
        return self.objectives[0].dim

    def with_seed(self, seed: int) -> "ProblemInstance":
        src = self.source
        if isinstance(src, _PooledSource):
            return replace(self, source=_PooledSource(replace(src.inner, seed=seed)))
        return replace(self, source=replace(src, seed=seed))

    def local_gradients(self, X, xi) -> np.ndarray:
        """Stack of ``grad f_i(X[i], xi[i])``."""
        return np.stack([f.grad(x, s) for f, x, s in zip(self.objectives, X, xi)])


def _check_feasible(problem, x, tol=1e-9):
    if not problem.feasible_set.contains(x, tol):
        raise InfeasiblePointError("point lies outside the feasible set")


def full_objective(problem: ProblemInstance, x, sample_set=None, check: bool = True) -> float:
    """
    Empirical ``mean_xi sum_i f_i(x, xi_i) + G(x)``.

    `sample_set` defaults to the instance's reference samples, which give the
    exact (full-data, noise-free) objective for the shipped instances.
    """
    x = np.asarray(x, dtype=float)
    if check:
        _check_feasible(problem, x)
    samples = problem.reference_samples if sample_set is None else tuple(sample_set)
    total = 0.0
    for xi in samples:
        total += sum(f.value(x, s) for f, s in zip(problem.objectives, xi))
    return total / len(samples) + problem.regularizer.value(x)


def full_gradient(problem: ProblemInstance, x, sample_set=None) -> np.ndarray:
    """Empirical gradient of the smooth part ``sum_i f_i`` (regularizer excluded)."""
    samples = problem.reference_samples if sample_set is None else tuple(sample_set)
    g = np.zeros(problem.dim)
    for xi in samples:
        for f, s in zip(problem.objectives, xi):
            g += f.grad(x, s)
    return g / len(samples)


def pooled(problem: ProblemInstance) -> ProblemInstance:
    """Single-agent instance holding ``F = sum_i f_i``, consuming the same draws."""
    if problem.agent_count == 1:
        return problem
    return ProblemInstance(
        (SumObjective(problem.objectives),),
        problem.regularizer,
        problem.feasible_set,
        _PooledSource(problem.source),
        tuple((xi,) for xi in problem.reference_samples),
        dict(problem.info),
    )


def make_quadratic_instance(agent_count: int, dim: int, seed: int = 0, condition_number: float = 10.0,
                            noise: float = 0.0, lam: float = 0.01, box: float | None = None) -> ProblemInstance:
    """
    Strongly convex quadratic test problem with a known minimizer.

    Each ``A_i`` is a random rotation of a diagonal with entries spread in
    ``[1, condition_number]``; ``b_i`` is standard normal. The linear term
    is perturbed by zero-mean uniform noise of half-width `noise`, so the
    expected objective equals the noise-free one. ``G = lam ||x||^2`` and
    ``K`` is ``R^p`` or the box ``[-box, box]^p``.

    The unconstrained minimizer ``(sum A_i + 2 lam I)^{-1} sum b_i`` is stored in
    ``info["minimizer"]``.
    """
    if agent_count < 1 or dim < 1:
        raise ValueError("agent_count and dim must be >= 1")
    rng = np.random.default_rng(seed)
    objectives = []
    for _ in range(agent_count):
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eigs = np.linspace(1.0, condition_number, dim) if dim > 1 else np.array([1.0])
        A = (Q * rng.permutation(eigs)) @ Q.T
        A = 0.5 * (A + A.T)
        objectives.append(QuadraticObjective(A, rng.standard_normal(dim), noise))
    A_sum = sum(f.A for f in objectives) + 2.0 * lam * np.eye(dim)
    b_sum = sum(f.b for f in objectives)
    K = RealSpace() if box is None else Box(-box * np.ones(dim), box * np.ones(dim))
    return ProblemInstance(
        objectives,
        L2Regularizer(lam),
        K,
        RandomSource(seed, [f.sample for f in objectives]),
        info={"minimizer": np.linalg.solve(A_sum, b_sum)},
    )


def make_nn_regression_instance(dataset, agent_count: int, batch_size: int,
                                architecture: nn.MLPArchitecture | None = None,
                                lam: float = 1e-2, seed: int = 0) -> ProblemInstance:
    """
    Distributed MLP regression with squared loss and ``l2`` regularization.

    `dataset` is an ``(X, y)`` pair. Rows are shuffled with `seed` and cut
    into `agent_count` contiguous shards of near-equal size; agent ``i``
    draws minibatches of `batch_size` indices with replacement from its shard.
    """
    X, y = dataset
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different lengths")
    if X.shape[0] < agent_count:
        raise ValueError(f"{X.shape[0]} samples cannot fill {agent_count} non-empty shards; reduce the agent count")
    arch = architecture or nn.MLPArchitecture(X.shape[1], (30, 30))
    if arch.input_dim != X.shape[1]:
        raise ValueError("architecture input_dim does not match the data")
    order = np.random.default_rng(seed).permutation(X.shape[0])
    shards = np.array_split(order, agent_count)
    objectives = [NNRegressionObjective(arch, X[s], y[s], batch_size) for s in shards]
    return ProblemInstance(
        objectives,
        L2Regularizer(lam),
        RealSpace(),
        RandomSource(seed, [f.sample for f in objectives]),
        info={"architecture": arch},
    )


def make_synthetic_regression(n_samples: int = 200, n_features: int = 5, seed: int = 0,
                              hidden: tuple[int, ...] = (10, 10), noise: float = 0.1):
    """
    Regression data from a random tanh teacher network.

    Features are standard normal; the teacher's weights are the usual
    uniform initialization scaled by 3 so the target is visibly nonlinear.
    Targets are standardized, then Gaussian noise of std `noise` is added.
    Returns ``(X, y)``.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, n_features))
    arch = nn.MLPArchitecture(n_features, hidden)
    w_teacher = 3.0 * nn.init_weights(arch, seed + 1)
    y = nn.forward(arch, w_teacher, X)
    y = (y - y.mean()) / (y.std() or 1.0)
    return X, y + noise * rng.standard_normal(n_samples)
