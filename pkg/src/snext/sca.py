"""
Strongly convex SCA subproblems and their solvers.

Each agent minimizes over ``x`` in ``K``::

    rho * (f_s(x) + pi^T (x - x_t)) + (1 - rho) * d^T (x - x_t) + G(x)

where ``f_s`` is a strongly convex surrogate of the local cost anchored at
``x_t``. :func:`solve_generic` handles any surrogate with a proximal
gradient loop; :func:`assemble_closed_form` / :func:`solve_closed_form`
cover the linearized least-squares surrogate with an ``l2`` regularizer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class SubproblemError(RuntimeError):
    """The inner solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=float("nan"), x=None):
        super().__init__(message)
        self.residual = residual
        self.x = x


# --------------------------------------------------------------------------
# surrogates

class LinearizedProximalSurrogate:
    """``f(x_t) + g_t^T (x - x_t) + tau/2 ||x - x_t||^2``."""

    def __init__(self, x_t, value_t: float, grad_t, tau: float):
        if tau <= 0:
            raise ValueError("tau must be > 0")
        self.x_t = np.asarray(x_t, dtype=float)
        self.value_t = float(value_t)
        self.grad_t = np.asarray(grad_t, dtype=float)
        self.tau = float(tau)

    @property
    def modulus(self):
        return self.tau

    def value(self, x):
        dx = np.asarray(x) - self.x_t
        return self.value_t + self.grad_t @ dx + 0.5 * self.tau * (dx @ dx)

    def grad(self, x):
        return self.grad_t + self.tau * (np.asarray(x) - self.x_t)

    def hvp(self, v):
        return self.tau * np.asarray(v)


def default_surrogate_quadratic(local_objective, x_t, xi, tau: float) -> LinearizedProximalSurrogate:
    """Linearize ``f_i(., xi)`` at `x_t` and add a proximal term of weight `tau`."""
    return LinearizedProximalSurrogate(x_t, local_objective.value(x_t, xi), local_objective.grad(x_t, xi), tau)


class LinearizedLeastSquaresSurrogate:
    """
    Squared loss of a linearized model plus a proximal term::

        sum_m c_m (r_m - J_m^T x)^2 + tau/2 ||x - x_t||^2

    with sample weights ``c_m`` (``1/B`` for a single minibatch).
    """

    def __init__(self, linearizations, tau: float, weights=None):
        if not linearizations:
            raise ValueError("empty batch")
        if tau < 0:
            raise ValueError("tau must be >= 0")
        self.linearizations = list(linearizations)
        self.x_t = self.linearizations[0].base_point
        self.J = np.stack([lin.jacobian for lin in self.linearizations])
        self.r = np.array([lin.residual_target for lin in self.linearizations])
        n = len(self.linearizations)
        self.weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
        self.tau = float(tau)

    @classmethod
    def stack(cls, pieces: Sequence["LinearizedLeastSquaresSurrogate"], tau: float):
        """Sum of several surrogates sharing one proximal term."""
        lins = [lin for s in pieces for lin in s.linearizations]
        return cls(lins, tau, np.concatenate([s.weights for s in pieces]))

    @property
    def modulus(self):
        return self.tau

    def value(self, x):
        res = self.r - self.J @ x
        dx = np.asarray(x) - self.x_t
        return float(self.weights @ res ** 2 + 0.5 * self.tau * (dx @ dx))

    def grad(self, x):
        res = self.r - self.J @ x
        return -2.0 * self.J.T @ (self.weights * res) + self.tau * (np.asarray(x) - self.x_t)

    def hvp(self, v):
        return 2.0 * self.J.T @ (self.weights * (self.J @ v)) + self.tau * np.asarray(v)


def power_iteration(hvp, dim: int, iterations: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD operator given by products."""
    v = np.random.default_rng(seed).standard_normal(dim)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = hvp(v)
        lam_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= 1e-12 * max(1.0, abs(lam_new)):
            lam = lam_new
            break
        lam = lam_new
    return lam


# --------------------------------------------------------------------------
# generic solver

def prox_operator(regularizer, feasible_set):
    """
    Backward step ``v -> argmin_{x in K} G_ns(x) + ||x - v||^2 / (2 gamma)``.

    Smooth regularizers are treated as part of the differentiable term by
    the callers, so only the projection remains. A nonsmooth ``G`` combined
    with a constrained ``K`` is only supported when both are separable.
    """
    from .problem import RealSpace  # local import: problem depends on this module

    if regularizer.smooth:
        return lambda v, gamma: feasible_set.project(v)
    if isinstance(feasible_set, RealSpace):
        return regularizer.prox
    if feasible_set.separable and regularizer.separable:
        return lambda v, gamma: feasible_set.project(regularizer.prox(v, gamma))
    raise ValueError("nonsmooth regularizer with a non-separable feasible set is not supported")


@dataclass
class SurrogateSpec:
    """One agent's S1 subproblem."""

    x_t: np.ndarray
    surrogate: Any
    pi_tilde: np.ndarray
    d: np.ndarray
    rho: float
    regularizer: Any
    feasible_set: Any

    def linear_term(self):
        return self.rho * self.pi_tilde + (1.0 - self.rho) * self.d

    def smooth_grad(self, x):
        g = self.rho * self.surrogate.grad(x) + self.linear_term()
        if self.regularizer.smooth:
            g = g + self.regularizer.grad(x)
        return g

    def objective(self, x):
        x = np.asarray(x, dtype=float)
        return (self.rho * self.surrogate.value(x) + self.linear_term() @ (x - self.x_t)
                + self.regularizer.value(x))

    def curvature(self) -> float:
        L = self.rho * power_iteration(self.surrogate.hvp, self.x_t.shape[0])
        if self.regularizer.smooth:
            L += self.regularizer.curvature
        return L


def solve_generic(spec: SurrogateSpec, tolerance: float = 1e-8, max_iterations: int = 10_000) -> np.ndarray:
    """
    Proximal gradient with fixed step ``1/L`` on the S1 objective.

    Starts at the base point and stops when the fixed-point residual
    ``||x - T(x)||`` drops to `tolerance`.

    Raises
    ------
    SubproblemError
        If `max_iterations` is reached first; carries the final residual.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    backward = prox_operator(spec.regularizer, spec.feasible_set)
    L = spec.curvature()
    if L <= 0:
        raise SubproblemError("subproblem has no curvature; it is not strongly convex")
    step = 1.0 / L
    x = spec.feasible_set.project(spec.x_t)
    residual = np.inf
    for _ in range(max_iterations):
        x_new = backward(x - step * spec.smooth_grad(x), step)
        residual = np.linalg.norm(x_new - x)
        x = x_new
        if residual <= tolerance:
            return x
    raise SubproblemError(f"no convergence in {max_iterations} iterations (residual {residual:.3e})",
                          residual, x)


# --------------------------------------------------------------------------
# closed form for linearized least squares + lam ||x||^2

@dataclass
class ClosedFormSubproblem:
    linearizations: list
    rho: float
    tau: float
    lam: float
    pi_tilde: np.ndarray
    d: np.ndarray
    x_t: np.ndarray
    A: np.ndarray
    b: np.ndarray
    weights: np.ndarray

    @property
    def eigenvalue_floor(self) -> float:
        """Lower bound on the spectrum of ``A``."""
        return 0.5 * self.rho * self.tau + self.lam

    def to_spec(self) -> SurrogateSpec:
        from .problem import L2Regularizer, RealSpace

        return SurrogateSpec(self.x_t, LinearizedLeastSquaresSurrogate(self.linearizations, self.tau, self.weights),
                             self.pi_tilde, self.d, self.rho, L2Regularizer(self.lam), RealSpace())


def assemble_closed_form(linearizations, rho, tau, lam, pi_tilde, d, x_t, weights=None) -> ClosedFormSubproblem:
    """
    Normal equations ``A x = b`` of the S1 problem with the linearized
    least-squares surrogate and ``G = lam ||x||^2`` on ``K = R^p``.

    Setting the gradient to zero and halving gives::

        A = rho sum_m c_m J_m J_m^T + (rho tau / 2 + lam) I
        b = rho sum_m c_m J_m r_m + (rho tau / 2) x_t - (rho / 2) pi - ((1 - rho) / 2) d

    with ``c_m = 1/B`` unless `weights` is given.
    """
    if not linearizations:
        raise ValueError("empty batch")
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must lie in (0, 1]")
    if lam < 0 or tau < 0 or (lam == 0 and tau == 0):
        raise ValueError("need lam > 0 or tau > 0 for a positive definite system")
    J = np.stack([lin.jacobian for lin in linearizations])
    r = np.array([lin.residual_target for lin in linearizations])
    c = np.full(len(r), 1.0 / len(r)) if weights is None else np.asarray(weights, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    shift = 0.5 * rho * tau + lam
    A = rho * (J.T * c) @ J
    A[np.diag_indices_from(A)] += shift
    b = rho * J.T @ (c * r) + 0.5 * rho * tau * x_t - 0.5 * rho * np.asarray(pi_tilde) - 0.5 * (1.0 - rho) * np.asarray(d)
    return ClosedFormSubproblem(list(linearizations), rho, tau, lam, np.asarray(pi_tilde, dtype=float),
                                np.asarray(d, dtype=float), x_t, A, b, c)


def solve_closed_form(sub: ClosedFormSubproblem) -> np.ndarray:
    """Cholesky solve of ``A x = b``; falls back to :func:`solve_generic` if factorization fails."""
    try:
        factor = linalg.cho_factor(sub.A, lower=True, check_finite=True)
    except linalg.LinAlgError:
        log.warning("Cholesky factorization failed; falling back to the generic solver")
        return solve_generic(sub.to_spec())
    return linalg.cho_solve(factor, sub.b)


SOLVERS = ("auto", "generic", "closed_form")


def closed_form_applicable(spec: SurrogateSpec) -> bool:
    from .problem import L2Regularizer, RealSpace, ZeroRegularizer

    return (isinstance(spec.surrogate, LinearizedLeastSquaresSurrogate)
            and isinstance(spec.regularizer, (L2Regularizer, ZeroRegularizer))
            and isinstance(spec.feasible_set, RealSpace)
            and (spec.regularizer.lam > 0 or spec.surrogate.tau > 0))


def solve_subproblem(spec: SurrogateSpec, solver: str = "auto", tolerance: float = 1e-8,
                     max_iterations: int = 10_000) -> np.ndarray:
    """Dispatch to the closed form when it applies (or is requested), else the generic solver."""
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}")
    if solver != "generic" and closed_form_applicable(spec):
        s = spec.surrogate
        sub = assemble_closed_form(s.linearizations, spec.rho, s.tau, spec.regularizer.lam,
                                   spec.pi_tilde, spec.d, spec.x_t, s.weights)
        return solve_closed_form(sub)
    if solver == "closed_form":
        raise ValueError("closed-form solver needs a least-squares surrogate, an l2 regularizer and K = R^p")
    return solve_generic(spec, tolerance, max_iterations)
