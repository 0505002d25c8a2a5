"""
Scalar-output tanh multilayer perceptron with a flat weight vector.

Parameter layout: layer by layer, the ``(fan_out, fan_in)`` weight matrix in
row-major order followed by the bias vector. The last layer is linear with a
single output unit.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class MLPArchitecture:
    input_dim: int
    hidden: tuple[int, ...] = (30, 30)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer sizes must be positive")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, 1)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        """``(fan_out, fan_in)`` of each layer."""
        s = self.layer_sizes
        return [(s[k + 1], s[k]) for k in range(len(s) - 1)]

    @property
    def n_params(self) -> int:
        return sum((fan_in + 1) * fan_out for fan_out, fan_in in self.shapes)


def unflatten(arch: MLPArchitecture, w) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into ``[(W_1, b_1), ..., (W_L, b_L)]`` (views, no copies)."""
    w = np.asarray(w, dtype=float)
    if w.shape != (arch.n_params,):
        raise ValueError(f"weight vector has shape {w.shape}, expected ({arch.n_params},)")
    params, k = [], 0
    for fan_out, fan_in in arch.shapes:
        W = w[k:k + fan_out * fan_in].reshape(fan_out, fan_in)
        k += fan_out * fan_in
        b = w[k:k + fan_out]
        k += fan_out
        params.append((W, b))
    return params


def flatten(params) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def init_weights(arch: MLPArchitecture, seed: int = 0) -> np.ndarray:
    """Uniform init in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases."""
    rng = np.random.default_rng(seed)
    params = []
    for fan_out, fan_in in arch.shapes:
        bound = 1.0 / np.sqrt(fan_in)
        params.append((rng.uniform(-bound, bound, (fan_out, fan_in)),
                       rng.uniform(-bound, bound, fan_out)))
    return flatten(params)


def _check_inputs(arch, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"input has {X.shape[1]} features, expected {arch.input_dim}")
    return X, single


def _forward_pass(params, X):
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.tanh(h @ W.T + b)
        acts.append(h)
    W, b = params[-1]
    return (h @ W.T + b)[:, 0], acts


def forward(arch: MLPArchitecture, w, x):
    """
    Network output ``g(w, x)``.

    `x` may be a single input vector (returns a float) or a ``(B, input_dim)``
    batch (returns a length-``B`` array).
    """
    X, single = _check_inputs(arch, x)
    out, _ = _forward_pass(unflatten(arch, w), X)
    return float(out[0]) if single else out


def forward_and_jacobian(arch: MLPArchitecture, w, X) -> tuple[np.ndarray, np.ndarray]:
    """
    Batched outputs and per-sample weight Jacobians.

    Returns
    -------
    out : ndarray, shape (B,)
    J : ndarray, shape (B, n_params)
        Row ``m`` is the gradient of ``g(w, X[m])`` with respect to ``w``,
        laid out like the flat weight vector.
    """
    X, _ = _check_inputs(arch, X)
    params = unflatten(arch, w)
    out, acts = _forward_pass(params, X)
    B = X.shape[0]
    blocks = []
    delta = np.ones((B, 1))  # d out / d preactivation of the output layer
    for layer in range(len(params) - 1, -1, -1):
        W, _ = params[layer]
        a_in = acts[layer]
        dW = delta[:, :, None] * a_in[:, None, :]
        blocks.append(delta)
        blocks.append(dW.reshape(B, -1))
        if layer > 0:
            delta = (delta @ W) * (1.0 - a_in ** 2)
    return out, np.concatenate(blocks[::-1], axis=1)


def weight_jacobian(arch: MLPArchitecture, w, x) -> np.ndarray:
    """Gradient of ``g(w, x)`` with respect to ``w`` for a single input (backprop)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("weight_jacobian takes a single input vector")
    _, J = forward_and_jacobian(arch, w, x[None, :])
    return J[0]


@dataclass(frozen=True)
class SampleLinearization:
    """First-order model of the network around ``base_point`` for one sample."""

    base_point: np.ndarray
    value: float
    jacobian: np.ndarray
    residual_target: float

    def predict(self, w) -> float:
        """Linearized output ``g(w_t) + J^T (w - w_t)``."""
        return self.value + float(self.jacobian @ (np.asarray(w) - self.base_point))


def linearize_batch(arch: MLPArchitecture, w_t, X, y) -> list[SampleLinearization]:
    """One :class:`SampleLinearization` per ``(x, y)`` pair.

    The residual target is ``r = y - g(w_t, x) + J^T w_t``, so the linearized
    squared error reads ``(r - J^T w)^2``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y have different lengths")
    w_t = np.asarray(w_t, dtype=float).copy()
    g, J = forward_and_jacobian(arch, w_t, X)
    r = y - g + J @ w_t
    return [SampleLinearization(w_t, float(g[m]), J[m], float(r[m])) for m in range(len(y))]


def save_vector(path, w) -> None:
    """Plain-text checkpoint, one decimal per line."""
    np.savetxt(path, np.asarray(w, dtype=float).ravel(), fmt="%.17g")


def load_vector(path) -> np.ndarray:
    return np.atleast_1d(np.loadtxt(Path(path), dtype=float))
