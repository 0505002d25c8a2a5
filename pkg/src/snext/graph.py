"""
Network topologies and doubly stochastic mixing matrices.

A topology is a set of directed edges ``(j, i)`` meaning agent ``j`` can send
to agent ``i``. Every agent's neighborhood contains the agent itself.
Mixing matrices are plain ``(I, I)`` ndarrays with ``W[i, j] > 0`` exactly
when ``j`` is in the neighborhood of ``i``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Topology:
    """Directed communication graph over ``agent_count`` agents.

    Self-loops are implicit and are not stored in ``edges``.
    """

    agent_count: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.agent_count < 1:
            raise ValueError("agent_count must be >= 1")
        edges = frozenset((int(j), int(i)) for j, i in self.edges if j != i)
        for j, i in edges:
            if not (0 <= j < self.agent_count and 0 <= i < self.agent_count):
                raise ValueError(f"edge ({j}, {i}) out of range")
        object.__setattr__(self, "edges", edges)

    @property
    def neighborhoods(self) -> list[set[int]]:
        """In-neighborhoods ``N_i = {j : (j, i) in E} | {i}``."""
        nbrs = [{i} for i in range(self.agent_count)]
        for j, i in self.edges:
            nbrs[i].add(j)
        return nbrs

    def adjacency(self) -> np.ndarray:
        """0/1 matrix ``A[i, j] = 1`` iff ``j`` is in ``N_i`` (diagonal included)."""
        A = np.eye(self.agent_count, dtype=int)
        for j, i in self.edges:
            A[i, j] = 1
        return A

    @classmethod
    def from_adjacency(cls, adjacency) -> "Topology":
        A = np.asarray(adjacency)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        rows, cols = np.nonzero(A)
        return cls(A.shape[0], frozenset((int(j), int(i)) for i, j in zip(rows, cols)))

    def is_symmetric(self) -> bool:
        return all((i, j) in self.edges for j, i in self.edges)

    def symmetrized(self) -> "Topology":
        return Topology(self.agent_count, self.edges | {(i, j) for j, i in self.edges})

    def _reachable(self, source: int, reverse: bool = False) -> set[int]:
        out = [[] for _ in range(self.agent_count)]
        for j, i in self.edges:
            if reverse:
                out[i].append(j)
            else:
                out[j].append(i)
        seen = {source}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in out[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def is_strongly_connected(self) -> bool:
        # Forward and backward reachability from one node suffices.
        everyone = set(range(self.agent_count))
        return self._reachable(0) == everyone and self._reachable(0, reverse=True) == everyone

    def degrees(self) -> np.ndarray:
        """Number of neighbors excluding self."""
        return np.array([len(n) - 1 for n in self.neighborhoods])


def complete_graph(agent_count: int) -> Topology:
    return Topology(
        agent_count,
        frozenset((j, i) for i in range(agent_count) for j in range(agent_count) if i != j),
    )


def path_graph(agent_count: int) -> Topology:
    edges = set()
    for k in range(agent_count - 1):
        edges |= {(k, k + 1), (k + 1, k)}
    return Topology(agent_count, frozenset(edges))


def ring_graph(agent_count: int) -> Topology:
    edges = set()
    if agent_count > 1:
        for k in range(agent_count):
            nxt = (k + 1) % agent_count
            edges |= {(k, nxt), (nxt, k)}
    return Topology(agent_count, frozenset(edges))


def random_connected_graph(agent_count: int, edge_probability: float = 0.5, seed: int = 0,
                           max_attempts: int = 100) -> Topology:
    """
    Random undirected (symmetric) Erdos-Renyi graph that is connected.

    Each unordered pair is linked independently with probability
    `edge_probability`. Up to `max_attempts` graphs are drawn; if none is
    connected, the last draw is augmented with a ring so that generation
    always terminates.

    Parameters
    ----------
    agent_count : int
        Number of agents, at least 1.
    edge_probability : float
        Link probability in (0, 1].
    seed : int
        Seed of the generator; the result is a deterministic function of it.

    Returns
    -------
    Topology
        A strongly connected topology with a symmetric edge set.
    """
    if agent_count < 1:
        raise ValueError("agent_count must be >= 1")
    if not 0.0 < edge_probability <= 1.0:
        raise ValueError("edge_probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(agent_count) for j in range(i + 1, agent_count)]
    topo = Topology(agent_count)
    for _ in range(max_attempts):
        keep = rng.random(len(pairs)) < edge_probability
        edges = set()
        for (i, j), k in zip(pairs, keep):
            if k:
                edges |= {(i, j), (j, i)}
        topo = Topology(agent_count, frozenset(edges))
        if topo.is_strongly_connected():
            return topo
    return Topology(agent_count, topo.edges | ring_graph(agent_count).edges)


def metropolis_weights(topology: Topology) -> np.ndarray:
    """
    Metropolis-Hastings mixing matrix of a symmetric topology.

    ``w_ij = 1 / (1 + max(deg_i, deg_j))`` for neighbors ``j != i`` and
    ``w_ii = 1 - sum_{j != i} w_ij``. The result is symmetric and doubly
    stochastic.
    """
    if topology.agent_count < 1:
        raise ValueError("empty topology")
    if not topology.is_symmetric():
        raise ValueError("metropolis_weights needs a symmetric edge set; call topology.symmetrized()")
    deg = topology.degrees()
    n = topology.agent_count
    W = np.zeros((n, n))
    for j, i in topology.edges:
        W[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


@dataclass
class ValidationReport:
    passed: bool
    violations: list[str] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def validate_weights(weights, topology: Topology, tolerance: float = 1e-12) -> ValidationReport:
    """
    Check a mixing matrix against nonnegativity, sparsity and double stochasticity.

    Raises
    ------
    ValueError
        If the matrix shape does not match the topology. This is distinct
        from a failed validation, which is reported in the returned object.
    """
    W = np.asarray(weights, dtype=float)
    n = topology.agent_count
    if W.shape != (n, n):
        raise ValueError(f"weight matrix has shape {W.shape}, expected {(n, n)}")
    violations = []
    if np.any(W < -tolerance):
        violations.append("nonnegativity")
    mask = topology.adjacency().astype(bool)
    if np.any(W[mask] <= 0.0) or np.any(np.abs(W[~mask]) > tolerance):
        violations.append("sparsity")
    if np.any(np.abs(W.sum(axis=1) - 1.0) > tolerance):
        violations.append("row-stochasticity")
    if np.any(np.abs(W.sum(axis=0) - 1.0) > tolerance):
        violations.append("column-stochasticity")
    return ValidationReport(not violations, violations)


def save_matrix(path, matrix) -> None:
    """Write a matrix as one row per line, space-separated decimals."""
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    np.savetxt(path, M, fmt="%.17g", delimiter=" ")


def load_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(Path(path), dtype=float, ndmin=2))


def save_topology(path, topology: Topology) -> None:
    np.savetxt(path, topology.adjacency(), fmt="%d", delimiter=" ")


def load_topology(path) -> Topology:
    return Topology.from_adjacency(np.loadtxt(Path(path), dtype=int, ndmin=2))
