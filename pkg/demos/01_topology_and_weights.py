"""
Network topology and mixing weights
===================================

Agents talk only to their neighbours. The mixing matrix decides how much of
each neighbour's estimate an agent blends into its own. This script builds a
random connected graph, puts Metropolis weights on it and checks the
properties the algorithm relies on.
"""

import numpy as np

import snext as s
from snext import graph

###############################################################################
# A random undirected graph on six agents. Each edge is present with
# probability 0.5; draws are repeated until the graph is connected.
topo = s.random_connected_graph(6, 0.5, seed=42)
print("edges:", sorted((j, i) for j, i in topo.edges if j < i))
print("degrees:", topo.degrees())
print("strongly connected:", topo.is_strongly_connected())

###############################################################################
# Metropolis weights: w_ij = 1 / (1 + max(deg_i, deg_j)) on edges, the
# remainder on the diagonal. The result is symmetric and doubly stochastic.
W = s.metropolis_weights(topo)
np.set_printoptions(precision=3, suppress=True)
print(W)
print(s.validate_weights(W, topo))

###############################################################################
# Repeated mixing drives every row to the uniform average. The speed is set
# by the second largest eigenvalue modulus.
ev = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1]
print("second eigenvalue modulus:", round(ev[1], 4))
for k in (1, 10, 50):
    gap = np.abs(np.linalg.matrix_power(W, k) - 1 / 6).max()
    print(f"max |W^{k} - 11^T/6| = {gap:.2e}")

###############################################################################
# A broken matrix is reported with the violated property by name.
bad = W.copy()
bad[0, 0] += 0.1
print(s.validate_weights(bad, topo))

###############################################################################
# Matrices round-trip through a plain text file.
graph.save_matrix("/tmp/weights.txt", W)
print("round trip exact:", np.array_equal(graph.load_matrix("/tmp/weights.txt"), W))
