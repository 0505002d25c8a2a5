"""
The per-agent subproblem: closed form against a generic solver
==============================================================

For neural-network regression each agent linearizes the network around its
current weights. With squared loss and an l2 penalty the resulting convex
subproblem is a linear system ``A x = b``. We assemble it, solve it with a
Cholesky factorization and compare with a plain proximal gradient loop on
the same objective.
"""

import numpy as np

from snext import nn, sca

rng = np.random.default_rng(0)

###############################################################################
# A small tanh network and a minibatch of eight samples.
arch = nn.MLPArchitecture(3, (5,))
w_t = nn.init_weights(arch, 0)
X = rng.normal(size=(8, 3))
y = rng.normal(size=8)
lins = nn.linearize_batch(arch, w_t, X, y)
print("parameters:", arch.n_params, " samples:", len(lins))

###############################################################################
# Each linearization reproduces the network exactly at the base point.
print("anchor errors:", max(abs(lin.predict(w_t) - nn.forward(arch, w_t, x)) for lin, x in zip(lins, X)))

###############################################################################
# Assemble and solve. ``pi`` and ``d`` stand for the tracked information from
# the rest of the network; here they are random.
p = arch.n_params
sub = sca.assemble_closed_form(lins, rho=0.7, tau=1.0, lam=1e-2, pi_tilde=rng.normal(size=p),
                               d=rng.normal(size=p), x_t=w_t)
print(f"smallest eigenvalue of A: {np.linalg.eigvalsh(sub.A).min():.6f} (floor rho tau / 2 + lam = {sub.eigenvalue_floor})")
x_closed = sca.solve_closed_form(sub)
x_generic = sca.solve_generic(sub.to_spec(), tolerance=1e-12, max_iterations=100_000)
print("closed form vs generic:", np.linalg.norm(x_closed - x_generic))

###############################################################################
# The proximal weight ``tau`` controls how far the step moves from ``w_t``.
for tau in (0.1, 1.0, 10.0, 100.0):
    sub = sca.assemble_closed_form(lins, 0.7, tau, 1e-2, np.zeros(p), np.zeros(p), w_t)
    print(f"tau {tau:6.1f}: ||x_hat - w_t|| = {np.linalg.norm(sca.solve_closed_form(sub) - w_t):.4f}")
