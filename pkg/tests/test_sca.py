import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snext import nn
from snext import problem as pb
from snext import sca


class Shifted:
    """``0.5 ||x - c||^2`` written as a surrogate."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    def value(self, x):
        return 0.5 * np.sum((x - self.c) ** 2)

    def grad(self, x):
        return x - self.c

    def hvp(self, v):
        return v


def spec_for(surrogate, x_t, rho=1.0, pi=None, d=None, G=None, K=None):
    p = len(x_t)
    return sca.SurrogateSpec(np.asarray(x_t, dtype=float), surrogate, np.zeros(p) if pi is None else pi,
                             np.zeros(p) if d is None else d, rho, G or pb.ZeroRegularizer(), K or pb.RealSpace())


def random_lls(rng, arch, batch):
    w_t = rng.normal(0, 0.5, arch.n_params)
    X = rng.normal(size=(batch, arch.input_dim))
    y = rng.normal(size=batch)
    return w_t, nn.linearize_batch(arch, w_t, X, y)


# --------------------------------------------------------------------------
# generic solver

def test_generic_prox_of_quadratic():
    c = np.array([1.0, -2.0, 0.5])
    x = sca.solve_generic(spec_for(Shifted(c), np.zeros(3)))
    np.testing.assert_allclose(x, c, atol=1e-8)


def test_generic_matches_linear_solve_with_l2():
    rng = np.random.default_rng(0)
    p = 6
    M = rng.normal(size=(p, p))
    A = M @ M.T + np.eye(p)
    f = pb.QuadraticObjective(A, rng.normal(size=p))
    x_t = rng.normal(size=p)
    rho, lam = 0.7, 0.3
    pi, d = rng.normal(size=p), rng.normal(size=p)
    # use the objective itself (strongly convex) as its own surrogate
    surrogate = type("Q", (), {"value": lambda s, x: f.value(x), "grad": lambda s, x: f.grad(x),
                               "hvp": lambda s, v: A @ v})()
    spec = spec_for(surrogate, x_t, rho, pi, d, pb.L2Regularizer(lam))
    x = sca.solve_generic(spec, tolerance=1e-12)
    # rho (A x - b + pi) + (1 - rho) d + 2 lam x = 0
    direct = np.linalg.solve(rho * A + 2 * lam * np.eye(p), rho * (f.b - pi) - (1 - rho) * d)
    np.testing.assert_allclose(x, direct, atol=1e-6)


def test_generic_box_boundary_kkt():
    c = np.array([3.0, -0.5, -4.0])
    K = pb.Box(-np.ones(3), np.ones(3))
    spec = spec_for(Shifted(c), np.zeros(3), K=K)
    x = sca.solve_generic(spec, tolerance=1e-10)
    np.testing.assert_allclose(x, [1.0, -0.5, -1.0], atol=1e-9)
    assert K.contains(x)
    g = spec.smooth_grad(x)
    assert np.linalg.norm(x - K.project(x - g)) < 1e-10
    assert spec.objective(x) <= spec.objective(K.project(spec.x_t))


def test_generic_l1_soft_threshold():
    c = np.array([2.0, 0.3, -1.0])
    spec = spec_for(Shifted(c), np.zeros(3), G=pb.L1Regularizer(0.5))
    np.testing.assert_allclose(sca.solve_generic(spec, 1e-12), [1.5, 0.0, -0.5], atol=1e-10)


def test_generic_l1_with_box():
    c = np.array([2.0, 0.3, -1.0])
    spec = spec_for(Shifted(c), np.zeros(3), G=pb.L1Regularizer(0.5), K=pb.Box(-np.ones(3), np.ones(3)))
    np.testing.assert_allclose(sca.solve_generic(spec, 1e-12), [1.0, 0.0, -0.5], atol=1e-10)


def test_nonsmooth_with_ball_refused():
    spec = spec_for(Shifted(np.ones(2)), np.zeros(2), G=pb.L1Regularizer(0.1), K=pb.Ball(np.zeros(2), 1.0))
    with pytest.raises(ValueError):
        sca.solve_generic(spec)


def test_generic_reports_nonconvergence():
    spec = spec_for(Shifted(np.full(4, 100.0)), np.zeros(4))
    spec.surrogate.hvp = lambda v: 1e-3 * v   # overestimate the step: slow geometric progress
    with pytest.raises(sca.SubproblemError) as err:
        sca.solve_generic(spec, tolerance=1e-12, max_iterations=5)
    assert err.value.residual > 0 and err.value.x is not None


def test_generic_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        sca.solve_generic(spec_for(Shifted(np.ones(2)), np.zeros(2)), tolerance=0)


# --------------------------------------------------------------------------
# closed form

def test_closed_form_zero_target():
    lin = nn.SampleLinearization(np.zeros(1), 0.0, np.ones(1), 0.0)
    sub = sca.assemble_closed_form([lin], 1.0, 0.0, 0.1, np.zeros(1), np.zeros(1), np.zeros(1))
    np.testing.assert_allclose(sca.solve_closed_form(sub), [0.0])


def test_closed_form_matches_generic_on_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(50):
        arch = nn.MLPArchitecture(int(rng.integers(1, 4)), (int(rng.integers(2, 5)),) * int(rng.integers(1, 3)))
        assert arch.n_params <= 50
        batch = int(rng.integers(1, 9))
        w_t, lins = random_lls(rng, arch, batch)
        rho, tau, lam = rng.uniform(0.1, 1.0), rng.uniform(0.5, 2.0), 1e-2
        pi, d = rng.normal(size=arch.n_params), rng.normal(size=arch.n_params)
        sub = sca.assemble_closed_form(lins, rho, tau, lam, pi, d, w_t)
        x_cf = sca.solve_closed_form(sub)
        x_gen = sca.solve_generic(sub.to_spec(), tolerance=1e-11, max_iterations=100_000)
        worst = max(worst, np.linalg.norm(x_cf - x_gen))
        assert np.linalg.norm(sub.A @ x_cf - sub.b) <= 1e-8 * (1 + np.linalg.norm(sub.b))
    assert worst < 1e-5


def test_closed_form_ridge_reduction():
    rng = np.random.default_rng(1)
    arch = nn.MLPArchitecture(2, (3,))
    w_t, lins = random_lls(rng, arch, 6)
    lam = 0.05
    sub = sca.assemble_closed_form(lins, 1.0, 0.0, lam, np.zeros(arch.n_params), np.zeros(arch.n_params), w_t)
    # textbook ridge: min (1/B) ||r - J w||^2 + lam ||w||^2  via an augmented least-squares problem
    J = np.stack([l.jacobian for l in lins])
    r = np.array([l.residual_target for l in lins])
    B = len(r)
    J_aug = np.vstack([J / np.sqrt(B), np.sqrt(lam) * np.eye(arch.n_params)])
    r_aug = np.concatenate([r / np.sqrt(B), np.zeros(arch.n_params)])
    ridge = np.linalg.lstsq(J_aug, r_aug, rcond=None)[0]
    np.testing.assert_allclose(sca.solve_closed_form(sub), ridge, atol=1e-8)


def test_closed_form_identity_system():
    sub = sca.assemble_closed_form([nn.SampleLinearization(np.zeros(3), 0.0, np.zeros(3), 0.0)], 1.0, 1.0, 0.5,
                                   np.zeros(3), np.zeros(3), np.zeros(3))
    v = np.array([1.0, -2.0, 3.0])
    sub.A = np.eye(3)
    sub.b = v.copy()
    np.testing.assert_array_equal(sca.solve_closed_form(sub), v)


def test_closed_form_two_by_two_cramer():
    sub = sca.assemble_closed_form([nn.SampleLinearization(np.zeros(2), 0.0, np.zeros(2), 0.0)], 1.0, 1.0, 0.5,
                                   np.zeros(2), np.zeros(2), np.zeros(2))
    sub.A = np.array([[4.0, 1.0], [1.0, 3.0]])
    sub.b = np.array([1.0, 2.0])
    det = 4 * 3 - 1 * 1
    expected = [(1 * 3 - 1 * 2) / det, (4 * 2 - 1 * 1) / det]
    np.testing.assert_allclose(sca.solve_closed_form(sub), expected, rtol=1e-14)


def test_closed_form_eigenvalue_floor():
    rng = np.random.default_rng(3)
    arch = nn.MLPArchitecture(2, (4,))
    w_t, lins = random_lls(rng, arch, 3)
    sub = sca.assemble_closed_form(lins, 0.4, 0.7, 0.01, np.zeros(arch.n_params), np.zeros(arch.n_params), w_t)
    np.testing.assert_allclose(sub.A, sub.A.T)
    assert np.linalg.eigvalsh(sub.A).min() >= sub.eigenvalue_floor - 1e-12


def test_closed_form_fallback_logged(caplog):
    rng = np.random.default_rng(4)
    arch = nn.MLPArchitecture(2, (3,))
    w_t, lins = random_lls(rng, arch, 4)
    sub = sca.assemble_closed_form(lins, 0.5, 1.0, 0.01, np.zeros(arch.n_params), np.ones(arch.n_params), w_t)
    expected = sca.solve_closed_form(sub)
    sub.A = -np.eye(arch.n_params)       # corrupt the system so the factorization fails
    with caplog.at_level(logging.WARNING, logger="snext.sca"):
        x = sca.solve_closed_form(sub)
    assert "falling back" in caplog.text
    np.testing.assert_allclose(x, expected, atol=1e-6)


@pytest.mark.parametrize("kwargs", [dict(rho=0.0), dict(rho=1.5), dict(tau=0.0, lam=0.0)])
def test_closed_form_preconditions(kwargs):
    lin = nn.SampleLinearization(np.zeros(1), 0.0, np.ones(1), 0.0)
    args = dict(rho=0.5, tau=1.0, lam=0.1)
    args.update(kwargs)
    with pytest.raises(ValueError):
        sca.assemble_closed_form([lin], args["rho"], args["tau"], args["lam"], np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        sca.assemble_closed_form([], 0.5, 1.0, 0.1, np.zeros(1), np.zeros(1), np.zeros(1))


def test_dispatch():
    rng = np.random.default_rng(5)
    arch = nn.MLPArchitecture(2, (3,))
    w_t, lins = random_lls(rng, arch, 4)
    surrogate = sca.LinearizedLeastSquaresSurrogate(lins, 1.0)
    p = arch.n_params
    spec = spec_for(surrogate, w_t, 0.5, rng.normal(size=p), rng.normal(size=p), pb.L2Regularizer(0.01))
    assert sca.closed_form_applicable(spec)
    a = sca.solve_subproblem(spec, "auto")
    b = sca.solve_subproblem(spec, "generic", tolerance=1e-11, max_iterations=100_000)
    np.testing.assert_allclose(a, b, atol=1e-6)
    boxed = spec_for(surrogate, w_t, 0.5, G=pb.L2Regularizer(0.01), K=pb.Box(-np.ones(p), np.ones(p)))
    assert not sca.closed_form_applicable(boxed)
    with pytest.raises(ValueError):
        sca.solve_subproblem(boxed, "closed_form")
    with pytest.raises(ValueError):
        sca.solve_subproblem(spec, "newton")


# --------------------------------------------------------------------------
# surrogate properties

def shipped_surrogates(rng):
    """(surrogate, true gradient at the base point, tau) for every shipped surrogate type."""
    tau = 0.8
    quad = pb.make_quadratic_instance(1, 4, seed=int(rng.integers(1000)), noise=0.5)
    f = quad.objectives[0]
    x_t = rng.normal(size=4)
    xi = quad.source.draw(int(rng.integers(100)))[0]
    yield f.surrogate(x_t, xi, tau), f.grad(x_t, xi), x_t, tau

    X, y = pb.make_synthetic_regression(30, 2, seed=int(rng.integers(1000)), hidden=(3,))
    nnp = pb.make_nn_regression_instance((X, y), 2, 5, architecture=nn.MLPArchitecture(2, (4,)))
    g = nnp.objectives[0]
    w_t = rng.normal(0, 0.5, nnp.dim)
    xi = nnp.source.draw(int(rng.integers(100)))[0]
    yield g.surrogate(w_t, xi, tau), g.grad(w_t, xi), w_t, tau

    central = pb.pooled(nnp)
    xi = central.source.draw(0)[0]
    yield central.objectives[0].surrogate(w_t, xi, tau), central.objectives[0].grad(w_t, xi), w_t, tau


def test_surrogate_gradient_matches_at_base_point():
    rng = np.random.default_rng(6)
    for _ in range(20):
        for surrogate, g_true, x_t, _tau in shipped_surrogates(rng):
            assert np.linalg.norm(surrogate.grad(x_t) - g_true) < 1e-8 * max(1.0, np.linalg.norm(g_true))


def test_surrogate_strongly_convex():
    rng = np.random.default_rng(7)
    for _ in range(10):
        for surrogate, _g, x_t, tau in shipped_surrogates(rng):
            for _ in range(5):
                a, b = x_t + rng.normal(size=x_t.size), x_t + rng.normal(size=x_t.size)
                lower = surrogate.value(a) + surrogate.grad(a) @ (b - a) + 0.5 * tau * np.sum((b - a) ** 2)
                assert surrogate.value(b) >= lower - 1e-10 * (1 + abs(lower))


def test_default_surrogate_majorizes_flat_quadratic():
    f = pb.QuadraticObjective(np.diag([0.3, 0.9]), np.array([1.0, -1.0]))
    x_t = np.array([0.5, 2.0])
    s = sca.default_surrogate_quadratic(f, x_t, None, tau=1.0)
    assert s.value(x_t) == f.value(x_t)
    np.testing.assert_array_equal(s.grad(x_t), f.grad(x_t))
    rng = np.random.default_rng(0)
    for _ in range(100):
        x = x_t + rng.normal(size=2)
        assert s.value(x) >= f.value(x) - 1e-12


def test_default_surrogate_requires_positive_tau():
    f = pb.QuadraticObjective(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        sca.default_surrogate_quadratic(f, np.zeros(2), None, 0.0)


def test_large_tau_pulls_towards_base_point():
    f = pb.QuadraticObjective(np.diag([1.0, 2.0]), np.array([3.0, -1.0]))
    x_t = np.array([0.2, 0.1])
    dist = []
    for tau in (1.0, 10.0, 100.0):
        spec = spec_for(f.surrogate(x_t, None, tau), x_t, 0.8, np.ones(2), np.zeros(2), pb.L2Regularizer(0.01))
        dist.append(np.linalg.norm(sca.solve_generic(spec, 1e-12) - x_t))
    assert dist[0] > dist[1] > dist[2] > 0


def test_minimizer_is_fixed_point():
    prob = pb.make_quadratic_instance(4, 3, seed=8)
    x_star = prob.info["minimizer"]
    grads = [f.grad(x_star) for f in prob.objectives]
    total = sum(grads)
    for i, f in enumerate(prob.objectives):
        for rho in (0.3, 1.0):
            spec = sca.SurrogateSpec(x_star, f.surrogate(x_star, None, 1.0), total - grads[i], total, rho,
                                     prob.regularizer, prob.feasible_set)
            np.testing.assert_allclose(sca.solve_generic(spec, 1e-12), x_star, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_power_iteration_matches_eigvalsh(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(5, 5))
    A = M @ M.T
    est = sca.power_iteration(lambda v: A @ v, 5, iterations=2000, seed=seed)
    top = np.linalg.eigvalsh(A)[-1]
    # a Rayleigh quotient never exceeds the top eigenvalue
    assert est <= top * (1 + 1e-12) and est >= 0.9 * top
