import numpy as np
import pytest

import snext as s


def central_diff(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


@pytest.fixture
def quad6():
    """Deterministic strongly convex quadratic, 6 agents, 5 unknowns."""
    return s.make_quadratic_instance(6, 5, seed=1)


@pytest.fixture
def weights6():
    return s.metropolis_weights(s.random_connected_graph(6, 0.5, seed=42))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
