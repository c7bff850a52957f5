import itertools

import numpy as np
import pytest

from qubolin.model import INFINITE, ConstrainedProblem, LinearConstraint, QuadraticObjective


def all_configs(n):
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


def random_problem(rng, n, n_cons=2, quadratic=True, finite_share=0.5):
    """Small random problem with mixed finite/INFINITE weights."""
    quad = {}
    if quadratic:
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.4:
                    quad[(i, j)] = rng.normal()
    base = QuadraticObjective.build(n, rng.normal(size=n), quad, rng.normal())
    cons = []
    for _ in range(n_cons):
        a = rng.integers(-2, 3, n).astype(float)
        a[rng.integers(n)] = 1.0
        lam = float(rng.uniform(0.5, 3.0)) if rng.random() < finite_share else INFINITE
        cons.append(LinearConstraint.build(a, float(rng.integers(-1, 3)), lam))
    return ConstrainedProblem(n, base, tuple(cons))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
