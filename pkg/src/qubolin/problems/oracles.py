"""Exact reference solvers used to check the iterative solver."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..model import ConstrainedProblem, ModelError, feasible, penalty_energies

BRUTE_FORCE_MAX_VARS = 24


class InfeasibleError(ModelError):
    pass


def _configs(n: int, start: int, stop: int) -> np.ndarray:
    # q_0 is the most significant bit, so code order == lexicographic order
    codes = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def brute_force(p: ConstrainedProblem, chunk: int = 1 << 16):
    """Exact minimizer by enumeration of all ``2**n_vars`` configurations.

    Finite-weight constraints enter through the penalty form; INFINITE-weight
    and one-hot constraints restrict the search to exactly feasible
    configurations.  Ties go to the lexicographically smallest vector.
    Returns ``(q, energy)``.
    """
    n = p.n_vars
    if n > BRUTE_FORCE_MAX_VARS:
        raise ModelError(f"brute force supports at most {BRUTE_FORCE_MAX_VARS} variables, got {n}")
    best_q, best_e = None, np.inf
    for start in range(0, 1 << n, chunk):
        s = _configs(n, start, min(1 << n, start + chunk))
        e = penalty_energies(p, s, infinite_weight=0.0)
        e[~feasible(p, s)] = np.inf
        k = int(np.argmin(e))
        if e[k] < best_e:
            best_q, best_e = s[k].copy(), float(e[k])
    if best_q is None:
        raise InfeasibleError("no configuration satisfies the constraints")
    return best_q, best_e


def kmin_oracle(h, K: int):
    """Indicator of the K smallest entries of ``h`` and their sum."""
    h = np.asarray(h, dtype=np.float64)
    order = np.argsort(h, kind="stable")[:K]
    q = np.zeros(h.size, dtype=np.int8)
    q[order] = 1
    return q, float(h @ q)


def hungarian_oracle(h):
    """Optimal permutation matrix (flattened row-major) for cost matrix ``h`` and its cost."""
    h = np.asarray(h, dtype=np.float64)
    rows, cols = linear_sum_assignment(h)
    q = np.zeros(h.shape, dtype=np.int8)
    q[rows, cols] = 1
    return q.ravel(), float(h[rows, cols].sum())
