"""Seeded instance generators.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64;
normals by the ziggurat method), so instances are reproducible per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..model import (
    BINARY,
    INFINITE,
    SPIN,
    ConstrainedProblem,
    LinearConstraint,
    ModelError,
    QuadraticObjective,
)


def gen_kmin(N: int, K: int, seed: int = 0) -> ConstrainedProblem:
    """Pick the K smallest of N uniform random values: ``min h.q`` s.t. ``sum q = K``."""
    if not 1 <= K <= N:
        raise ModelError(f"need 1 <= K <= N, got K={K}, N={N}")
    h = np.random.default_rng(seed).uniform(0.0, 1.0, N)
    base = QuadraticObjective.build(N, h)
    return ConstrainedProblem(N, base, (LinearConstraint.build(np.ones(N), K),), BINARY, "kmin")


def partition_residual_unit(N: int) -> float:
    """Smallest residual-energy step ``(1/N)**2 / 2`` for numbers normalized by N."""
    return (1.0 / N) ** 2 / 2.0


def partition_numbers(N: int, seed: int = 0) -> np.ndarray:
    """A seeded permutation of ``1..N``, divided by N."""
    return np.random.default_rng(seed).permutation(np.arange(1, N + 1)) / N


def number_partition_problem(numbers) -> ConstrainedProblem:
    """``sum_i n_i sigma_i = 0`` in spin form, stored in binary form.

    With ``sigma = 2q - 1`` the constraint becomes ``sum 2 n_i q_i = sum n_i``,
    so ``F - C`` equals the spin-form signed difference.
    """
    n = np.asarray(numbers, dtype=np.float64)
    N = n.size
    c = LinearConstraint.build(2.0 * n, float(n.sum()))
    return ConstrainedProblem(N, QuadraticObjective.build(N), (c,), SPIN, "number_partition")


def gen_number_partition(N: int, seed: int = 0) -> ConstrainedProblem:
    if N < 1 or (N * (N + 1) // 2) % 2:
        raise ModelError(f"N={N}: 1+...+N is odd, so no perfect partition exists (need N % 4 in (0, 3))")
    return number_partition_problem(partition_numbers(N, seed))


@dataclass(frozen=True, eq=False)
class InferenceInstance:
    """Linear measurements ``y = A q0`` of a binary signal."""

    A: np.ndarray
    truth: np.ndarray
    y: np.ndarray

    def mse(self, q) -> float:
        d = np.asarray(q, dtype=np.float64) - self.truth
        return float(d @ d / self.truth.size)


def _measure(A: np.ndarray, q0: np.ndarray) -> np.ndarray:
    # same sparse row-sum order as constraint_values, so the truth is exactly feasible
    return np.asarray(sp.csr_matrix(A) @ q0.astype(np.float64)).ravel()


def _measurement_constraints(A: np.ndarray, y: np.ndarray):
    return tuple(LinearConstraint.build(A[mu], y[mu]) for mu in range(A.shape[0]))


def gen_linear_system(N: int, M: int, seed: int = 0):
    """Gaussian ``M x N`` measurements of a fair-coin binary signal.

    Returns ``(instance, problem)``; the problem has ``f0 = 0`` and one
    INFINITE-weight constraint per measurement.
    """
    if M < 1 or N < 1:
        raise ModelError("need N >= 1 and M >= 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((M, N))
    q0 = rng.integers(0, 2, N).astype(np.int8)
    y = _measure(A, q0)
    inst = InferenceInstance(A, q0, y)
    p = ConstrainedProblem(N, QuadraticObjective.build(N), _measurement_constraints(A, y), BINARY, "linear_system")
    return inst, p


def grid_edges(width: int, height: int) -> list[tuple[int, int]]:
    """Nearest-neighbour pairs ``(i, j)``, ``i < j``, on a row-major grid."""
    edges = []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                edges.append((i, i + 1))
            if r + 1 < height:
                edges.append((i, i + width))
    return edges


def grid_prior(width: int, height: int, coupling: float = 1.0, attractive: bool = True) -> QuadraticObjective:
    """``sum_<ij> J q_i q_j`` with ``J = -coupling`` (attractive) or ``+coupling``."""
    J = -coupling if attractive else coupling
    return QuadraticObjective.build(width * height, None, {e: J for e in grid_edges(width, height)})


def random_blob(width: int, height: int, rng: np.random.Generator, fill=(0.2, 0.3)) -> np.ndarray:
    """Connected set of cells grown by a random walk until a target fill fraction."""
    N = width * height
    target = max(1, int(round(rng.uniform(*fill) * N)))
    q = np.zeros(N, dtype=np.int8)
    r, c = int(rng.integers(height)), int(rng.integers(width))
    q[r * width + c] = 1
    count = 1
    moves = ((0, 1), (0, -1), (1, 0), (-1, 0))
    while count < target:
        dr, dc = moves[int(rng.integers(4))]
        if 0 <= r + dr < height and 0 <= c + dc < width:
            r, c = r + dr, c + dc
            if not q[r * width + c]:
                q[r * width + c] = 1
                count += 1
    return q


def gen_structured_cs(width: int, height: int, alpha: float, seed: int = 0, coupling: float = 1.0,
                      attractive: bool = True, prior: bool = True):
    """Undersampled measurements of a connected blob, with a grid-coupling prior as ``f0``.

    ``prior=False`` drops the prior (``f0 = 0``) for comparison runs.
    """
    if width < 2 or height < 2:
        raise ModelError("grid must be at least 2x2")
    if not 0 < alpha < 1:
        raise ModelError("alpha must lie in (0, 1)")
    N = width * height
    M = max(1, int(round(alpha * N)))
    rng = np.random.default_rng(seed)
    q0 = random_blob(width, height, rng)
    A = rng.standard_normal((M, N))
    y = _measure(A, q0)
    base = grid_prior(width, height, coupling, attractive) if prior else QuadraticObjective.build(N)
    inst = InferenceInstance(A, q0, y)
    p = ConstrainedProblem(N, base, _measurement_constraints(A, y), BINARY, "structured_cs")
    return inst, p


def double_constraint_problem(h) -> ConstrainedProblem:
    """``min sum h_it q_it`` with every row and every column summing to one.

    Variable ``(i, t)`` has index ``i * L + t``; row constraints come first.
    """
    h = np.asarray(h, dtype=np.float64)
    L = h.shape[0]
    if h.shape != (L, L) or L < 2:
        raise ModelError("h must be an L x L matrix with L >= 2")
    idx = np.arange(L * L).reshape(L, L)
    cons = [LinearConstraint.build({int(k): 1.0 for k in idx[i]}, 1.0) for i in range(L)]
    cons += [LinearConstraint.build({int(k): 1.0 for k in idx[:, t]}, 1.0) for t in range(L)]
    return ConstrainedProblem(L * L, QuadraticObjective.build(L * L, h.ravel()), tuple(cons), BINARY,
                              "double_constraint")


def gen_double_constraint(L: int, seed: int = 0) -> ConstrainedProblem:
    if L < 2:
        raise ModelError("L must be >= 2")
    return double_constraint_problem(np.random.default_rng(seed).uniform(0.0, 1.0, (L, L)))


def spectral_linearize(A, tol: float = 1e-10) -> ConstrainedProblem:
    """Rewrite ``1/2 q^T A q`` (A symmetric PSD) as ``1/2 sum_k F_k(q)**2``.

    With ``A = U^T diag(lam) U`` each positive eigenvalue gives a constraint
    ``F_k(q) = sqrt(lam_k) u_k . q`` with target 0 and unit penalty weight.
    Eigenvalues below ``-tol`` are rejected, since their square roots would
    be imaginary.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError("A must be square")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
        raise ModelError("A must be symmetric")
    N = A.shape[0]
    lam, vecs = np.linalg.eigh(0.5 * (A + A.T))
    if lam.size and lam.min() < -tol * scale:
        raise ModelError(f"A has a negative eigenvalue {lam.min():.3g}; only PSD matrices are supported")
    cons = []
    for k in np.flatnonzero(lam > tol * scale):
        cons.append(LinearConstraint.build(np.sqrt(lam[k]) * vecs[:, k], 0.0, penalty_weight=1.0))
    return ConstrainedProblem(N, QuadraticObjective.build(N), tuple(cons), BINARY, "spectral")
