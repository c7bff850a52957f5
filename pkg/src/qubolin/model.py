"""Problem representation for constrained binary quadratic optimization.

A :class:`ConstrainedProblem` is a base objective ``f0(q)`` (linear plus
pairwise terms over binary ``q``) together with linear equality constraints
``F_k(q) = sum_i a_ki q_i = C_k``.  Each constraint carries a penalty weight
``lambda_k``; the penalty form of the problem is

    f(q) = f0(q) + 1/2 sum_k lambda_k (F_k(q) - C_k)**2

Instead of sampling the penalty form (whose squared terms couple every
variable in a constraint), the multiplier form

    H(q, nu) = f0(q) - sum_k nu_k (F_k(q) - C_k) - sum_k nu_k**2 / (2 lambda_k)

only adds local fields.  :func:`build_effective` produces that model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import jsonschema
import numpy as np
import scipy.sparse as sp

INFINITE = math.inf

BINARY = "binary"
SPIN = "spin"


class ModelError(ValueError):
    """Raised for malformed problems or mismatched arguments."""


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def to_spin(q) -> np.ndarray:
    """Map binary {0,1} values to spins {-1,+1} via sigma = 2q - 1."""
    return 2 * np.asarray(q, dtype=np.int8) - 1


def to_binary(sigma) -> np.ndarray:
    """Map spins {-1,+1} to binary {0,1} via q = (1 + sigma) / 2."""
    return ((1 + np.asarray(sigma, dtype=np.int8)) // 2).astype(np.int8)


def as_binary_vector(q, n_vars: int | None = None) -> np.ndarray:
    """Validate ``q`` as a 0/1 vector (or a 2D batch of them)."""
    arr = np.asarray(q)
    if arr.ndim not in (1, 2):
        raise ModelError(f"binary vector must be 1D or 2D, got shape {arr.shape}")
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ModelError("binary vector entries must be 0 or 1")
    if n_vars is not None and arr.shape[-1] != n_vars:
        raise ModelError(f"dimension mismatch: expected {n_vars} variables, got {arr.shape[-1]}")
    return arr.astype(np.int8, copy=False)


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``constant + sum_i linear[i] q_i + sum_{i<j} Q_ij q_i q_j``.

    Pairwise terms are kept as COO triplets with ``i < j`` and no duplicates;
    diagonal entries are folded into the linear part since ``q_i**2 == q_i``.
    """

    n_vars: int
    linear: np.ndarray
    quad_rows: np.ndarray
    quad_cols: np.ndarray
    quad_vals: np.ndarray
    constant: float = 0.0

    @classmethod
    def build(cls, n_vars: int, linear=None, quadratic=None, constant: float = 0.0) -> "QuadraticObjective":
        """Construct from a dense/sparse linear part and a pairwise mapping.

        ``linear`` may be a length-``n_vars`` sequence or a ``{i: coeff}``
        mapping.  ``quadratic`` may be a ``{(i, j): coeff}`` mapping or a
        ``(rows, cols, vals)`` triple; ``(i, j)`` and ``(j, i)`` are summed.
        """
        if n_vars < 0:
            raise ModelError("n_vars must be nonnegative")
        lin = np.zeros(n_vars)
        if linear is not None:
            if isinstance(linear, Mapping):
                for i, v in linear.items():
                    i = int(i)
                    if not 0 <= i < n_vars:
                        raise ModelError(f"linear index {i} out of range")
                    lin[i] += float(v)
            else:
                arr = np.asarray(linear, dtype=np.float64)
                if arr.shape != (n_vars,):
                    raise ModelError(f"linear part must have shape ({n_vars},), got {arr.shape}")
                lin += arr
        if quadratic is None:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        elif isinstance(quadratic, Mapping):
            keys = list(quadratic.keys())
            rows = np.array([int(k[0]) for k in keys], dtype=np.int64)
            cols = np.array([int(k[1]) for k in keys], dtype=np.int64)
            vals = np.array([float(quadratic[k]) for k in keys])
        else:
            r, c, v = quadratic
            rows = np.asarray(r, dtype=np.int64).ravel()
            cols = np.asarray(c, dtype=np.int64).ravel()
            vals = np.asarray(v, dtype=np.float64).ravel()
            if not (rows.shape == cols.shape == vals.shape):
                raise ModelError("quadratic triplets must have equal lengths")
        if rows.size:
            if rows.min() < 0 or cols.min() < 0 or max(rows.max(), cols.max()) >= n_vars:
                raise ModelError("quadratic index out of range")
            diag = rows == cols
            if diag.any():
                np.add.at(lin, rows[diag], vals[diag])
                rows, cols, vals = rows[~diag], cols[~diag], vals[~diag]
            lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
            coo = sp.coo_matrix((vals, (lo, hi)), shape=(n_vars, n_vars))
            coo.sum_duplicates()
            keep = coo.data != 0.0
            rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
        return cls(
            n_vars=int(n_vars),
            linear=_frozen(lin),
            quad_rows=_frozen(rows, np.int64),
            quad_cols=_frozen(cols, np.int64),
            quad_vals=_frozen(vals),
            constant=float(constant),
        )

    @property
    def has_quadratic(self) -> bool:
        return self.quad_vals.size > 0

    @cached_property
    def upper(self) -> sp.csr_matrix:
        """Strictly upper-triangular coupling matrix."""
        return sp.csr_matrix(
            (self.quad_vals, (self.quad_rows, self.quad_cols)), shape=(self.n_vars, self.n_vars)
        )

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric coupling matrix (``Q_ij`` stored at both (i,j) and (j,i))."""
        u = self.upper
        return (u + u.T).tocsr()

    def energy(self, q) -> float:
        q = as_binary_vector(q, self.n_vars)
        if q.ndim != 1:
            raise ModelError("energy() takes a single vector; use energies() for batches")
        return float(self.energies(q[None, :])[0])

    def energies(self, samples) -> np.ndarray:
        s = np.atleast_2d(as_binary_vector(samples, self.n_vars)).astype(np.float64)
        e = s @ self.linear + self.constant
        if self.has_quadratic:
            e = e + np.einsum("ij,ij->i", np.asarray(self.upper @ np.ascontiguousarray(s.T)).T, s)
        return e

    def with_linear(self, linear, constant: float) -> "QuadraticObjective":
        """Same pairwise part, replaced linear part and constant."""
        return QuadraticObjective(
            n_vars=self.n_vars,
            linear=_frozen(linear),
            quad_rows=self.quad_rows,
            quad_cols=self.quad_cols,
            quad_vals=self.quad_vals,
            constant=float(constant),
        )

    def to_dict(self) -> dict:
        return {
            "linear": {str(i): float(v) for i, v in enumerate(self.linear) if v != 0.0},
            "quadratic": {
                f"{i},{j}": float(v) for i, j, v in zip(self.quad_rows, self.quad_cols, self.quad_vals)
            },
            "constant": float(self.constant),
        }

    @classmethod
    def from_dict(cls, n_vars: int, d: Mapping) -> "QuadraticObjective":
        quad = {}
        for key, v in d.get("quadratic", {}).items():
            i, j = (int(x) for x in key.split(","))
            if i >= j:
                raise ModelError(f"quadratic key {key!r} must satisfy i < j")
            quad[(i, j)] = v
        return cls.build(n_vars, d.get("linear", {}), quad, d.get("constant", 0.0))


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    """``sum_i coeffs[i] q_i == target`` with penalty weight ``penalty_weight``.

    ``hard_onehot`` constraints are enforced by the sampler (exactly one
    variable of the group set) instead of being folded into multipliers.
    """

    indices: np.ndarray
    values: np.ndarray
    target: float
    penalty_weight: float = INFINITE
    hard_onehot: bool = False

    @classmethod
    def build(cls, coeffs, target: float, penalty_weight: float = INFINITE, hard_onehot: bool = False):
        if isinstance(coeffs, Mapping):
            items = sorted((int(i), float(v)) for i, v in coeffs.items())
            idx = np.array([i for i, _ in items], dtype=np.int64)
            val = np.array([v for _, v in items])
        else:
            arr = np.asarray(coeffs, dtype=np.float64)
            idx = np.flatnonzero(arr)
            val = arr[idx]
        keep = val != 0.0
        idx, val = idx[keep], val[keep]
        if idx.size == 0:
            raise ModelError("constraint needs at least one nonzero coefficient")
        if np.unique(idx).size != idx.size:
            raise ModelError("duplicate constraint index")
        lam = float(penalty_weight)
        if not lam > 0:
            raise ModelError(f"penalty weight must be > 0 or INFINITE, got {penalty_weight}")
        if hard_onehot and not (np.all(val == 1.0) and float(target) == 1.0):
            raise ModelError("hard one-hot constraints must have unit coefficients and target 1")
        return cls(_frozen(idx, np.int64), _frozen(val), float(target), lam, bool(hard_onehot))

    @classmethod
    def onehot(cls, indices: Iterable[int]) -> "LinearConstraint":
        idx = list(indices)
        return cls.build({i: 1.0 for i in idx}, 1.0, INFINITE, hard_onehot=True)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.penalty_weight)


@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    """Base objective plus linear equality constraints.

    ``encoding`` records whether the problem was written in spin form; the
    stored coefficients are always in binary form.
    """

    n_vars: int
    base: QuadraticObjective
    constraints: tuple[LinearConstraint, ...] = ()
    encoding: str = BINARY
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.base.n_vars != self.n_vars:
            raise ModelError("base objective size does not match n_vars")
        if self.encoding not in (BINARY, SPIN):
            raise ModelError(f"unknown encoding {self.encoding!r}")
        seen = np.zeros(self.n_vars, dtype=bool)
        for c in self.constraints:
            if c.indices.size and c.indices.max() >= self.n_vars:
                raise ModelError("constraint index out of range")
            if c.hard_onehot:
                if seen[c.indices].any():
                    raise ModelError("variable appears in two one-hot groups")
                seen[c.indices] = True

    # Soft constraints are the ones that get a multiplier.
    @cached_property
    def soft(self) -> tuple[LinearConstraint, ...]:
        return tuple(c for c in self.constraints if not c.hard_onehot)

    @cached_property
    def hard(self) -> tuple[LinearConstraint, ...]:
        return tuple(c for c in self.constraints if c.hard_onehot)

    @property
    def n_multipliers(self) -> int:
        return len(self.soft)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Coefficient matrix of the soft constraints, shape (K, N)."""
        return _stack(self.soft, self.n_vars)

    @cached_property
    def targets(self) -> np.ndarray:
        return _frozen([c.target for c in self.soft])

    @cached_property
    def weights(self) -> np.ndarray:
        return _frozen([c.penalty_weight for c in self.soft])

    @cached_property
    def onehot_groups(self) -> tuple[np.ndarray, ...]:
        return tuple(c.indices for c in self.hard)

    @cached_property
    def _feas_atol(self) -> np.ndarray:
        return _frozen([1e-9 * (1.0 + np.abs(c.values).sum() + abs(c.target)) for c in self.soft])


def _stack(constraints: Sequence[LinearConstraint], n_vars: int) -> sp.csr_matrix:
    if not constraints:
        return sp.csr_matrix((0, n_vars))
    rows = np.concatenate([np.full(c.indices.size, k) for k, c in enumerate(constraints)])
    cols = np.concatenate([c.indices for c in constraints])
    vals = np.concatenate([c.values for c in constraints])
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(constraints), n_vars))


@dataclass(frozen=True)
class MultiplierState:
    nu: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        nu = np.array(self.nu, dtype=np.float64, ndmin=1)
        if nu.ndim != 1:
            raise ModelError("multipliers must be a vector")
        if not np.all(np.isfinite(nu)):
            raise ModelError("multipliers must be finite")
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)

    @classmethod
    def zeros(cls, p: ConstrainedProblem) -> "MultiplierState":
        return cls(np.zeros(p.n_multipliers))

    @classmethod
    def full(cls, p: ConstrainedProblem, value: float) -> "MultiplierState":
        return cls(np.full(p.n_multipliers, float(value)))


@dataclass(frozen=True, eq=False)
class EffectiveModel:
    """Linearized model ``f0(q) - sum_k nu_k F_k(q) + const`` handed to samplers."""

    objective: QuadraticObjective
    onehot_groups: tuple[np.ndarray, ...] = field(default_factory=tuple)

    @property
    def n_vars(self) -> int:
        return self.objective.n_vars

    @property
    def field_only(self) -> bool:
        return not self.objective.has_quadratic

    def energies(self, samples) -> np.ndarray:
        return self.objective.energies(samples)

    def energy(self, q) -> float:
        return self.objective.energy(q)

    def satisfies_groups(self, samples) -> np.ndarray:
        s = np.atleast_2d(samples)
        ok = np.ones(s.shape[0], dtype=bool)
        for g in self.onehot_groups:
            ok &= s[:, g].sum(axis=1) == 1
        return ok

    def to_dict(self) -> dict:
        """Serialize with the problem schema; groups become hard one-hot constraints."""
        return {
            "n_vars": self.n_vars,
            "encoding": BINARY,
            "base": self.objective.to_dict(),
            "constraints": [
                {"coeffs": {str(int(i)): 1.0 for i in g}, "target": 1.0, "lambda": "inf", "hard_onehot": True}
                for g in self.onehot_groups
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EffectiveModel":
        p = problem_from_dict(d)
        if p.soft:
            raise ModelError("effective model may only carry hard one-hot constraints")
        return cls(p.base, p.onehot_groups)


# ---------------------------------------------------------------------------
# evaluation


def constraint_values(p: ConstrainedProblem, q) -> np.ndarray:
    """``F_k(q)`` for every soft constraint; a batch gives shape (S, K)."""
    q = as_binary_vector(q, p.n_vars)
    if q.ndim == 1:
        return np.asarray(p.matrix @ q.astype(np.float64)).ravel()
    return np.asarray(p.matrix @ np.ascontiguousarray(q.T, dtype=np.float64)).T


def evaluate_penalty_form(p: ConstrainedProblem, q) -> float:
    """``f0(q) + 1/2 sum_k lambda_k (F_k(q) - C_k)**2``.

    Hard one-hot constraints are enforced structurally and contribute nothing.
    Raises :class:`ModelError` if any soft constraint has an infinite weight.
    """
    if not np.all(np.isfinite(p.weights)):
        raise ModelError("penalty form is undefined with an INFINITE penalty weight")
    q = as_binary_vector(q, p.n_vars)
    if q.ndim != 1:
        raise ModelError("evaluate_penalty_form takes a single vector")
    return float(penalty_energies(p, q[None, :])[0])


def penalty_energies(p: ConstrainedProblem, samples, infinite_weight: float = 1.0) -> np.ndarray:
    """Penalty-form energies of a batch, with INFINITE weights replaced.

    Used to rank and report configurations of problems whose weights are
    INFINITE; with ``infinite_weight=1`` the squared-residual part of the
    number-partition and linear-inference problems is recovered exactly.
    """
    return assess(p, samples, infinite_weight)[1]


def feasible(p: ConstrainedProblem, samples) -> np.ndarray:
    """True where every INFINITE-weight and hard one-hot constraint holds.

    Equality is checked to a tolerance scaled by the constraint's magnitude,
    which is exact for integral data and absorbs rounding for real data.
    """
    return assess(p, samples)[2]


def assess(p: ConstrainedProblem, samples, infinite_weight: float = 1.0):
    """Constraint values, penalty energies and feasibility of a batch in one pass."""
    s = np.atleast_2d(as_binary_vector(samples, p.n_vars))
    F = constraint_values(p, s)
    e = p.base.energies(s)
    ok = np.ones(s.shape[0], dtype=bool)
    if p.n_multipliers:
        r = F - p.targets
        w = np.where(np.isfinite(p.weights), p.weights, infinite_weight)
        e = e + 0.5 * (r * r) @ w
        strict = ~np.isfinite(p.weights)
        if strict.any():
            ok &= np.all(np.abs(r[:, strict]) <= p._feas_atol[strict], axis=1)
    for g in p.onehot_groups:
        ok &= s[:, g].sum(axis=1) == 1
    return F, e, ok


def build_effective(p: ConstrainedProblem, nu) -> EffectiveModel:
    """Fold the multipliers into the linear part of the base objective.

    The result evaluates to ``f0(q) - sum_k nu_k (F_k(q) - C_k)``, minus
    ``nu_k**2 / (2 lambda_k)`` for every finite weight.
    """
    nu = nu.nu if isinstance(nu, MultiplierState) else np.asarray(nu, dtype=np.float64)
    if nu.shape != (p.n_multipliers,):
        raise ModelError(f"expected {p.n_multipliers} multipliers, got shape {nu.shape}")
    linear = p.base.linear - np.asarray(p.matrix.T @ nu).ravel()
    const = p.base.constant + float(nu @ p.targets)
    finite = np.isfinite(p.weights)
    if finite.any():
        const -= float(np.sum(nu[finite] ** 2 / (2.0 * p.weights[finite])))
    return EffectiveModel(p.base.with_linear(linear, const), p.onehot_groups)


def residual(p: ConstrainedProblem, expectations, nu=None) -> np.ndarray:
    """Gradient of the dual: ``C_k - <F_k>``, minus ``nu_k / lambda_k`` for finite weights when ``nu`` is given."""
    ex = np.asarray(expectations, dtype=np.float64)
    if ex.shape != (p.n_multipliers,):
        raise ModelError(f"expected {p.n_multipliers} expectations, got shape {ex.shape}")
    r = p.targets - ex
    if nu is not None:
        nu = nu.nu if isinstance(nu, MultiplierState) else np.asarray(nu, dtype=np.float64)
        if nu.shape != ex.shape:
            raise ModelError("multiplier length mismatch")
        finite = np.isfinite(p.weights)
        r = r.copy()
        r[finite] -= nu[finite] / p.weights[finite]
    return r


def ising_form(obj: QuadraticObjective):
    """Spin-form coefficients ``(h, J, offset)`` with energy ``-h.s - sum J_ij s_i s_j + offset``."""
    n = obj.n_vars
    h = -0.5 * obj.linear.copy()
    offset = obj.constant + 0.5 * obj.linear.sum()
    J = {}
    for i, j, v in zip(obj.quad_rows, obj.quad_cols, obj.quad_vals):
        # v q_i q_j = v/4 (1 + s_i + s_j + s_i s_j)
        h[i] -= v / 4
        h[j] -= v / 4
        offset += v / 4
        J[(int(i), int(j))] = -v / 4
    return h, J, offset


# ---------------------------------------------------------------------------
# serialization

_COEFF_MAP = {"type": "object", "patternProperties": {"^[0-9]+$": {"type": "number"}}, "additionalProperties": False}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["n_vars", "base", "constraints"],
    "properties": {
        "n_vars": {"type": "integer", "minimum": 0},
        "encoding": {"enum": [BINARY, SPIN]},
        "name": {"type": "string"},
        "base": {
            "type": "object",
            "required": ["linear", "quadratic", "constant"],
            "properties": {
                "linear": _COEFF_MAP,
                "quadratic": {
                    "type": "object",
                    "patternProperties": {"^[0-9]+,[0-9]+$": {"type": "number"}},
                    "additionalProperties": False,
                },
                "constant": {"type": "number"},
            },
        },
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["coeffs", "target", "lambda"],
                "properties": {
                    "coeffs": _COEFF_MAP,
                    "target": {"type": "number"},
                    "lambda": {"anyOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]},
                    "hard_onehot": {"type": "boolean"},
                },
            },
        },
    },
}


def problem_to_dict(p: ConstrainedProblem) -> dict:
    return {
        "n_vars": p.n_vars,
        "encoding": p.encoding,
        "name": p.name,
        "base": p.base.to_dict(),
        "constraints": [
            {
                "coeffs": {str(int(i)): float(v) for i, v in zip(c.indices, c.values)},
                "target": float(c.target),
                "lambda": float(c.penalty_weight) if c.is_finite else "inf",
                "hard_onehot": c.hard_onehot,
            }
            for c in p.constraints
        ],
    }


def problem_from_dict(d: Mapping) -> ConstrainedProblem:
    try:
        jsonschema.validate(d, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ModelError(f"invalid problem document: {exc.message}") from exc
    n = int(d["n_vars"])
    cons = [
        LinearConstraint.build(
            {int(i): v for i, v in c["coeffs"].items()},
            c["target"],
            INFINITE if c["lambda"] == "inf" else c["lambda"],
            c.get("hard_onehot", False),
        )
        for c in d["constraints"]
    ]
    return ConstrainedProblem(
        n, QuadraticObjective.from_dict(n, d["base"]), tuple(cons), d.get("encoding", BINARY), d.get("name", "")
    )


def dumps(p: ConstrainedProblem) -> str:
    return json.dumps(problem_to_dict(p))


def loads(text: str) -> ConstrainedProblem:
    return problem_from_dict(json.loads(text))
