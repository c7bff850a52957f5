"""Samplers for effective (multiplier-form) models.

All local samplers draw from ``Q(q) ~ exp(-beta * H(q))`` where ``H`` is the
whole effective energy, so the large-beta limit is the ground state of the
effective model.  Every sampler is a pure function of ``(model, config)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from . import _kernels
from .model import ConstrainedProblem, EffectiveModel, as_binary_vector, constraint_values

MASK64 = (1 << 64) - 1


class SamplerError(RuntimeError):
    pass


def geometric_schedule(beta_min: float = 0.1, beta_max: float = 50.0, stages: int = 32) -> tuple[float, ...]:
    if stages == 1:
        return (float(beta_max),)
    return tuple(float(b) for b in np.geomspace(beta_min, beta_max, stages))


@dataclass(frozen=True)
class SamplerConfig:
    """Annealing schedule and batch size.

    Samples are recorded after the schedule and ``sweeps_per_beta`` further
    sweeps at ``read_beta`` (skipped when ``read_beta`` equals the last
    scheduled value, which is the default).
    """

    beta_schedule: tuple[float, ...] = field(default_factory=geometric_schedule)
    sweeps_per_beta: int = 10
    n_samples: int = 100
    seed: int = 0
    read_beta: float | None = None

    def __post_init__(self):
        sched = tuple(float(b) for b in self.beta_schedule)
        object.__setattr__(self, "beta_schedule", sched)
        if not sched:
            raise ValueError("beta schedule must be nonempty")
        if any(b < 0 or not math.isfinite(b) for b in sched):
            raise ValueError("inverse temperatures must be finite and >= 0")
        if any(b1 < b0 for b0, b1 in zip(sched, sched[1:])):
            raise ValueError("beta schedule must be nondecreasing")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sweeps_per_beta < 1:
            raise ValueError("sweeps_per_beta must be >= 1")
        if self.read_beta is not None and (self.read_beta < 0 or not math.isfinite(self.read_beta)):
            raise ValueError("read_beta must be finite and >= 0")
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    @property
    def final_beta(self) -> float:
        return self.beta_schedule[-1] if self.read_beta is None else float(self.read_beta)

    def sweep_betas(self) -> np.ndarray:
        """Inverse temperature of every sweep, in order."""
        betas = list(self.beta_schedule)
        if self.read_beta is not None and self.read_beta != betas[-1]:
            betas.append(float(self.read_beta))
        return np.repeat(np.asarray(betas), self.sweeps_per_beta)

    def to_dict(self) -> dict:
        return {
            "beta_schedule": list(self.beta_schedule),
            "sweeps_per_beta": self.sweeps_per_beta,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "read_beta": self.read_beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        if "beta_schedule" in d:
            d["beta_schedule"] = tuple(d["beta_schedule"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    samples: np.ndarray
    energies: np.ndarray
    sampler_id: str = ""

    def __post_init__(self):
        s = np.atleast_2d(as_binary_vector(self.samples))
        e = np.asarray(self.energies, dtype=np.float64).ravel()
        if s.shape[0] != e.shape[0]:
            raise SamplerError("samples and energies differ in length")
        s.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "energies", e)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @classmethod
    def from_samples(cls, model: EffectiveModel, samples, sampler_id: str = "") -> "SampleBatch":
        s = np.atleast_2d(as_binary_vector(samples, model.n_vars))
        return cls(s, model.energies(s), sampler_id)


class Sampler(Protocol):
    """Anything that turns an effective model into a batch, given a seed."""

    def sample(self, model: EffectiveModel, seed: int) -> SampleBatch: ...


# ---------------------------------------------------------------------------
# closed forms for field-only models


def _require_field_only(m: EffectiveModel):
    if not m.field_only:
        raise SamplerError("model has quadratic terms; closed forms need a field-only model")


def exact_field_minimize(m: EffectiveModel) -> np.ndarray:
    """Exact minimizer of a field-only model, one-hot groups respected.

    Ungrouped ``q_i = 1`` iff its coefficient is negative (ties give 0).
    Each group sets its smallest coefficient to 1 (ties to the lowest index).
    """
    _require_field_only(m)
    lin = m.objective.linear
    q = (lin < 0).astype(np.int8)
    for g in m.onehot_groups:
        q[g] = 0
        q[g[np.argmin(lin[g])]] = 1
    return q


def exact_field_expectation(m: EffectiveModel, beta: float) -> np.ndarray:
    """Per-variable means under ``exp(-beta H)`` for a field-only model.

    Ungrouped variables are independent logistics; grouped ones follow a
    softmax over the group.
    """
    _require_field_only(m)
    lin = m.objective.linear
    x = beta * lin
    # 1 / (1 + exp(x)), stable for both signs
    mean = np.exp(-np.logaddexp(0.0, x))
    for g in m.onehot_groups:
        z = -x[g]
        z = z - z.max()
        w = np.exp(z)
        mean[g] = w / w.sum()
    return mean


# ---------------------------------------------------------------------------
# Gibbs / simulated annealing


def _csr_parts(m: EffectiveModel):
    a = m.objective.adjacency
    return (
        np.ascontiguousarray(m.objective.linear, dtype=np.float64),
        a.indptr.astype(np.int64),
        a.indices.astype(np.int64),
        a.data.astype(np.float64),
    )


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.default_rng((int(seed) ^ int(replica)) & MASK64)


def gibbs_sample(m: EffectiveModel, cfg: SamplerConfig) -> SampleBatch:
    """Heat-bath simulated annealing, ``cfg.n_samples`` independent restarts.

    Replica ``r`` starts from a uniform random configuration drawn from the
    stream seeded with ``cfg.seed ^ r`` and sweeps sites in ascending order
    through the whole schedule.  One-hot groups are ignored here (see
    :func:`onehot_gibbs_sample`).  When the model has no couplings every site
    is independent, so only the last sweep influences the recorded state:
    each replica then draws one heat-bath sweep at the final beta.
    """
    n = m.n_vars
    betas = cfg.sweep_betas()
    field_only = m.field_only
    if field_only:
        betas = betas[-1:]
    lin, indptr, indices, data = _csr_parts(m)
    p_one = np.exp(-np.logaddexp(0.0, betas[-1] * lin))
    out = np.empty((cfg.n_samples, n), dtype=np.int8)
    for r in range(cfg.n_samples):
        rng = replica_rng(cfg.seed, r)
        if field_only:
            out[r] = rng.random(n) < p_one
            continue
        state = (rng.random(n) < 0.5).astype(np.int8)
        _kernels.heat_bath(state, lin, indptr, indices, data, betas, rng.random((betas.size, n)))
        out[r] = state
    return SampleBatch(out, m.energies(out), "gibbs")


def _group_arrays(m: EffectiveModel):
    groups = sorted(m.onehot_groups, key=lambda g: int(g.min()))
    seen = np.zeros(m.n_vars, dtype=np.int64)
    for g in groups:
        seen[g] += 1
    if np.any(seen > 1):
        raise SamplerError("index appears in two one-hot groups")
    gptr = np.zeros(len(groups) + 1, dtype=np.int64)
    gptr[1:] = np.cumsum([g.size for g in groups])
    gidx = np.concatenate(groups).astype(np.int64) if groups else np.zeros(0, dtype=np.int64)
    free = np.flatnonzero(seen == 0).astype(np.int64)
    return gptr, gidx, free


def onehot_gibbs_sample(m: EffectiveModel, cfg: SamplerConfig) -> SampleBatch:
    """Annealed sampling that hops only between one-hot-feasible states.

    Every group is resampled as one categorical variable (option chosen with
    probability proportional to ``exp(-beta * energy with that option on)``);
    remaining variables use single-site heat bath.  Every emitted sample
    satisfies every group exactly.
    """
    n = m.n_vars
    gptr, gidx, free = _group_arrays(m)
    betas = cfg.sweep_betas()
    if m.field_only:
        betas = betas[-1:]
    lin, indptr, indices, data = _csr_parts(m)
    out = np.empty((cfg.n_samples, n), dtype=np.int8)
    for r in range(cfg.n_samples):
        rng = replica_rng(cfg.seed, r)
        state = (rng.random(n) < 0.5).astype(np.int8)
        pick = rng.random(len(gptr) - 1)
        for g in range(len(gptr) - 1):
            members = gidx[gptr[g]:gptr[g + 1]]
            state[members] = 0
            state[members[int(pick[g] * members.size)]] = 1
        u = rng.random((betas.size, n))
        _kernels.onehot_heat_bath(state, lin, indptr, indices, data, betas, u, gptr, gidx, free)
        out[r] = state
    if not np.all(m.satisfies_groups(out)):
        raise SamplerError("one-hot sampler emitted an infeasible sample")
    return SampleBatch(out, m.energies(out), "onehot-gibbs")


def gibbs_chain(m: EffectiveModel, beta: float, n_sweeps: int, seed: int = 0, burn_in: int = 0,
                chunk: int = 65536) -> np.ndarray:
    """Fixed-beta heat-bath chain; returns the state after each recorded sweep.

    States are encoded as integers ``sum_i q_i << i`` (so ``n_vars <= 62``).
    """
    n = m.n_vars
    if n > 62:
        raise SamplerError("gibbs_chain encodes states as int64; n_vars must be <= 62")
    lin, indptr, indices, data = _csr_parts(m)
    rng = np.random.default_rng(seed)
    state = (rng.random(n) < 0.5).astype(np.int8)
    codes = np.empty(n_sweeps, dtype=np.int64)
    scratch = np.empty(min(chunk, max(burn_in, 1)), dtype=np.int64)
    left = burn_in
    while left > 0:
        k = min(left, scratch.size)
        _kernels.heat_bath_chain(state, lin, indptr, indices, data, float(beta), rng.random((k, n)), scratch[:k])
        left -= k
    for start in range(0, n_sweeps, chunk):
        k = min(chunk, n_sweeps - start)
        _kernels.heat_bath_chain(
            state, lin, indptr, indices, data, float(beta), rng.random((k, n)), codes[start:start + k]
        )
    return codes


# ---------------------------------------------------------------------------
# backends


@dataclass(frozen=True)
class GibbsSampler:
    config: SamplerConfig = field(default_factory=SamplerConfig)

    def sample(self, model: EffectiveModel, seed: int) -> SampleBatch:
        return gibbs_sample(model, replace(self.config, seed=seed))


@dataclass(frozen=True)
class OneHotGibbsSampler:
    config: SamplerConfig = field(default_factory=SamplerConfig)

    def sample(self, model: EffectiveModel, seed: int) -> SampleBatch:
        return onehot_gibbs_sample(model, replace(self.config, seed=seed))


@dataclass(frozen=True)
class ExactFieldSampler:
    """Deterministic single-sample "batch" holding the field-only minimizer."""

    def sample(self, model: EffectiveModel, seed: int = 0) -> SampleBatch:
        return SampleBatch.from_samples(model, exact_field_minimize(model)[None, :], "exact-field")


def estimate_expectations(batch: SampleBatch, p: ConstrainedProblem) -> np.ndarray:
    """Empirical mean of every soft constraint value over the batch."""
    if len(batch) == 0:
        raise SamplerError("cannot estimate expectations from an empty batch")
    return constraint_values(p, batch.samples).mean(axis=0)


def field_free_energy(m: EffectiveModel, beta: float | None = None) -> float:
    """``-(1/beta) log Z`` of a field-only model; ``beta=None`` gives the ground energy."""
    _require_field_only(m)
    lin = m.objective.linear
    grouped = np.zeros(m.n_vars, dtype=bool)
    total = m.objective.constant
    for g in m.onehot_groups:
        grouped[g] = True
        if beta is None:
            total += float(lin[g].min())
        else:
            total -= float(np.logaddexp.reduce(-beta * lin[g])) / beta
    free = lin[~grouped]
    if beta is None:
        total += float(np.minimum(free, 0.0).sum())
    else:
        total -= float(np.logaddexp(0.0, -beta * free).sum()) / beta
    return total
