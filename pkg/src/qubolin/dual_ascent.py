"""Multiplier iteration for constrained binary problems.

Each iteration builds the effective model at the current multipliers,
estimates ``<F_k>`` under it and steps

    nu_k <- nu_k + eta * (C_k - <F_k>)

with ``eta`` fixed or chosen by a grid line search.  The best configuration
seen in any batch is kept as the incumbent, judged on the original
(penalty-form) objective with feasible configurations always preferred.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    ConstrainedProblem,
    EffectiveModel,
    MultiplierState,
    assess,
    build_effective,
    residual,
)
from .samplers import (
    ExactFieldSampler,
    Sampler,
    SampleBatch,
    SamplerError,
    exact_field_expectation,
    field_free_energy,
)

EXACT_FIELD = "exact_field"
SOFT_FIELD = "soft_field"
SAMPLE_MEAN = "sample_mean"
EXPECTATION_MODES = (EXACT_FIELD, SOFT_FIELD, SAMPLE_MEAN)

FIXED = "fixed"
LINE_SEARCH = "line_search"

DEFAULT_ETA_GRID = (0.01, 0.03, 0.1, 0.3, 1.0)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 200
    eta_mode: str = LINE_SEARCH
    eta: float = 0.1
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    tolerance: float = 0.0
    expectation_mode: str = SAMPLE_MEAN
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance >= 0:
            raise ValueError("tolerance must be >= 0")
        if self.eta_mode not in (FIXED, LINE_SEARCH):
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if self.eta_mode == LINE_SEARCH and not self.eta_grid:
            raise ValueError("eta_grid must be nonempty for line search")
        if any(e <= 0 for e in self.eta_grid) or self.eta <= 0:
            raise ValueError("step widths must be positive")
        if self.expectation_mode not in EXPECTATION_MODES:
            raise ValueError(f"unknown expectation_mode {self.expectation_mode!r}")
        if self.expectation_mode == SOFT_FIELD and not self.beta > 0:
            raise ValueError("soft_field needs beta > 0")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "eta_mode": self.eta_mode,
            "eta": self.eta,
            "eta_grid": list(self.eta_grid),
            "tolerance": self.tolerance,
            "expectation_mode": self.expectation_mode,
            "beta": self.beta,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "eta_grid" in d:
            d["eta_grid"] = tuple(d["eta_grid"])
        return cls(**d)


def derive_seed(seed: int, iteration: int, candidate: int = 0) -> int:
    """Well-mixed 64-bit sampler seed for one (iteration, line-search candidate) pair."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), iteration, candidate])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class Incumbent:
    q: np.ndarray
    energy: float
    feasible: bool


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Everything learned from one sampler call at fixed multipliers."""

    nu: np.ndarray
    model: EffectiveModel
    batch: SampleBatch
    expectations: np.ndarray
    gradient: np.ndarray
    residual_norm: float
    dual_value: float
    assessed: tuple  # (constraint values, penalty energies, feasible) of the batch


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    nu: np.ndarray
    expectations: np.ndarray
    residual_norm: float
    eta: float
    penalty_energy_best: float
    incumbent_feasible: bool
    batch_mean_energy: float
    batch_min_energy: float
    dual_value: float
    incumbent: np.ndarray

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "nu": self.nu.tolist(),
            "expectations": self.expectations.tolist(),
            "residual_norm": self.residual_norm,
            "eta": self.eta,
            "penalty_energy_best": self.penalty_energy_best,
            "incumbent_feasible": self.incumbent_feasible,
            "batch_mean_energy": self.batch_mean_energy,
            "batch_min_energy": self.batch_min_energy,
            "dual_value": self.dual_value,
        }


@dataclass(frozen=True, eq=False)
class SolveResult:
    incumbent: np.ndarray
    incumbent_energy: float
    incumbent_feasible: bool
    trajectory: tuple[IterationRecord, ...]
    converged: bool
    final_nu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def iterations_used(self) -> int:
        return len(self.trajectory)

    def to_dict(self) -> dict:
        return {
            "incumbent": self.incumbent.astype(int).tolist(),
            "incumbent_energy": self.incumbent_energy,
            "incumbent_feasible": self.incumbent_feasible,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "final_nu": self.final_nu.tolist(),
            "trajectory": [r.to_dict() for r in self.trajectory],
        }


def track_best(batch: SampleBatch, p: ConstrainedProblem, incumbent: Optional[Incumbent],
               _assessed=None) -> Incumbent:
    """Keep the better of the incumbent and the best sample of ``batch``.

    Feasible beats infeasible regardless of energy; otherwise lower
    penalty-form energy wins and ties keep the incumbent.
    """
    if len(batch) == 0:
        return incumbent
    _, e, ok = assess(p, batch.samples) if _assessed is None else _assessed
    pool = np.flatnonzero(ok) if ok.any() else np.arange(len(batch))
    k = pool[np.argmin(e[pool])]
    best = Incumbent(batch.samples[k].copy(), float(e[k]), bool(ok[k]))
    if incumbent is None:
        return best
    if best.feasible != incumbent.feasible:
        return best if best.feasible else incumbent
    return best if best.energy < incumbent.energy else incumbent


def _evaluate(p: ConstrainedProblem, nu: np.ndarray, sampler: Optional[Sampler], cfg: SolverConfig,
              seed: int) -> Evaluation:
    m = build_effective(p, nu)
    mode = cfg.expectation_mode
    if mode == SAMPLE_MEAN:
        if sampler is None:
            raise SolverError("sample_mean mode needs a sampler backend")
        batch = sampler.sample(m, seed)
        if len(batch) == 0:
            raise SamplerError("sampler returned an empty batch")
        dual = float(np.min(batch.energies))
    else:
        batch = ExactFieldSampler().sample(m)
        dual = field_free_energy(m, None if mode == EXACT_FIELD else cfg.beta)
    F, energies, ok = assess(p, batch.samples)
    if mode == SOFT_FIELD:
        ex = np.asarray(p.matrix @ exact_field_expectation(m, cfg.beta)).ravel()
    else:
        ex = F.mean(axis=0)
    g = residual(p, ex, nu)
    rn = float(np.max(np.abs(g))) if g.size else 0.0
    return Evaluation(nu, m, batch, ex, g, rn, dual, (F, energies, ok))


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * (1.0 + abs(a) + abs(b))


def line_search(p: ConstrainedProblem, nu, gradient, sampler: Optional[Sampler], cfg: SolverConfig,
                iteration: int = 0, _seed_base: Optional[int] = None):
    """Pick a step width from ``cfg.eta_grid``.

    Each candidate ``nu + eta * gradient`` is evaluated with a fresh sampler
    call and scored by the max-abs residual there.  Among equal residuals the
    candidate with the larger dual estimate wins (the dual is what the ascent
    maximizes, so this breaks the plateaus of piecewise-constant residuals),
    then the smaller ``eta``.  Returns ``(eta, winning evaluation, all
    evaluations)``.
    """
    nu = nu.nu if isinstance(nu, MultiplierState) else np.asarray(nu, dtype=np.float64)
    gradient = np.asarray(gradient, dtype=np.float64)
    seed = cfg.seed if _seed_base is None else _seed_base
    evals = []
    best = None
    for j, eta in enumerate(cfg.eta_grid):
        ev = _evaluate(p, nu + eta * gradient, sampler, cfg, derive_seed(seed, iteration, j + 1))
        evals.append(ev)
        if best is None:
            best = (eta, ev)
            continue
        b_eta, b_ev = best
        if _close(ev.residual_norm, b_ev.residual_norm):
            if ev.dual_value > b_ev.dual_value and not _close(ev.dual_value, b_ev.dual_value):
                best = (eta, ev)
            elif _close(ev.dual_value, b_ev.dual_value) and eta < b_eta:
                best = (eta, ev)
        elif ev.residual_norm < b_ev.residual_norm:
            best = (eta, ev)
    return best[0], best[1], evals


def _converged(ev: Evaluation, inc: Incumbent, cfg: SolverConfig) -> bool:
    return ev.residual_norm <= cfg.tolerance and inc.feasible


def solve(p: ConstrainedProblem, sampler: Optional[Sampler] = None, nu0=None,
          cfg: SolverConfig = SolverConfig()) -> SolveResult:
    """Run the multiplier iteration.

    ``sampler`` is only consulted in ``sample_mean`` mode.  Stops early once
    the residual is within ``cfg.tolerance`` and a feasible incumbent exists.
    """
    if nu0 is None:
        nu = np.zeros(p.n_multipliers)
    else:
        nu = nu0.nu if isinstance(nu0, MultiplierState) else np.asarray(nu0, dtype=np.float64)
        if nu.shape != (p.n_multipliers,):
            raise SolverError(f"expected {p.n_multipliers} initial multipliers, got shape {nu.shape}")
        nu = nu.astype(np.float64)

    def run(fn, t, *args):
        try:
            return fn(*args)
        except SolverError:
            raise
        except Exception as exc:
            raise SolverError(f"sampler failed at iteration {t}: {exc}") from exc

    ev = run(_evaluate, 0, p, nu, sampler, cfg, derive_seed(cfg.seed, 0, 0))
    inc = track_best(ev.batch, p, None, ev.assessed)
    records = []
    converged = False
    for t in range(cfg.max_iterations):
        done = _converged(ev, inc, cfg)
        eta = 0.0
        nxt = None
        if not done and t + 1 < cfg.max_iterations:
            g = ev.gradient
            if not np.any(g):
                # stuck on a zero gradient with an infeasible incumbent: resample
                nxt = run(_evaluate, t, p, ev.nu, sampler, cfg, derive_seed(cfg.seed, t + 1, 0))
            elif cfg.eta_mode == LINE_SEARCH:
                eta, nxt, evals = run(line_search, t, p, ev.nu, g, sampler, cfg, t + 1)
                for other in evals:
                    inc = track_best(other.batch, p, inc, other.assessed)
            else:
                eta = cfg.eta
                nxt = run(_evaluate, t, p, ev.nu + eta * g, sampler, cfg, derive_seed(cfg.seed, t + 1, 0))
            inc = track_best(nxt.batch, p, inc, nxt.assessed)
        records.append(
            IterationRecord(
                iteration=t,
                nu=ev.nu,
                expectations=ev.expectations,
                residual_norm=ev.residual_norm,
                eta=eta,
                penalty_energy_best=inc.energy,
                incumbent_feasible=inc.feasible,
                batch_mean_energy=float(np.mean(ev.assessed[1])),
                batch_min_energy=float(np.min(ev.assessed[1])),
                dual_value=ev.dual_value,
                incumbent=inc.q,
            )
        )
        if done:
            converged = True
            break
        if nxt is None:
            break
        ev = nxt
    return SolveResult(inc.q, inc.energy, inc.feasible, tuple(records), converged, ev.nu)


def iterations_to_target(result: SolveResult, target_energy: float, atol: float = 1e-9) -> Optional[int]:
    """1-based index of the first iteration whose incumbent is feasible and within ``atol`` of the target."""
    for rec in result.trajectory:
        if rec.incumbent_feasible and rec.penalty_energy_best <= target_energy + atol:
            return rec.iteration + 1
    return None
