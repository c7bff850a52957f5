"""Experiment runner: presets, replica seeding and CSV/JSON run artifacts."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .annealer import ENDPOINT_ENV, AnnealerError, AnnealerSampler
from .dual_ascent import (
    EXACT_FIELD,
    FIXED,
    SAMPLE_MEAN,
    SOFT_FIELD,
    SolveResult,
    SolverConfig,
    SolverError,
    iterations_to_target,
    solve,
)
from .model import ConstrainedProblem, ModelError, feasible, problem_from_dict
from .problems import (
    deterministic_baseline,
    gen_double_constraint,
    gen_kmin,
    gen_linear_system,
    gen_number_partition,
    gen_structured_cs,
    gen_traffic,
    hungarian_oracle,
    instance_to_dict,
    kmin_oracle,
    linearize_traffic,
    partition_residual_unit,
    shortest_path_baseline,
)
from .samplers import GibbsSampler, OneHotGibbsSampler, SamplerConfig, geometric_schedule

log = logging.getLogger(__name__)

EXPERIMENTS = ("kmin", "number_partition", "linear_system", "structured_cs", "traffic", "double_constraint",
               "custom")
HISTOGRAM_EXPERIMENTS = ("kmin", "number_partition", "linear_system", "double_constraint")
SAMPLERS = ("exact", "gibbs", "onehot_gibbs", "annealer")
GOLDEN = 0x9E3779B9
MASK64 = (1 << 64) - 1
NU_COLUMNS = 16
DEFAULT_ENDPOINT = "http://127.0.0.1:8765"
TRAFFIC_METHODS = ("shortest_path", "deterministic", "classical", "annealer")

TRAJECTORY_COLUMNS = ("step", "eta", "residual_norm", "mean_penalty_energy", "min_penalty_energy",
                      "mse_if_applicable", "nu_norm")
HISTOGRAM_COLUMNS = ("iterations", "count", "ratio")
OVERFLOW = "overflow"


class ConfigError(ValueError):
    pass


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_INT1 = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_BOOL = {"type": "boolean"}

PARAM_SCHEMAS = {
    "kmin": _obj({"N": _INT1, "K": _INT1}, ("N", "K")),
    "number_partition": _obj({"N": _INT1}, ("N",)),
    "linear_system": _obj({"N": _INT1, "M": _INT1}, ("N", "M")),
    "structured_cs": _obj({"width": {"type": "integer", "minimum": 2}, "height": {"type": "integer", "minimum": 2},
                           "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                           "coupling": _NUM, "attractive": _BOOL, "prior": _BOOL},
                          ("width", "height", "alpha")),
    "traffic": _obj({"grid_w": _INT1, "grid_h": _INT1, "n_cars": _INT1,
                     "n_routes": {"type": "integer", "minimum": 2}},
                    ("grid_w", "grid_h", "n_cars", "n_routes")),
    "double_constraint": _obj({"L": {"type": "integer", "minimum": 2}}, ("L",)),
    "custom": _obj({"problem": {"type": "object"}}, ("problem",)),
}

_SEED = {"type": "integer", "minimum": 0, "maximum": MASK64}
RUNSPEC_SCHEMA = _obj({
    "experiment": {"enum": list(EXPERIMENTS)},
    "params": {"type": "object"},
    "sampler": {"enum": list(SAMPLERS)},
    "sampler_config": {"type": "object"},
    "solver": {"type": "object"},
    "replicas": _INT1,
    "output_dir": {"type": "string"},
    "seed": _SEED,
    "seeds": {"anyOf": [{"type": "null"}, {"type": "array", "items": _SEED}]},
    "nu0": {"anyOf": [{"type": "null"}, {"type": "array", "items": _NUM}]},
    "endpoint": {"anyOf": [{"type": "null"}, {"type": "string"}]},
    "resolved_seeds": {"type": "array"},
}, ("experiment", "params", "sampler", "sampler_config", "solver"))

_NUM_OR_NULL = {"anyOf": [{"type": "number"}, {"type": "null"}]}
RESULT_SCHEMA = {
    "type": "object",
    "required": ["replica", "generator_seed", "sampler_seed", "incumbent", "incumbent_energy", "incumbent_feasible",
                 "converged", "iterations_used", "final_nu", "trajectory", "mse", "optimum",
                 "iterations_to_optimum"],
    "properties": {
        "replica": {"type": "integer", "minimum": 0},
        "generator_seed": _SEED,
        "sampler_seed": _SEED,
        "incumbent": {"type": "array", "items": {"enum": [0, 1]}},
        "incumbent_energy": _NUM,
        "incumbent_feasible": _BOOL,
        "converged": _BOOL,
        "iterations_used": _INT1,
        "final_nu": {"type": "array", "items": _NUM},
        "trajectory": {"type": "array", "minItems": 1},
        "mse": _NUM_OR_NULL,
        "optimum": _NUM_OR_NULL,
        "iterations_to_optimum": {"anyOf": [_INT1, {"type": "null"}]},
    },
}
SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["replicas", "iterations", "median", "overflow"],
    "properties": {
        "replicas": _INT1,
        "iterations": {"type": "array", "items": {"anyOf": [_INT1, {"type": "null"}]}},
        "median": _NUM_OR_NULL,
        "overflow": {"type": "integer", "minimum": 0},
    },
}
COMPARISON_SCHEMA = {
    "type": "object",
    "required": ["costs", "feasible", "absent", "generator_seed", "sampler_seed"],
    "properties": {
        "costs": _obj({m: _NUM_OR_NULL for m in TRAFFIC_METHODS}, TRAFFIC_METHODS),
        "feasible": _obj({m: {"anyOf": [_BOOL, {"type": "null"}]} for m in TRAFFIC_METHODS}, TRAFFIC_METHODS),
        "absent": {"type": "array", "items": {"enum": list(TRAFFIC_METHODS)}},
        "generator_seed": _SEED,
        "sampler_seed": _SEED,
    },
}


def _validate(obj, schema, what: str):
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as e:
        raise ConfigError(f"invalid {what}: {e.message}") from None


@dataclass(frozen=True)
class RunSpec:
    """One experiment configuration.

    Replica ``r`` uses generator seed ``seed + r`` and sampler seed
    ``seed ^ (r * 0x9E3779B9)``, unless ``seeds`` lists explicit per-replica
    seeds, in which case ``seeds[r]`` drives both.
    """

    experiment: str
    params: dict
    sampler: str
    sampler_config: SamplerConfig = field(default_factory=SamplerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    replicas: int = 1
    output_dir: str = "runs"
    seed: int = 0
    seeds: Optional[tuple[int, ...]] = None
    nu0: Optional[tuple[float, ...]] = None
    endpoint: Optional[str] = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}")
        _validate(self.params, PARAM_SCHEMAS[self.experiment], f"{self.experiment} params")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
            if len(self.seeds) != self.replicas:
                raise ConfigError(f"{len(self.seeds)} explicit seeds for {self.replicas} replicas")
        if self.nu0 is not None:
            object.__setattr__(self, "nu0", tuple(float(v) for v in self.nu0))
        sampling = self.solver.expectation_mode == SAMPLE_MEAN
        if sampling and self.sampler == "exact":
            raise ConfigError("sample_mean expectations need a sampling backend, not 'exact'")
        if not sampling and self.sampler != "exact":
            raise ConfigError(f"{self.solver.expectation_mode} expectations use the 'exact' backend")

    def replica_seeds(self) -> list[tuple[int, int]]:
        """``(generator seed, sampler seed)`` per replica."""
        if self.seeds is not None:
            return [(s, s) for s in self.seeds]
        return [((self.seed + r) & MASK64, (self.seed ^ (r * GOLDEN)) & MASK64) for r in range(self.replicas)]

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "sampler": self.sampler,
            "sampler_config": self.sampler_config.to_dict(),
            "solver": self.solver.to_dict(),
            "replicas": self.replicas,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "seeds": None if self.seeds is None else list(self.seeds),
            "nu0": None if self.nu0 is None else list(self.nu0),
            "endpoint": self.endpoint,
        }

    def resolved(self) -> dict:
        d = self.to_dict()
        d["resolved_seeds"] = [{"replica": r, "generator_seed": g, "sampler_seed": s}
                               for r, (g, s) in enumerate(self.replica_seeds())]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunSpec":
        _validate(d, RUNSPEC_SCHEMA, "run spec")
        try:
            sampler_config = SamplerConfig.from_dict(d["sampler_config"])
            solver = SolverConfig.from_dict(d["solver"])
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid run spec: {e}") from None
        return cls(
            experiment=d["experiment"], params=d["params"], sampler=d["sampler"], sampler_config=sampler_config,
            solver=solver, replicas=d.get("replicas", 1), output_dir=d.get("output_dir", "runs"),
            seed=d.get("seed", 0), seeds=d.get("seeds"), nu0=d.get("nu0"), endpoint=d.get("endpoint"),
        )

    @classmethod
    def load(cls, path) -> "RunSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"cannot read run spec {path}: {e}") from None


# ---------------------------------------------------------------- presets

def partition_tolerance(N: int, n_samples: int) -> float:
    """Three standard errors of a sampled ``sum n_i sigma_i`` with uncorrelated spins."""
    k = np.arange(1, N + 1) / N
    return float(3.0 * np.sqrt(np.sum(k * k) / n_samples))


def _np_spec(N: int, replicas: int = 1) -> RunSpec:
    S = 200
    return RunSpec(
        "number_partition", {"N": N}, "gibbs", SamplerConfig(n_samples=S),
        SolverConfig(max_iterations=300, eta_grid=tuple(np.geomspace(1e-6, 1.0, 13)), expectation_mode=SAMPLE_MEAN,
                     tolerance=partition_tolerance(N, S)),
        replicas=replicas, nu0=(0.2,),
    )


def _cs_spec(prior: bool) -> RunSpec:
    return RunSpec(
        "structured_cs", {"width": 16, "height": 16, "alpha": 0.6, "coupling": 1.0, "prior": prior}, "gibbs",
        SamplerConfig(geometric_schedule(0.1, 10.0, 10), sweeps_per_beta=2, n_samples=20),
        SolverConfig(max_iterations=500, eta_mode=FIXED, eta=0.03, expectation_mode=SAMPLE_MEAN, tolerance=1e-6),
    )


def _linear_spec(M: int) -> RunSpec:
    return RunSpec(
        "linear_system", {"N": 200, "M": M}, "exact", SamplerConfig(),
        SolverConfig(max_iterations=500, eta_grid=tuple(np.geomspace(1e-4, 10.0, 16)), expectation_mode=EXACT_FIELD),
    )


def _double_spec(L: int) -> RunSpec:
    return RunSpec(
        "double_constraint", {"L": L}, "exact", SamplerConfig(),
        SolverConfig(max_iterations=2000, eta_grid=tuple(np.geomspace(1e-7, 1e-1, 13)), expectation_mode=SOFT_FIELD,
                     beta=1e4, tolerance=0.5),
    )


PRESETS = {
    "kmin": lambda: RunSpec(
        "kmin", {"N": 2000, "K": 5}, "exact", SamplerConfig(),
        SolverConfig(max_iterations=200, eta_grid=tuple(np.geomspace(1e-6, 1.0, 25)), expectation_mode=EXACT_FIELD),
    ),
    "number_partition": lambda: _np_spec(2000),
    "number_partition_small": lambda: _np_spec(20),
    "np_histogram": lambda: _np_spec(100, replicas=200),
    "linear_system": lambda: _linear_spec(160),
    "linear_system_undersampled": lambda: _linear_spec(80),
    "structured_cs": lambda: _cs_spec(True),
    "structured_cs_noprior": lambda: _cs_spec(False),
    "traffic": lambda: RunSpec(
        "traffic", {"grid_w": 10, "grid_h": 10, "n_cars": 50, "n_routes": 3}, "onehot_gibbs",
        SamplerConfig(geometric_schedule(0.1, 2.0, 8), sweeps_per_beta=2, n_samples=20),
        SolverConfig(max_iterations=50, eta_mode=FIXED, eta=0.1, expectation_mode=SAMPLE_MEAN),
    ),
    "double_constraint": lambda: _double_spec(45),
    "double_constraint_small": lambda: _double_spec(6),
}


def preset(name: str, **overrides) -> RunSpec:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    return replace(PRESETS[name](), **overrides) if overrides else PRESETS[name]()


# ---------------------------------------------------------------- instances

@dataclass(frozen=True, eq=False)
class Instance:
    problem: ConstrainedProblem
    truth: object = None  # InferenceInstance for mse, when a ground truth exists
    optimum: Optional[float] = None
    optimum_atol: float = 1e-9
    traffic: object = None


def build_instance(spec: RunSpec, seed: int) -> Instance:
    P = spec.params
    try:
        if spec.experiment == "kmin":
            p = gen_kmin(P["N"], P["K"], seed)
            return Instance(p, optimum=kmin_oracle(p.base.linear, P["K"])[1])
        if spec.experiment == "number_partition":
            # the numbers are 1..N / N with an even total, which always splits evenly
            return Instance(gen_number_partition(P["N"], seed), optimum=0.0,
                            optimum_atol=partition_residual_unit(P["N"]) / 2)
        if spec.experiment == "linear_system":
            inst, p = gen_linear_system(P["N"], P["M"], seed)
            return Instance(p, truth=inst, optimum=0.0)
        if spec.experiment == "structured_cs":
            inst, p = gen_structured_cs(P["width"], P["height"], P["alpha"], seed, P.get("coupling", 1.0),
                                        P.get("attractive", True), P.get("prior", True))
            return Instance(p, truth=inst)
        if spec.experiment == "traffic":
            t, _ = gen_traffic(P["grid_w"], P["grid_h"], P["n_cars"], P["n_routes"], seed)
            return Instance(linearize_traffic(t), traffic=t)
        if spec.experiment == "double_constraint":
            p = gen_double_constraint(P["L"], seed)
            return Instance(p, optimum=hungarian_oracle(p.base.linear.reshape(P["L"], P["L"]))[1])
        return Instance(problem_from_dict(P["problem"]))
    except ModelError as e:
        raise ConfigError(f"invalid {spec.experiment} params: {e}") from None


def _endpoint(spec: RunSpec) -> str:
    return os.environ.get(ENDPOINT_ENV) or spec.endpoint or DEFAULT_ENDPOINT


def make_sampler(spec: RunSpec, kind: Optional[str] = None):
    kind = kind or spec.sampler
    cfg = spec.sampler_config
    if kind == "exact":
        return None
    if kind == "gibbs":
        return GibbsSampler(cfg)
    if kind == "onehot_gibbs":
        return OneHotGibbsSampler(cfg)
    return AnnealerSampler(cfg, _endpoint(spec))


def check(spec: RunSpec) -> Instance:
    """Build replica 0's instance and check the multiplier count; raises ConfigError."""
    inst = build_instance(spec, spec.replica_seeds()[0][0])
    if spec.nu0 is not None and len(spec.nu0) != inst.problem.n_multipliers:
        raise ConfigError(f"nu0 has {len(spec.nu0)} entries, the problem has {inst.problem.n_multipliers} "
                          "multipliers")
    return inst


# ---------------------------------------------------------------- running

@dataclass(frozen=True, eq=False)
class ReplicaOutcome:
    replica: int
    generator_seed: int
    sampler_seed: int
    result: SolveResult
    instance: Instance

    @property
    def mse(self) -> Optional[float]:
        return None if self.instance.truth is None else self.instance.truth.mse(self.result.incumbent)

    @property
    def iterations_to_optimum(self) -> Optional[int]:
        if self.instance.optimum is None:
            return None
        return iterations_to_target(self.result, self.instance.optimum, self.instance.optimum_atol)

    def to_dict(self) -> dict:
        d = {"replica": self.replica, "generator_seed": self.generator_seed, "sampler_seed": self.sampler_seed}
        d.update(self.result.to_dict())
        d.update(mse=self.mse, optimum=self.instance.optimum, iterations_to_optimum=self.iterations_to_optimum)
        return d

    def instance_record(self, spec: RunSpec) -> dict:
        return instance_to_dict(self.instance.problem, spec.experiment, spec.params, self.generator_seed,
                                self.instance.traffic)

    def trajectory_rows(self) -> list[list]:
        k = min(self.instance.problem.n_multipliers, NU_COLUMNS)
        rows = []
        for rec in self.result.trajectory:
            mse = "" if self.instance.truth is None else self.instance.truth.mse(rec.incumbent)
            rows.append([rec.iteration, rec.eta, rec.residual_norm, rec.batch_mean_energy, rec.batch_min_energy, mse,
                         float(np.linalg.norm(rec.nu))] + rec.nu[:k].tolist())
        return rows

    def trajectory_header(self) -> list[str]:
        k = min(self.instance.problem.n_multipliers, NU_COLUMNS)
        return list(TRAJECTORY_COLUMNS) + [f"nu_{i}" for i in range(k)]


def run_replica(spec: RunSpec, r: int) -> ReplicaOutcome:
    gen_seed, samp_seed = spec.replica_seeds()[r]
    inst = build_instance(spec, gen_seed)
    cfg = replace(spec.solver, seed=samp_seed)
    res = solve(inst.problem, make_sampler(spec), None if spec.nu0 is None else np.array(spec.nu0), cfg)
    return ReplicaOutcome(r, gen_seed, samp_seed, res, inst)


def run_replicas(spec: RunSpec, jobs: int = 1) -> list[ReplicaOutcome]:
    """All replicas in replica order; up to ``jobs`` worker processes."""
    if jobs > 1 and spec.replicas > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, spec.replicas)) as ex:
            return list(ex.map(run_replica, [spec] * spec.replicas, range(spec.replicas)))
    return [run_replica(spec, r) for r in range(spec.replicas)]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _write_json(path: Path, obj, schema=None, what: str = "output") -> None:
    if schema is not None:
        try:
            jsonschema.validate(obj, schema)
        except jsonschema.ValidationError as e:
            raise RuntimeError(f"refusing to write {path.name}: {what} failed validation: {e.message}") from None
    _atomic_write(path, json.dumps(obj, indent=1, allow_nan=False) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    width = len(header)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise RuntimeError(f"refusing to write {path.name}: row {i} has {len(row)} fields, header has {width}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _fresh_dir(out) -> Path:
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise ConfigError(f"output directory {out} exists and is not empty; run directories are never reused")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


@dataclass(frozen=True, eq=False)
class RunOutcome:
    directory: Path
    replicas: list[ReplicaOutcome]

    @property
    def all_converged(self) -> bool:
        return all(o.result.converged for o in self.replicas)


def run(spec: RunSpec, out=None, jobs: int = 1) -> RunOutcome:
    """Solve every replica and write ``spec.json`` plus ``replica_XXX/{trajectory.csv,result.json}``."""
    check(spec)
    out = _fresh_dir(out if out is not None else spec.output_dir)
    _write_json(out / "spec.json", spec.resolved(), RUNSPEC_SCHEMA, "run spec")
    outcomes = run_replicas(spec, jobs)
    for o in outcomes:
        d = out / f"replica_{o.replica:03d}"
        d.mkdir()
        _write_json(d / "instance.json", o.instance_record(spec))
        _write_csv(d / "trajectory.csv", o.trajectory_header(), o.trajectory_rows())
        _write_json(d / "result.json", o.to_dict(), RESULT_SCHEMA, "result")
    log.info("run %s: %d/%d replicas converged", out, sum(o.result.converged for o in outcomes), len(outcomes))
    return RunOutcome(out, outcomes)


def histogram_rows(iterations, replicas: int) -> list[list]:
    """Unit-width bins from 1 to the largest finite count, then the overflow bin."""
    hits = [i for i in iterations if i is not None]
    rows = []
    if hits:
        counts = np.bincount(hits)
        rows = [[k, int(counts[k]), counts[k] / replicas] for k in range(1, len(counts))]
    miss = len(iterations) - len(hits)
    rows.append([OVERFLOW, miss, miss / replicas])
    return rows


def histogram(spec: RunSpec, out=None, jobs: int = 1) -> tuple[Path, list[Optional[int]]]:
    """Iterations-to-optimum over replicas; writes ``histogram.csv`` and ``summary.json``."""
    if spec.experiment not in HISTOGRAM_EXPERIMENTS:
        raise ConfigError(f"{spec.experiment} has no known optimum; histogram supports "
                          f"{', '.join(HISTOGRAM_EXPERIMENTS)}")
    if spec.replicas < 2:
        raise ConfigError("histogram needs at least 2 replicas")
    gen_seeds = [g for g, _ in spec.replica_seeds()]
    if len(set(gen_seeds)) != len(gen_seeds):
        raise ConfigError("histogram replicas need distinct seeds")
    check(spec)
    out = _fresh_dir(out if out is not None else spec.output_dir)
    _write_json(out / "spec.json", spec.resolved(), RUNSPEC_SCHEMA, "run spec")
    outcomes = run_replicas(spec, jobs)
    its = [o.iterations_to_optimum for o in outcomes]
    _write_csv(out / "histogram.csv", HISTOGRAM_COLUMNS, histogram_rows(its, spec.replicas))
    hits = [i for i in its if i is not None]
    summary = {"replicas": spec.replicas, "iterations": its, "median": float(np.median(hits)) if hits else None,
               "overflow": len(its) - len(hits)}
    _write_json(out / "summary.json", summary, SUMMARY_SCHEMA, "histogram summary")
    return out, its


def _onehot_ok(t, q) -> bool:
    return bool(np.all(np.asarray(q).reshape(t.n_cars, t.n_routes).sum(axis=1) == 1))


def compare_traffic_methods(spec: RunSpec, traffic=None) -> dict:
    """Costs and feasibility of the four route-choice methods.

    Uses replica 0's generated instance unless a ``TrafficInstance`` is given.
    """
    if spec.experiment != "traffic":
        raise ConfigError("compare-traffic needs a traffic experiment")
    gen_seed, samp_seed = spec.replica_seeds()[0]
    t = build_instance(spec, gen_seed).traffic if traffic is None else traffic
    p = linearize_traffic(t)
    cfg = replace(spec.solver, seed=samp_seed)
    nu0 = None if spec.nu0 is None else np.array(spec.nu0)
    picks = {"shortest_path": shortest_path_baseline(t), "deterministic": deterministic_baseline(t, nu0)}
    picks["classical"] = solve(p, make_sampler(spec, "onehot_gibbs"), nu0, cfg).incumbent
    try:
        picks["annealer"] = solve(p, make_sampler(spec, "annealer"), nu0, cfg).incumbent
    except SolverError as e:
        if not isinstance(e.__cause__, AnnealerError):
            raise
        log.warning("annealer method skipped: %s", e)
    costs = {m: (t.cost(picks[m]) if m in picks else None) for m in TRAFFIC_METHODS}
    ok = {m: (_onehot_ok(t, picks[m]) and bool(feasible(p, picks[m])[0]) if m in picks else None)
          for m in TRAFFIC_METHODS}
    return {"costs": costs, "feasible": ok, "absent": [m for m in TRAFFIC_METHODS if m not in picks],
            "generator_seed": gen_seed, "sampler_seed": samp_seed, "params": spec.params}


def compare_traffic(spec: RunSpec, out=None) -> tuple[Path, dict]:
    check(spec)
    if spec.experiment != "traffic":
        raise ConfigError("compare-traffic needs a traffic experiment")
    out = _fresh_dir(out if out is not None else spec.output_dir)
    _write_json(out / "spec.json", spec.resolved(), RUNSPEC_SCHEMA, "run spec")
    cmp = compare_traffic_methods(spec)
    _write_json(out / "comparison.json", cmp, COMPARISON_SCHEMA, "comparison")
    return out, cmp
