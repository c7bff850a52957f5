import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from qubolin import cli
from qubolin.annealer import ENDPOINT_ENV, mock_annealer
from qubolin.dual_ascent import EXACT_FIELD, SolverConfig
from qubolin.harness import (
    OVERFLOW,
    PRESETS,
    TRAFFIC_METHODS,
    ConfigError,
    RunSpec,
    build_instance,
    compare_traffic,
    compare_traffic_methods,
    histogram,
    histogram_rows,
    preset,
    run,
)
from qubolin.problems import instance_from_routes, kmin_oracle
from qubolin.samplers import SamplerConfig


@pytest.fixture(autouse=True)
def no_endpoint_env(monkeypatch):
    monkeypatch.delenv(ENDPOINT_ENV, raising=False)


def kmin_spec(**kw):
    base = preset("kmin")
    return replace(base, params={"N": 100, "K": 5}, **kw)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---- run


def test_kmin_run_writes_trajectory(tmp_path):
    out = run(kmin_spec(), tmp_path / "r")
    assert out.all_converged
    rows = read_csv(out.directory / "replica_000" / "trajectory.csv")
    assert rows[0][:7] == ["step", "eta", "residual_norm", "mean_penalty_energy", "min_penalty_energy",
                           "mse_if_applicable", "nu_norm"]
    assert rows[0][7:] == ["nu_0"]
    inst = build_instance(kmin_spec(), 0)
    _, e = kmin_oracle(inst.problem.base.linear, 5)
    assert float(rows[-1][2]) == 0.0
    assert float(rows[-1][4]) == pytest.approx(e, abs=1e-12)
    res = json.loads((out.directory / "replica_000" / "result.json").read_text())
    assert res["converged"] and res["incumbent_energy"] == pytest.approx(e, abs=1e-12)
    assert res["iterations_to_optimum"] >= 1
    spec = json.loads((out.directory / "spec.json").read_text())
    assert spec["resolved_seeds"] == [{"replica": 0, "generator_seed": 0, "sampler_seed": 0}]
    inst_file = json.loads((out.directory / "replica_000" / "instance.json").read_text())
    assert inst_file["provenance"] == {"generator": "kmin", "params": {"N": 100, "K": 5}, "seed": 0}


def test_replicas_with_same_seed_are_identical(tmp_path):
    spec = replace(preset("number_partition_small"), replicas=3, seeds=(11, 11, 11))
    out = run(spec, tmp_path / "r")
    files = [(out.directory / f"replica_{r:03d}" / "trajectory.csv").read_bytes() for r in range(3)]
    assert files[0] == files[1] == files[2]


def test_default_seed_derivation():
    spec = replace(preset("number_partition_small"), replicas=3, seed=5)
    assert spec.replica_seeds() == [(5, 5), (6, 5 ^ 0x9E3779B9), (7, 5 ^ (2 * 0x9E3779B9))]


def test_unknown_experiment_writes_nothing(tmp_path):
    d = kmin_spec().to_dict()
    d["experiment"] = "tsp"
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(d))
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(path), "--out", str(out)]) == cli.EXIT_CONFIG
    assert not out.exists()
    with pytest.raises(ConfigError, match="tsp"):
        RunSpec.from_dict(d)


@pytest.mark.parametrize("change", [
    {"params": {"N": 100}},
    {"params": {"N": 100, "K": 5, "extra": 1}},
    {"replicas": 0},
    {"sampler": "quantum"},
    {"sampler": "gibbs"},
    {"seeds": (1, 2)},
])
def test_invalid_specs(change):
    with pytest.raises(ConfigError):
        replace(kmin_spec(), **change)


def test_sample_mean_needs_sampler():
    with pytest.raises(ConfigError, match="sampling backend"):
        replace(preset("number_partition_small"), sampler="exact")


def test_nu0_length_checked(tmp_path):
    with pytest.raises(ConfigError, match="nu0"):
        run(replace(kmin_spec(), nu0=(0.0, 0.0)), tmp_path / "r")
    assert not (tmp_path / "r").exists()


def test_spec_json_replay_is_bit_identical(tmp_path):
    spec = replace(preset("number_partition_small"), replicas=2, seed=3)
    first = run(spec, tmp_path / "a")
    replay = RunSpec.load(first.directory / "spec.json")
    assert replay == spec
    second = run(replay, tmp_path / "b")
    for r in range(2):
        for name in ("trajectory.csv", "result.json", "instance.json"):
            a = (first.directory / f"replica_{r:03d}" / name).read_bytes()
            b = (second.directory / f"replica_{r:03d}" / name).read_bytes()
            assert a == b


def test_run_dirs_are_never_reused(tmp_path):
    out = tmp_path / "r"
    run(kmin_spec(), out)
    with pytest.raises(ConfigError, match="not empty"):
        run(kmin_spec(), out)


def test_parallel_jobs_match_serial(tmp_path):
    spec = replace(preset("number_partition_small"), replicas=3)
    a = run(spec, tmp_path / "a", jobs=1)
    b = run(spec, tmp_path / "b", jobs=2)
    for r in range(3):
        name = f"replica_{r:03d}/trajectory.csv"
        assert (a.directory / name).read_bytes() == (b.directory / name).read_bytes()


def test_nu_columns_truncated(tmp_path):
    spec = replace(preset("double_constraint_small"), solver=replace(preset("double_constraint_small").solver,
                                                                      max_iterations=3))
    out = run(spec, tmp_path / "r")
    header = read_csv(out.directory / "replica_000" / "trajectory.csv")[0]
    assert header[-1] == "nu_11" and len(header) == 7 + 12
    spec = replace(spec, params={"L": 10})
    out = run(spec, tmp_path / "s")
    header = read_csv(out.directory / "replica_000" / "trajectory.csv")[0]
    assert header[-1] == "nu_15" and len(header) == 7 + 16


def test_custom_experiment(tmp_path):
    from qubolin.model import problem_to_dict
    from qubolin.problems import gen_kmin

    p = gen_kmin(12, 3, 4)
    spec = RunSpec("custom", {"problem": problem_to_dict(p)}, "exact", SamplerConfig(),
                   SolverConfig(expectation_mode=EXACT_FIELD, eta_grid=tuple(np.geomspace(1e-3, 1, 13))))
    out = run(spec, tmp_path / "r")
    assert out.all_converged
    np.testing.assert_array_equal(out.replicas[0].result.incumbent, kmin_oracle(p.base.linear, 3)[0])


def test_mse_column_for_inference(tmp_path):
    spec = replace(preset("linear_system"), params={"N": 30, "M": 24})
    out = run(spec, tmp_path / "r")
    rows = read_csv(out.directory / "replica_000" / "trajectory.csv")
    assert all(r[5] != "" for r in rows[1:])
    if out.all_converged:
        assert float(rows[-1][5]) == 0.0


# ---- histogram


def test_histogram_rows():
    rows = histogram_rows([1, 3, 3, None], 4)
    assert rows == [[1, 1, 0.25], [2, 0, 0.0], [3, 2, 0.5], [OVERFLOW, 1, 0.25]]
    assert histogram_rows([None, None], 2) == [[OVERFLOW, 2, 1.0]]


def test_histogram_small_partition(tmp_path):
    spec = replace(preset("number_partition_small"), replicas=100)
    out, its = histogram(spec, tmp_path / "h")
    assert all(i is not None for i in its)
    rows = read_csv(out / "histogram.csv")
    assert rows[0] == ["iterations", "count", "ratio"]
    assert rows[-1] == [OVERFLOW, "0", "0.0"]
    assert sum(int(r[1]) for r in rows[1:]) == 100
    summary = json.loads((out / "summary.json").read_text())
    assert summary["overflow"] == 0 and summary["iterations"] == its


def test_histogram_linear_system_median(tmp_path):
    spec = replace(preset("linear_system"), params={"N": 100, "M": 80}, replicas=50)
    out, its = histogram(spec, tmp_path / "h")
    hits = [i for i in its if i is not None]
    assert hits and 1 <= np.median(hits) <= 200


def test_histogram_rejects_duplicate_seeds(tmp_path):
    spec = replace(preset("number_partition_small"), replicas=2, seeds=(4, 4))
    with pytest.raises(ConfigError, match="distinct"):
        histogram(spec, tmp_path / "h")
    assert not (tmp_path / "h").exists()


def test_histogram_rejects_unknown_optimum(tmp_path):
    with pytest.raises(ConfigError, match="optimum"):
        histogram(replace(preset("structured_cs"), replicas=2), tmp_path / "h")
    with pytest.raises(ConfigError, match="2 replicas"):
        histogram(kmin_spec(), tmp_path / "h")


# ---- traffic comparison


def traffic_spec(**kw):
    return replace(preset("traffic"), **kw)


def test_compare_single_car_all_equal():
    t = instance_from_routes(1, 2, 5, [[[0, 1, 2], [3, 4]]])
    with mock_annealer() as url:
        cmp = compare_traffic_methods(traffic_spec(endpoint=url), traffic=t)
    assert set(cmp["costs"]) == set(TRAFFIC_METHODS)
    assert set(cmp["costs"].values()) == {1.0}
    assert all(cmp["feasible"].values()) and cmp["absent"] == []


def test_compare_two_cars_sampling_methods_reach_optimum():
    t = instance_from_routes(2, 2, 9, [[[0, 1], [2, 3]], [[0, 5], [6, 7, 8]]])
    best = min(t.cost(t.assignment([a, b])) for a in (0, 1) for b in (0, 1))
    with mock_annealer() as url:
        cmp = compare_traffic_methods(traffic_spec(endpoint=url), traffic=t)
    assert cmp["costs"]["classical"] == best
    assert cmp["costs"]["annealer"] == best
    assert cmp["costs"]["shortest_path"] > best


def test_compare_grid_instance(tmp_path, monkeypatch):
    with mock_annealer() as url:
        monkeypatch.setenv(ENDPOINT_ENV, url)
        out, cmp = compare_traffic(traffic_spec(endpoint="http://127.0.0.1:1"), tmp_path / "c")
    saved = json.loads((out / "comparison.json").read_text())
    assert saved == cmp
    assert len(saved["costs"]) == 4 and len(saved["feasible"]) == 4
    assert all(v is not None for v in saved["costs"].values())
    assert all(saved["feasible"].values())


def test_compare_without_server_marks_absent(monkeypatch):
    import qubolin.annealer as annealer

    monkeypatch.setattr(annealer.time, "sleep", lambda s: None)
    t = instance_from_routes(1, 2, 5, [[[0, 1, 2], [3, 4]]])
    import socket

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    cmp = compare_traffic_methods(traffic_spec(endpoint=f"http://127.0.0.1:{port}"), traffic=t)
    assert cmp["absent"] == ["annealer"]
    assert cmp["costs"]["annealer"] is None and cmp["feasible"]["annealer"] is None
    assert cmp["costs"]["classical"] == 1.0


def test_compare_needs_traffic(tmp_path):
    with pytest.raises(ConfigError, match="traffic"):
        compare_traffic(kmin_spec(), tmp_path / "c")


# ---- CLI


def test_cli_run_exit_codes(tmp_path, capsys):
    assert cli.main(["run", "--preset", "kmin", "--out", str(tmp_path / "a")]) == cli.EXIT_OK
    assert "1/1 replicas converged" in capsys.readouterr().out
    spec = replace(kmin_spec(), solver=replace(kmin_spec().solver, max_iterations=1))
    path = tmp_path / "one.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert cli.main(["run", "--config", str(path), "--out", str(tmp_path / "b")]) == cli.EXIT_NOT_CONVERGED
    assert cli.main(["run", "--preset", "kmin", "--out", str(tmp_path / "a")]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--preset", "kmin", "--jobs", "0", "--out", str(tmp_path / "c")]) == cli.EXIT_CONFIG
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_cli_overrides(tmp_path):
    out = tmp_path / "h"
    code = cli.main(["histogram", "--preset", "number_partition_small", "--replicas", "4", "--seed", "9",
                     "--jobs", "2", "--out", str(out)])
    assert code == cli.EXIT_OK
    spec = json.loads((out / "spec.json").read_text())
    assert spec["replicas"] == 4 and spec["seed"] == 9
    assert [s["generator_seed"] for s in spec["resolved_seeds"]] == [9, 10, 11, 12]


def test_every_preset_is_valid():
    for name in PRESETS:
        spec = preset(name)
        assert RunSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
    with pytest.raises(ConfigError, match="preset"):
        preset("nope")
