import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_configs
from qubolin.model import (
    ConstrainedProblem,
    EffectiveModel,
    LinearConstraint,
    QuadraticObjective,
    build_effective,
    constraint_values,
)
from qubolin.problems import grid_prior, instance_from_routes, traffic_problem
from qubolin.samplers import (
    GibbsSampler,
    SampleBatch,
    SamplerConfig,
    SamplerError,
    estimate_expectations,
    exact_field_expectation,
    exact_field_minimize,
    field_free_energy,
    geometric_schedule,
    gibbs_chain,
    gibbs_sample,
    onehot_gibbs_sample,
)


def field_model(linear, groups=()):
    lin = np.asarray(linear, dtype=float)
    return EffectiveModel(QuadraticObjective.build(lin.size, lin), tuple(np.asarray(g) for g in groups))


def boltzmann(m, beta):
    s = all_configs(m.n_vars)
    e = m.energies(s)
    w = np.exp(-beta * (e - e.min()))
    return s, w / w.sum()


class TestExactField:
    def test_signwise_argmin_tie_to_zero(self):
        assert exact_field_minimize(field_model([-0.3, 0.2, 0.0])).tolist() == [1, 0, 0]

    def test_group_picks_largest_field(self):
        assert exact_field_minimize(field_model([-0.2, -0.5, -0.1], [[0, 1, 2]])).tolist() == [0, 1, 0]

    def test_all_positive(self):
        assert exact_field_minimize(field_model([0.1, 2.0, 0.5])).tolist() == [0, 0, 0]

    def test_group_tie_to_lowest_index(self):
        assert exact_field_minimize(field_model([0.0, 1.0, 0.0, 1.0], [[1, 3]])).tolist() == [0, 1, 0, 0]

    def test_is_global_minimum(self, rng):
        for _ in range(20):
            m = field_model(rng.normal(size=6), [[0, 2], [3, 4, 5]])
            s = all_configs(6)
            ok = m.satisfies_groups(s)
            assert m.energy(exact_field_minimize(m)) == pytest.approx(m.energies(s[ok]).min())

    def test_rejects_quadratic(self):
        m = EffectiveModel(QuadraticObjective.build(2, None, {(0, 1): 1.0}))
        with pytest.raises(SamplerError):
            exact_field_minimize(m)
        with pytest.raises(SamplerError):
            exact_field_expectation(m, 1.0)


class TestExactExpectation:
    def test_zero_field_is_half(self):
        for beta in (0.1, 1.0, 50.0):
            assert exact_field_expectation(field_model([0.0]), beta)[0] == 0.5

    def test_logistic_value(self):
        assert exact_field_expectation(field_model([np.log(3.0)]), 1.0)[0] == pytest.approx(0.25, abs=1e-15)

    def test_zero_temperature_limit(self):
        m = field_model([-0.3, 0.2, -1e-3])
        np.testing.assert_allclose(exact_field_expectation(m, 1e6), exact_field_minimize(m), atol=1e-12)

    def test_grouped_softmax(self):
        lin = np.array([0.1, -0.4, 0.3])
        got = exact_field_expectation(field_model(lin, [[0, 1, 2]]), 2.0)
        w = np.exp(-2.0 * lin)
        np.testing.assert_allclose(got, w / w.sum(), rtol=1e-14)

    def test_matches_enumeration(self, rng):
        m = field_model(rng.normal(size=5), [[1, 3]])
        s, p = boltzmann(m, 1.7)
        ok = m.satisfies_groups(s)
        p = np.where(ok, p, 0.0)
        p /= p.sum()
        np.testing.assert_allclose(exact_field_expectation(m, 1.7), p @ s, atol=1e-12)

    def test_free_energy_matches_enumeration(self, rng):
        m = field_model(rng.normal(size=5), [[0, 4]])
        s = all_configs(5)
        e = m.energies(s[m.satisfies_groups(s)])
        beta = 0.8
        assert field_free_energy(m, beta) == pytest.approx(-np.log(np.exp(-beta * e).sum()) / beta, abs=1e-12)
        assert field_free_energy(m) == pytest.approx(e.min(), abs=1e-12)


class TestConfig:
    def test_defaults(self):
        c = SamplerConfig()
        assert len(c.beta_schedule) == 32 and c.beta_schedule[0] == 0.1 and c.beta_schedule[-1] == 50.0
        assert c.sweeps_per_beta == 10 and c.n_samples == 100

    @pytest.mark.parametrize("kw", [dict(beta_schedule=()), dict(beta_schedule=(1.0, 0.5)),
                                    dict(beta_schedule=(-1.0,)), dict(n_samples=0), dict(sweeps_per_beta=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SamplerConfig(**kw)

    def test_round_trip(self):
        c = SamplerConfig(geometric_schedule(0.2, 3.0, 5), 3, 7, 2**64 - 1, 4.0)
        assert SamplerConfig.from_dict(c.to_dict()) == c

    def test_read_beta_appends_sweeps(self):
        c = SamplerConfig((1.0, 2.0), sweeps_per_beta=2, read_beta=5.0)
        assert c.sweep_betas().tolist() == [1.0, 1.0, 2.0, 2.0, 5.0, 5.0]
        assert c.final_beta == 5.0


class TestGibbs:
    def test_unbiased_coin(self):
        b = gibbs_sample(field_model([0.0]), SamplerConfig((1.0,), 1, 4000, seed=5))
        mean = b.samples.mean()
        assert abs(mean - 0.5) <= 3 * np.sqrt(0.25 / 4000)

    def test_ferromagnetic_pair(self):
        m = EffectiveModel(QuadraticObjective.build(2, None, {(0, 1): -1.0}))
        b = gibbs_sample(m, SamplerConfig(n_samples=200, seed=1))
        assert np.all(b.samples[:, 0] == b.samples[:, 1])

    def test_deterministic(self, rng):
        m = EffectiveModel(QuadraticObjective.build(6, rng.normal(size=6), {(0, 1): 0.5, (2, 5): -1.0}))
        cfg = SamplerConfig(n_samples=20, seed=99)
        a, b = gibbs_sample(m, cfg), gibbs_sample(m, cfg)
        np.testing.assert_array_equal(a.samples, b.samples)
        np.testing.assert_array_equal(a.energies, b.energies)

    def test_seed_changes_output(self, rng):
        m = field_model(np.zeros(30))
        a = gibbs_sample(m, SamplerConfig(n_samples=5, seed=1))
        b = gibbs_sample(m, SamplerConfig(n_samples=5, seed=2))
        assert not np.array_equal(a.samples, b.samples)

    def test_energy_consistency(self, rng):
        m = EffectiveModel(QuadraticObjective.build(8, rng.normal(size=8), {(0, 7): 2.0, (3, 4): -1.5}, 0.25))
        b = gibbs_sample(m, SamplerConfig(n_samples=30, seed=3))
        np.testing.assert_allclose(b.energies, [m.energy(q) for q in b.samples], rtol=1e-9, atol=0)

    def test_zero_temperature_consistency(self, rng):
        lin = rng.choice([-1, 1], 12) * rng.uniform(0.05, 1.0, 12)
        m = field_model(lin)
        beta = 50.0 / np.abs(lin).min()
        b = gibbs_sample(m, SamplerConfig((beta,), 1, 500, seed=4))
        hits = np.all(b.samples == exact_field_minimize(m), axis=1)
        assert hits.mean() >= 0.99

    def test_prior_with_fields_matches_enumeration(self):
        prior = grid_prior(4, 4, 1.0)
        r = np.random.default_rng(11)
        cons = tuple(LinearConstraint.build(r.normal(size=16), 0.0) for _ in range(3))
        p = ConstrainedProblem(16, prior, cons)
        nu = np.array([0.3, -0.2, 0.1])
        m = build_effective(p, nu)
        s, w = boltzmann(m, 1.0)
        F = constraint_values(p, s)
        exact = w @ F
        n = 4000
        b = gibbs_sample(m, SamplerConfig((1.0,), 30, n, seed=8))
        Fs = constraint_values(p, b.samples)
        se = Fs.std(axis=0, ddof=1) / np.sqrt(n)
        assert np.all(np.abs(Fs.mean(axis=0) - exact) <= 3 * se)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_detailed_balance_total_variation(seed):
    r = np.random.default_rng(seed)
    n = 8
    quad = {(i, j): r.normal() for i, j in itertools.combinations(range(n), 2) if r.random() < 0.4}
    m = EffectiveModel(QuadraticObjective.build(n, r.normal(size=n), quad))
    codes = gibbs_chain(m, 1.0, 10**6, seed=seed, burn_in=1000)
    emp = np.bincount(codes, minlength=2**n) / codes.size
    s, p = boltzmann(m, 1.0)
    order = s @ (1 << np.arange(n))  # q_i contributes bit i
    exact = np.zeros(2**n)
    exact[order] = p
    assert 0.5 * np.abs(emp - exact).sum() <= 0.02


class TestOneHot:
    def test_uniform_categorical(self):
        b = onehot_gibbs_sample(field_model([0.0, 0.0, 0.0], [[0, 1, 2]]), SamplerConfig((1.0,), 1, 3000, seed=2))
        freq = b.samples.mean(axis=0)
        se = np.sqrt((1 / 3) * (2 / 3) / 3000)
        assert np.all(np.abs(freq - 1 / 3) <= 3 * se)

    def test_dominant_option(self):
        b = onehot_gibbs_sample(field_model([0.0, -10.0, 0.0], [[0, 1, 2]]), SamplerConfig(n_samples=500, seed=2))
        assert b.samples[:, 1].mean() >= 0.99

    def test_feasibility_always(self, rng):
        t = instance_from_routes(4, 3, 6, [[[0, 1], [2], [3, 4]], [[1], [2, 5], [0]], [[5], [4], [3]],
                                            [[0, 2], [1, 3], [4, 5]]])
        m = build_effective(traffic_problem(t), [])
        for seed in range(5):
            b = onehot_gibbs_sample(m, SamplerConfig(geometric_schedule(0.1, 5, 4), 2, 50, seed))
            assert np.all(m.satisfies_groups(b.samples))

    def test_marginals_match_enumeration(self):
        # 3 cars x 2 routes; segment 0 is shared by every car's route 0
        t = instance_from_routes(3, 2, 4, [[[0], [1]], [[0], [2]], [[0, 1], [3]]])
        m = build_effective(traffic_problem(t), [])
        s, w = boltzmann(m, 0.7)
        ok = m.satisfies_groups(s)
        w = np.where(ok, w, 0.0)
        w /= w.sum()
        exact = w @ s
        n = 4000
        b = onehot_gibbs_sample(m, SamplerConfig((0.7,), 20, n, seed=6))
        freq = b.samples.mean(axis=0)
        se = np.sqrt(exact * (1 - exact) / n)
        assert np.all(np.abs(freq - exact) <= 3 * se + 1e-12)

    def test_overlapping_groups_rejected(self):
        m = EffectiveModel(QuadraticObjective.build(3), (np.array([0, 1]), np.array([1, 2])))
        with pytest.raises(SamplerError):
            onehot_gibbs_sample(m, SamplerConfig(n_samples=1))

    def test_free_variables_also_sampled(self):
        m = field_model([0.0, 0.0, -20.0, 20.0], [[0, 1]])
        b = onehot_gibbs_sample(m, SamplerConfig(n_samples=50, seed=1))
        assert np.all(b.samples[:, 2] == 1) and np.all(b.samples[:, 3] == 0)


class TestExpectations:
    def setup_method(self):
        self.sum2 = ConstrainedProblem(2, QuadraticObjective.build(2), (LinearConstraint.build([1, 1], 1.0),))

    def test_average(self):
        b = SampleBatch(np.array([[1, 0], [0, 1]]), np.zeros(2))
        assert estimate_expectations(b, self.sum2).tolist() == [1.0]

    def test_single_sample(self):
        b = SampleBatch(np.array([[1, 1]]), np.zeros(1))
        np.testing.assert_array_equal(estimate_expectations(b, self.sum2), constraint_values(self.sum2, [1, 1]))

    def test_cancellation(self):
        p = ConstrainedProblem(2, QuadraticObjective.build(2), (LinearConstraint.build([1, -1], 0.0),))
        b = SampleBatch(np.array([[1, 1], [0, 0]]), np.zeros(2))
        assert estimate_expectations(b, p).tolist() == [0.0]

    def test_empty_batch(self):
        b = SampleBatch(np.zeros((0, 2), dtype=np.int8), np.zeros(0))
        with pytest.raises(SamplerError):
            estimate_expectations(b, self.sum2)

    def test_batch_length_mismatch(self):
        with pytest.raises(SamplerError):
            SampleBatch(np.zeros((2, 2)), np.zeros(3))

    def test_backend_wraps_seed(self):
        m = field_model(np.zeros(10))
        s = GibbsSampler(SamplerConfig(n_samples=4))
        np.testing.assert_array_equal(s.sample(m, 7).samples, gibbs_sample(m, SamplerConfig(n_samples=4, seed=7)).samples)
