import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmala.diagnostics import (
    MetricSeries,
    acceptance_gap,
    agent_accuracy,
    burned_samples,
    consensus_error,
    fd_gradient,
    fd_hvp,
    pooled_log_posterior,
    posterior_moments,
    relative_error,
    steady_state,
    task_metric,
)
from dmala.errors import EmptyAfterBurnIn, MissingDualEvaluation, ShapeMismatch
from dmala.potentials import PotentialShard, gaussian_posterior, gaussian_shard, linreg_shard, logreg_shard
from dmala.sampler import SamplerConfig, Trace, run_centralized_hmc, run_dmala

from .conftest import complete_w, random_spd, split_gaussian


def make_trace(samples, accepts=None, metrics=None):
    samples = np.asarray(samples, dtype=float)
    T = samples.shape[0] - 1
    return Trace(samples=samples, sample_iters=np.arange(T + 1),
                 accepts=np.ones((T, samples.shape[1]), bool) if accepts is None else accepts,
                 metrics=metrics or {})


class ConstantShard(PotentialShard):
    dim = 3

    def log_density(self, w):
        return 4.2


class TestConsensusError:
    def test_identical_rows(self):
        assert consensus_error(np.tile([1.0, 2.0], (4, 1))) == 0.0

    def test_two_rows(self):
        assert consensus_error([[0.0, 0.0], [2.0, 0.0]]) == pytest.approx(np.sqrt(2))

    def test_brute_force(self, rng):
        X = rng.standard_normal((5, 3))
        mean = [sum(X[i, k] for i in range(5)) / 5 for k in range(3)]
        brute = np.sqrt(sum((X[i, k] - mean[k]) ** 2 for i in range(5) for k in range(3)))
        assert consensus_error(X) == pytest.approx(brute, abs=1e-12)

    @given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-1e3, 1e3))
    def test_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((4, 3))
        c = shift * rng.standard_normal(3)
        assert consensus_error(X + c) == pytest.approx(consensus_error(X), abs=1e-9)


class TestFiniteDifferences:
    def test_gaussian_gradient(self, rng):
        s = gaussian_shard(rng.standard_normal(3), random_spd(rng, 3))
        w = rng.standard_normal(3)
        np.testing.assert_allclose(fd_gradient(s, w, h=1e-5), s.grad(w), atol=1e-6)

    def test_constant_shard(self, rng):
        np.testing.assert_allclose(fd_gradient(ConstantShard(), rng.standard_normal(3)), 0.0)

    def test_linreg_hvp(self, rng):
        X = rng.standard_normal((10, 3))
        s = linreg_shard(X, rng.standard_normal(10), 2.0, 3.0, 0.5)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(fd_hvp(s, rng.standard_normal(3), v), (2.0 * X.T @ X + 1.5 * np.eye(3)) @ v,
                                   atol=1e-5)

    def test_fd_gradient_only_uses_log_density(self, rng):
        class Spy(ConstantShard):
            def grad(self, w):
                raise AssertionError("oracle must not call grad")

        fd_gradient(Spy(), np.zeros(3))

    def test_relative_error(self):
        assert relative_error([1.0, 1.0], [1.0, 1.0]) == 0.0
        assert relative_error([2.0], [1.0]) == pytest.approx(1.0)


class TestMoments:
    def test_repeated_sample(self):
        tr = make_trace(np.tile([[1.0, 2.0]], (10, 1, 1)))
        mean, cov = posterior_moments(tr, 0.5)
        np.testing.assert_array_equal(mean, [1.0, 2.0])
        np.testing.assert_array_equal(cov, 0.0)

    def test_full_burn_in_is_an_error(self):
        tr = make_trace(np.zeros((5, 1, 2)))
        with pytest.raises(EmptyAfterBurnIn):
            posterior_moments(tr, 1.0)
        with pytest.raises(ValueError):
            burned_samples(tr, 1.5)

    def test_pools_agents(self):
        samples = np.array([[[0.0], [2.0]], [[0.0], [2.0]]])
        mean, cov = posterior_moments(make_trace(samples), 0.0)
        assert mean[0] == 1.0 and cov[0, 0] == 1.0

    def test_centralized_hmc_on_gaussian(self):
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        shard = gaussian_shard(np.zeros(2), np.linalg.inv(cov))
        tr = run_centralized_hmc([shard], SamplerConfig(epsilon=0.3, T=20000, seed=1, track_log_posterior=False),
                                 np.zeros(2), leapfrog_steps=4)
        mean, est = posterior_moments(tr, 0.1)
        assert np.abs(mean).max() < 0.06
        np.testing.assert_allclose(est, cov, atol=0.06)

    def test_pooled_log_posterior(self):
        shard = gaussian_shard(np.zeros(1), np.eye(1))
        tr = make_trace(np.array([[[1.0]], [[1.0]], [[3.0]]]))
        assert pooled_log_posterior(tr, [shard], 0.0) == pytest.approx(np.mean([-0.5, -0.5, -4.5]))


class TestTaskMetric:
    def test_perfect_predictor_mse(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        w = np.array([2.0, -1.0])
        tr = make_trace(np.tile(w, (6, 3, 1)))
        s = task_metric(tr, [linreg_shard(X, X @ w)], "mse", (X, X @ w))
        np.testing.assert_allclose(s.values, 0.0, atol=1e-24)
        assert len(s) == 6

    def test_perfect_classifier_accuracy(self):
        X = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        y = np.array([0, 1, 1, 0])
        W = np.array([[20.0, -20.0], [-20.0, 20.0]]).ravel()
        shard = logreg_shard(X, y, 2)
        tr = make_trace(np.tile(W, (4, 2, 1)))
        acc = task_metric(tr, [shard], "accuracy", (X[:2], y[:2]))
        np.testing.assert_array_equal(acc.values, 1.0)

    def test_mse_converges_to_bayes_mean_predictor(self, rng):
        X = rng.standard_normal((200, 4))
        w_true = rng.standard_normal(4)
        y = X @ w_true + rng.standard_normal(200)
        Xte = rng.standard_normal((100, 4))
        yte = Xte @ w_true + rng.standard_normal(100)
        shard = linreg_shard(X, y, 1.0, 1.0)
        mean, _ = gaussian_posterior([shard])
        bayes = np.mean((Xte @ mean - yte) ** 2)
        cfg = SamplerConfig(epsilon=0.04, T=6000, seed=2, track_log_posterior=False)
        tr = run_centralized_hmc([shard], cfg, mean, leapfrog_steps=3)
        series = task_metric(tr, [shard], "mse", (Xte, yte), burn_in=1)
        assert series.last == pytest.approx(bayes, rel=0.05)

    def test_separable_logistic_hmc_accuracy(self, rng):
        n = 100
        X = np.vstack([rng.normal(-2, 0.7, (n, 2)), rng.normal(2, 0.7, (n, 2))])
        X = np.hstack([X, np.ones((2 * n, 1))])
        y = np.repeat([0, 1], n)
        shard = logreg_shard(X, y, 2, prior_precision=1.0)
        tr = run_centralized_hmc([shard], SamplerConfig(epsilon=0.05, T=1500, seed=3), np.zeros(6),
                                 leapfrog_steps=3)
        acc = task_metric(tr, [shard], "accuracy", (X, y), burn_in=500)
        assert acc.last >= 0.95
        assert agent_accuracy(tr, shard, (X, y)).min() >= 0.95

    def test_mean_log_posterior_kind(self):
        shard = gaussian_shard(np.zeros(1), np.eye(1))
        tr = make_trace(np.array([[[0.0]], [[2.0]]]))
        s = task_metric(tr, [shard], "mean_log_posterior")
        np.testing.assert_allclose(s.values, [0.0, -1.0])

    def test_errors(self):
        tr = make_trace(np.zeros((3, 1, 2)))
        shard = linreg_shard(np.zeros((2, 2)), np.zeros(2))
        with pytest.raises(ShapeMismatch):
            task_metric(tr, [shard], "mse", (np.zeros((4, 3)), np.zeros(4)))
        with pytest.raises(ShapeMismatch):
            task_metric(tr, [shard], "mse", (np.zeros((4, 2)), np.zeros(3)))
        with pytest.raises(ValueError):
            task_metric(tr, [shard], "rmse", (np.zeros((4, 2)), np.zeros(4)))
        with pytest.raises(ValueError):
            task_metric(tr, [shard], "mse")
        with pytest.raises(EmptyAfterBurnIn):
            task_metric(tr, [shard], "mse", (np.zeros((4, 2)), np.zeros(4)), burn_in=3)


class TestAcceptanceGap:
    def test_missing_dual_evaluation(self):
        with pytest.raises(MissingDualEvaluation):
            acceptance_gap(make_trace(np.zeros((2, 1, 1))))

    def test_quadratic_target_second_order_is_exact(self, rng):
        shards, _, _ = split_gaussian(rng, 3, 4)
        tr = run_dmala(shards, complete_w(3), SamplerConfig(epsilon=0.25, T=300, seed=1, record_delta_h=True),
                       rng.standard_normal(4))
        assert acceptance_gap(tr, "second_order").values.max() <= 1e-9
        assert acceptance_gap(tr, "taylor").values.max() > 1e-6

    def test_zero_step_gap_vanishes(self, rng):
        shards, _, _ = split_gaussian(rng, 2, 3)
        tr = run_dmala(shards, complete_w(2), SamplerConfig(epsilon=0.0, T=20, record_delta_h=True), np.zeros(3))
        for variant in ("taylor", "second_order"):
            np.testing.assert_array_equal(acceptance_gap(tr, variant).values, 0.0)


class TestMetricSeries:
    def test_validation(self):
        with pytest.raises(ValueError):
            MetricSeries("x", np.zeros((2, 2)))
        with pytest.raises(ValueError):
            MetricSeries("x", [1.0, np.nan])

    def test_steady_state(self):
        s = MetricSeries("x", np.arange(10.0))
        assert steady_state(s) == pytest.approx(7.0)
        assert steady_state(np.ones(4), 0.0) == 1.0
