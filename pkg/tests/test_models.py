import math

import numpy as np
import pytest

from specsep import (Codebook, DiagGaussian, HmmModel, ModelMismatchError,
                     baum_welch, init_hmm_from_codebook, load_model,
                     log_gaussian_diag, save_model)
from specsep.models import LOG_2PI, VARIANCE_FLOOR

from conftest import random_hmm


class TestLogGaussianDiag:
    def test_at_mean_unit_variance_dim_129(self):
        g = DiagGaussian(mean=np.zeros(129), var=np.ones(129))
        expected = -0.5 * 129 * math.log(2.0 * math.pi)
        assert log_gaussian_diag(np.zeros(129), g) == pytest.approx(
            expected, rel=1e-12)

    def test_one_sigma_in_one_dimension_costs_half(self):
        rng = np.random.default_rng(0)
        mean = rng.normal(0, 1, 10)
        var = rng.uniform(0.5, 2.0, 10)
        g = DiagGaussian(mean=mean, var=var)
        at_mean = log_gaussian_diag(mean, g)
        x = mean.copy()
        x[3] += math.sqrt(var[3])
        assert log_gaussian_diag(x, g) == pytest.approx(at_mean - 0.5,
                                                        abs=1e-10)

    def test_doubling_sigma_changes_normalizer_only(self):
        mean = np.zeros(129)
        g1 = DiagGaussian(mean=mean, var=np.ones(129))
        g2 = DiagGaussian(mean=mean, var=4.0 * np.ones(129))  # sigma doubled
        diff = log_gaussian_diag(mean, g1) - log_gaussian_diag(mean, g2)
        assert diff == pytest.approx(129 * math.log(2.0), rel=1e-12)

    def test_maximized_at_mean(self):
        rng = np.random.default_rng(1)
        mean = rng.normal(0, 1, 6)
        g = DiagGaussian(mean=mean, var=rng.uniform(0.2, 1.0, 6))
        best = log_gaussian_diag(mean, g)
        for d in range(6):
            for eps in (-0.01, 0.01):
                x = mean.copy()
                x[d] += eps
                assert log_gaussian_diag(x, g) < best

    def test_dimension_mismatch_rejected(self):
        g = DiagGaussian(mean=np.zeros(4), var=np.ones(4))
        with pytest.raises(ValueError, match="dimension"):
            log_gaussian_diag(np.zeros(5), g)


class TestInitFromCodebook:
    def test_equal_occupancy_gives_uniform_pi(self):
        cb = Codebook(codevectors=np.zeros((2, 3)),
                      cluster_variances=np.full((2, 3), 0.5),
                      occupancy=np.array([50, 50]))
        model = init_hmm_from_codebook(cb)
        np.testing.assert_allclose(np.exp(model.pi), [0.5, 0.5], atol=1e-12)

    def test_k64_shapes(self):
        cb = Codebook(codevectors=np.zeros((64, 129)),
                      cluster_variances=np.full((64, 129), 0.5),
                      occupancy=np.full(64, 10))
        model = init_hmm_from_codebook(cb)
        assert model.K == 64
        assert model.trans.shape == (64, 64)
        np.testing.assert_allclose(np.exp(model.trans), 1.0 / 64, atol=1e-12)

    def test_zero_occupancy_floored_then_renormalized(self):
        cb = Codebook(codevectors=np.zeros((3, 2)),
                      cluster_variances=np.full((3, 2), 0.5),
                      occupancy=np.array([10, 0, 10]))
        model = init_hmm_from_codebook(cb)
        pi = np.exp(model.pi)
        assert pi[1] >= 1e-7
        assert pi.sum() == pytest.approx(1.0, abs=1e-12)
        model.validate()

    def test_state_params_copied(self):
        rng = np.random.default_rng(2)
        cvs = rng.normal(0, 1, (4, 5))
        cvars = rng.uniform(0.1, 0.5, (4, 5))
        cb = Codebook(cvs, cvars, np.full(4, 5))
        model = init_hmm_from_codebook(cb)
        np.testing.assert_array_equal(model.means, cvs)
        np.testing.assert_array_equal(model.vars, cvars)


class TestBaumWelch:
    def test_k1_converges_to_sample_stats(self):
        rng = np.random.default_rng(3)
        utts = [rng.normal(1.5, 0.8, (60, 4)), rng.normal(1.5, 0.8, (40, 4))]
        allframes = np.vstack(utts)
        init = HmmModel(pi=np.zeros(1), trans=np.zeros((1, 1)),
                        means=np.zeros((1, 4)), vars=np.ones((1, 4)))
        model, trace = baum_welch(utts, init)
        np.testing.assert_allclose(model.means[0], allframes.mean(axis=0),
                                   atol=1e-10)
        np.testing.assert_allclose(model.vars[0], allframes.var(axis=0),
                                   atol=1e-10)
        # closed-form single-Gaussian log-likelihood at the ML parameters
        n, dim = allframes.shape
        var = allframes.var(axis=0)
        expected_ll = -0.5 * n * (np.log(var) + LOG_2PI).sum() - 0.5 * n * dim
        assert trace[-1] == pytest.approx(expected_ll, rel=1e-10)

    def test_two_state_recovery_near_truth(self):
        rng = np.random.default_rng(4)
        truth = HmmModel(
            pi=np.log([0.6, 0.4]),
            trans=np.log([[0.85, 0.15], [0.2, 0.8]]),
            means=np.array([[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]]),
            vars=np.full((2, 3), 0.25))
        from specsep import sample_hmm_frames
        frames, _ = sample_hmm_frames(truth, 2000, rng)
        init = HmmModel(pi=truth.pi.copy(), trans=truth.trans.copy(),
                        means=truth.means + rng.normal(0, 0.2, (2, 3)),
                        vars=truth.vars.copy())
        model, trace = baum_welch([frames], init)
        np.testing.assert_allclose(model.means, truth.means, atol=0.1)
        assert np.all(np.diff(trace) >= -1e-6)

    def test_ll_trace_monotone_over_seeds(self):
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            init = random_hmm(rng, K=3, dim=4)
            utts = [rng.normal(0, 1, (rng.integers(20, 40), 4))
                    for _ in range(3)]
            model, trace = baum_welch(utts, init, max_iters=8)
            diffs = np.diff(trace)
            assert np.all(diffs >= -1e-6), (seed, trace)
            model.validate()

    def test_stochasticity_preserved_every_iteration(self):
        rng = np.random.default_rng(77)
        init = random_hmm(rng, K=3, dim=4)
        utts = [rng.normal(0, 1, (40, 4)) for _ in range(2)]
        for iters in range(1, 5):
            model, _ = baum_welch(utts, init, rel_tol=0.0, max_iters=iters)
            model.validate()
            assert np.all(model.vars >= VARIANCE_FLOOR)

    def test_termination_honors_rel_tol_and_cap(self):
        rng = np.random.default_rng(5)
        init = random_hmm(rng, K=2, dim=3)
        utts = [rng.normal(0, 1, (30, 3))]
        model, trace = baum_welch([u for u in utts], init, rel_tol=1e-5,
                                  max_iters=15)
        assert len(trace) <= 15
        if len(trace) < 15:
            assert abs(trace[-1] - trace[-2]) < 1e-5 * abs(trace[-2])

    def test_variances_floored(self):
        # constant data would otherwise collapse the variance to zero
        utts = [np.ones((50, 3))]
        init = HmmModel(pi=np.zeros(1), trans=np.zeros((1, 1)),
                        means=np.zeros((1, 3)), vars=np.ones((1, 3)))
        model, _ = baum_welch(utts, init, max_iters=3)
        assert np.all(model.vars >= VARIANCE_FLOOR)

    def test_empty_training_set_rejected(self):
        init = HmmModel(pi=np.zeros(1), trans=np.zeros((1, 1)),
                        means=np.zeros((1, 3)), vars=np.ones((1, 3)))
        with pytest.raises(ValueError, match="empty"):
            baum_welch([], init)


class TestPersistence:
    def test_hmm_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(6)
        model = random_hmm(rng, K=4, dim=7)
        model.meta.update({"sample_rate": 8000, "frame_len": 256})
        path = tmp_path / "m.ssm"
        save_model(model, path)
        back = load_model(path)
        assert isinstance(back, HmmModel)
        np.testing.assert_array_equal(back.pi, model.pi)
        np.testing.assert_array_equal(back.trans, model.trans)
        np.testing.assert_array_equal(back.means, model.means)
        np.testing.assert_array_equal(back.vars, model.vars)
        assert back.meta["sample_rate"] == 8000

    def test_codebook_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(7)
        cb = Codebook(codevectors=rng.normal(0, 1, (4, 5)),
                      cluster_variances=rng.uniform(0.1, 1, (4, 5)),
                      occupancy=np.array([3, 4, 5, 6]))
        path = tmp_path / "cb.ssm"
        save_model(cb, path)
        back = load_model(path)
        assert isinstance(back, Codebook)
        np.testing.assert_array_equal(back.codevectors, cb.codevectors)
        np.testing.assert_array_equal(back.cluster_variances,
                                      cb.cluster_variances)
        np.testing.assert_array_equal(back.occupancy, cb.occupancy)

    def test_dimension_mismatch_on_load(self, tmp_path):
        rng = np.random.default_rng(8)
        model = random_hmm(rng, K=2, dim=5)
        path = tmp_path / "m.ssm"
        save_model(model, path)
        with pytest.raises(ModelMismatchError, match="dimension"):
            load_model(path, expect_dim=129)

    def test_kind_mismatch_names_both_kinds(self, tmp_path):
        rng = np.random.default_rng(9)
        cb = Codebook(codevectors=rng.normal(0, 1, (2, 3)),
                      cluster_variances=np.full((2, 3), 0.2),
                      occupancy=np.array([1, 1]))
        path = tmp_path / "cb.ssm"
        save_model(cb, path)
        with pytest.raises(ModelMismatchError) as err:
            load_model(path, expect_kind="hmm")
        assert "vq" in str(err.value) and "hmm" in str(err.value)

    def test_non_model_file_rejected(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, foo=np.zeros(3))
        with pytest.raises(ModelMismatchError, match="not a model file"):
            load_model(path)
