import math

import numpy as np
import pytest
from scipy import stats

from lrcalib.ccva import (GaussianSpec, base_statistics, calibrate_center, loss_aug, nearest_base_classes,
                          sample_augmented, variance_transfer)
from lrcalib.errors import InsufficientBaseClasses
from lrcalib.geometry import normalized_euclidean
from lrcalib.ifc import IfcModel, generate_lrsamples
from lrcalib.memory_bank import MemoryBank


def identity_model(d):
    # relu(x + 10) - 10 == x for x > -10
    return IfcModel(np.eye(d), np.full(d, 10.0), np.eye(d), np.full(d, -10.0))


class TestCalibrateCenter:
    def test_fixed_point_model(self, rng):
        bank = MemoryBank(3)
        bank.insert_many(0, rng.normal(size=(5, 3)) + 5, "base")
        shots = rng.normal(size=(2, 3))
        bank.insert_many(9, shots, "novel")
        rep = calibrate_center(bank, identity_model(3), 9, shots)
        np.testing.assert_allclose(rep.center_after, rep.center_before, atol=1e-12)

    def test_two_point_mean(self, rng):
        bank = MemoryBank(4)
        bank.insert_many(0, rng.normal(size=(3, 4)), "base")
        s = rng.normal(size=4)
        bank.insert(7, s, "novel")
        model = IfcModel.init(4, rng)
        g = generate_lrsamples(model, s, 1)[0]
        rep = calibrate_center(bank, model, 7, [s], count=1)
        np.testing.assert_allclose(rep.center_after, (s + g) / 2)

    def test_zero_count_inserts_nothing(self, rng):
        bank = MemoryBank(3)
        bank.insert_many(0, rng.normal(size=(3, 3)), "base")
        bank.insert(5, rng.normal(size=3), "novel")
        rep = calibrate_center(bank, IfcModel.init(3, rng), 5, bank.class_pool(5).copy(), count=0)
        assert bank.count(5) == 1
        assert rep.dist_to_similar_after == rep.dist_to_similar_before

    def test_recomputed_from_bank(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            bank = MemoryBank(6)
            bank.insert_many(0, rng.normal(size=(20, 6)) + 2, "base")
            bank.insert_many(1, rng.normal(size=(20, 6)) - 2, "base")
            shots = rng.normal(size=(2, 6)) + 2.5
            bank.insert_many(2, shots, "novel")
            rep = calibrate_center(bank, IfcModel.init(6, rng), 2, shots)
            after = bank.class_pool(2).mean(axis=0)
            dists = {c: normalized_euclidean(after, bank.class_pool(c).mean(axis=0)) for c in (0, 1)}
            sim = min(dists, key=lambda c: (dists[c], c))
            assert rep.similar_base == sim
            assert abs(rep.dist_to_similar_after - dists[sim]) <= 1e-9

    def test_rejects_base_class(self, rng):
        bank = MemoryBank(2)
        bank.insert_many(0, rng.normal(size=(2, 2)), "base")
        with pytest.raises(ValueError):
            calibrate_center(bank, IfcModel.init(2, rng), 0, bank.class_pool(0).copy())


class TestVarianceTransfer:
    def stats(self):
        return {0: (np.array([1.0, 0.0]), np.array([1.0, 1.0])),
                1: (np.array([0.0, 1.0]), np.array([3.0, 3.0])),
                2: (np.array([-1.0, 0.0]), np.array([9.0, 9.0]))}

    def test_single_nearest(self):
        spec = variance_transfer(5, self.stats(), [1.0, 0.1], k=1)
        np.testing.assert_array_equal(spec.sigma2, [1.0, 1.0])
        np.testing.assert_array_equal(spec.mu, [1.0, 0.1])

    def test_two_nearest_average(self):
        spec = variance_transfer(5, self.stats(), [1.0, 0.9], k=2)
        np.testing.assert_array_equal(spec.sigma2, [2.0, 2.0])

    def test_nearest_set_matches_sort(self, rng):
        base = {c: (rng.normal(size=5), rng.uniform(0.5, 2, 5)) for c in range(10)}
        mu = rng.normal(size=5)
        order = sorted(range(10), key=lambda c: normalized_euclidean(mu, base[c][0]))
        assert nearest_base_classes(mu, base, 3) == order[:3]
        spec = variance_transfer(11, base, mu, k=3)
        np.testing.assert_allclose(spec.sigma2, np.mean([base[c][1] for c in order[:3]], axis=0))

    def test_too_few_base_classes(self):
        with pytest.raises(InsufficientBaseClasses):
            variance_transfer(5, self.stats(), [1.0, 0.0], k=4)

    def test_base_statistics(self, rng):
        bank = MemoryBank(3)
        x = rng.normal(size=(12, 3))
        bank.insert_many(4, x, "base")
        mean, var = base_statistics(bank, [4])[4]
        np.testing.assert_allclose(mean, x.mean(axis=0))
        np.testing.assert_allclose(var, x.var(axis=0, ddof=1))


class TestSampling:
    def test_degenerate(self):
        spec = GaussianSpec(0, np.array([1.0, -2.0]), np.zeros(2))
        np.testing.assert_array_equal(sample_augmented(spec, 5, 1), np.tile([1.0, -2.0], (5, 1)))

    def test_moments(self):
        spec = GaussianSpec(0, np.zeros(4), np.ones(4))
        x = sample_augmented(spec, 10_000, 3)
        assert np.all(np.abs(x.mean(axis=0)) <= 4 / math.sqrt(10_000))
        assert np.all(np.abs(x.var(axis=0) - 1) <= 0.05)

    def test_normality(self):
        spec = GaussianSpec(0, np.array([1.0, -1.0, 0.0, 2.0]), np.array([0.5, 1.0, 2.0, 4.0]))
        x = sample_augmented(spec, 5000, 11)
        for k in range(4):
            assert stats.kstest(x[:, k], "norm", args=(spec.mu[k], math.sqrt(spec.sigma2[k]))).pvalue > 0.001

    def test_deterministic(self):
        spec = GaussianSpec(0, np.zeros(3), np.ones(3))
        np.testing.assert_array_equal(sample_augmented(spec, 7, 42), sample_augmented(spec, 7, 42))


class TestLossAug:
    def test_confident(self):
        z = np.zeros((4, 3))
        z[:, 2] = 1000.0
        assert loss_aug(z, 2) == pytest.approx(0.0, abs=1e-12)

    def test_uniform(self):
        assert loss_aug(np.zeros((5, 6)), 1) == pytest.approx(math.log(6))

    def test_oracle(self, rng):
        z = rng.normal(size=(8, 4))
        ref = np.mean([math.log(sum(math.exp(v) for v in row)) - row[3] for row in z])
        assert loss_aug(z, 3) == pytest.approx(ref, rel=1e-12)
