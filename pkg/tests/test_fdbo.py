import math

import numpy as np
import pytest

from lrcalib.classifier import cross_entropy, cross_entropy_grad
from lrcalib.errors import EmptyPool, InsufficientClasses, InvalidConfig, NegativeLoss, NonpositiveWeight
from lrcalib.fdbo import (CENTRAL, FAMILIES, HIGH, LOW, WEIGHT_MAX, WEIGHT_MIN, DensityParams, ReweightFunction,
                          assign_batch, assign_importance, coverage_count, find_edge_samples, local_densities,
                          loss_cls_weighted, loss_edge, loss_edge_grad, region_of, similar_class)
from lrcalib.memory_bank import MemoryBank


def edge_oracle(v):
    m = sum(v) / len(v)
    return sum(abs(x - m) / x for x in v) / len(v)


class TestEdgeSamples:
    def test_all_correct(self):
        assert find_edge_samples(np.eye(3), [0, 1, 2]).size == 0

    def test_all_wrong(self):
        np.testing.assert_array_equal(find_edge_samples(np.eye(3), [1, 2, 0]), [0, 1, 2])

    def test_argmax_oracle(self, rng):
        z = rng.normal(size=(40, 5))
        y = rng.integers(0, 5, 40)
        expected = [i for i in range(40) if max(range(5), key=lambda j: z[i, j]) != y[i]]
        np.testing.assert_array_equal(find_edge_samples(z, y), expected)


class TestSimilarClass:
    def test_coincides_with_other(self):
        protos = {0: np.array([0.0, 0.0]), 1: np.array([3.0, 1.0])}
        assert similar_class([3.0, 1.0], protos, own=0) == 1

    def test_own_excluded(self):
        protos = {0: np.array([0.0, 0.0]), 1: np.array([5.0, 0.0]), 2: np.array([0.0, 9.0])}
        assert similar_class([0.1, 0.0], protos, own=0) == 1

    def test_linear_scan(self, rng):
        protos = {c: rng.normal(size=4) for c in range(10)}
        x = rng.normal(size=4)
        want = min((c for c in protos if c != 3), key=lambda c: (np.linalg.norm(x - protos[c]), c))
        assert similar_class(x, protos, own=3) == want

    def test_needs_two(self):
        with pytest.raises(InsufficientClasses):
            similar_class([1.0, 0.0], {0: np.zeros(2)}, own=0)


class TestLocalDensities:
    def test_sim_far_away(self, rng):
        own = rng.normal(size=(20, 3))
        sim = rng.normal(size=(10, 3)) + 100
        assert local_densities(np.zeros(3), own, sim)[1] == 0.0

    def test_sim_at_sample(self, rng):
        x = rng.normal(size=3)
        own = rng.normal(size=(20, 3))
        assert local_densities(x, own, np.tile(x, (6, 1)))[1] == 1.0

    def test_known_distances(self):
        x = np.zeros(2)
        own = np.array([[float(r), 0.0] for r in range(1, 11)])
        _, _, d_thred = local_densities(x, own, own, DensityParams(0.3, 1.5))
        dists = sorted(np.linalg.norm(own - x, axis=1))
        k = next(i for i in range(1, 11) if i / 10 >= 0.3)
        assert d_thred == dists[k - 1] == 3.0

    def test_similar_density_strict(self):
        x = np.zeros(2)
        own = np.array([[float(r), 0.0] for r in range(1, 11)])
        sim = np.array([[4.5, 0.0], [4.49, 0.0], [0.0, 1.0], [9.0, 9.0]])  # radius 1.5 * 3 = 4.5
        assert local_densities(x, own, sim)[1] == 0.5

    def test_coverage_rounding(self):
        assert coverage_count(0.3, 10) == 3
        assert coverage_count(0.3, 50) == 15
        assert coverage_count(0.01, 5) == 1

    def test_small_pool(self, rng):
        with pytest.raises(EmptyPool):
            local_densities(np.zeros(2), rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))

    def test_params(self):
        with pytest.raises(InvalidConfig):
            DensityParams(d_in=1.0)
        with pytest.raises(InvalidConfig):
            DensityParams(eta=0.0)

    def test_regions(self):
        assert region_of(0.3, 0.5) == HIGH
        assert region_of(0.3, 0.1) == LOW
        assert region_of(0.3, 0.3) == CENTRAL


class TestReweighting:
    @pytest.mark.parametrize("family", FAMILIES)
    def test_zero_loss(self, family):
        w = assign_importance([0.0, 0.0, 0.0], [HIGH, LOW, CENTRAL], ReweightFunction(family))
        np.testing.assert_array_equal(w, [1.0, 1.0, 1.0])

    def test_sigmoid_limit(self):
        fn = ReweightFunction("sigmoid", 0.5)
        assert fn.raise_weight(60.0) == pytest.approx(1.5)
        assert fn.lower_weight(60.0) == pytest.approx(1 / 1.5)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_ordering(self, family):
        fn = ReweightFunction(family)
        grid = np.linspace(0, 10, 201)
        hi, lo = fn.raise_weight(grid), fn.lower_weight(grid)
        assert np.all(lo <= 1.0) and np.all(hi >= 1.0)
        assert np.all(np.diff(hi) >= 0) and np.all(np.diff(lo) <= 0)
        assert hi.max() <= WEIGHT_MAX and lo.min() >= WEIGHT_MIN

    @pytest.mark.parametrize("family", FAMILIES)
    @pytest.mark.parametrize("region", [HIGH, LOW])
    def test_weight_derivative(self, family, region):
        fn = ReweightFunction(family, 0.5)
        ell = np.array([0.1, 0.4, 0.9, 1.3])
        eps = 1e-6
        f = fn.raise_weight if region == HIGH else fn.lower_weight
        num = (f(ell + eps) - f(ell - eps)) / (2 * eps)
        np.testing.assert_allclose(fn.weight_derivative(ell, region), num, rtol=1e-5, atol=1e-9)

    def test_negative_loss(self):
        with pytest.raises(NegativeLoss):
            assign_importance([-0.1], [HIGH])

    def test_bad_family(self):
        with pytest.raises(InvalidConfig):
            ReweightFunction("cubic")


class TestLosses:
    def test_edge_constant(self):
        assert loss_edge(np.full(7, 1.3)) == 0.0

    def test_edge_hand_value(self):
        assert loss_edge([1.0, 3.0]) == pytest.approx(2 / 3)

    def test_edge_oracle(self, rng):
        for _ in range(200):
            v = rng.uniform(0.1, 3.0, int(rng.integers(1, 30)))
            assert abs(loss_edge(v) - edge_oracle(v.tolist())) <= 1e-12

    def test_edge_positive_weights(self):
        with pytest.raises(NonpositiveWeight):
            loss_edge([1.0, 0.0])

    def test_edge_grad(self, rng):
        v = rng.uniform(0.2, 2.5, 9)
        eps = 1e-7
        num = [(loss_edge(v + eps * e) - loss_edge(v - eps * e)) / (2 * eps) for e in np.eye(9)]
        np.testing.assert_allclose(loss_edge_grad(v), num, rtol=1e-5, atol=1e-8)

    def test_weighted_ones(self, rng):
        ell = rng.uniform(0, 3, 10)
        assert loss_cls_weighted(ell, np.ones(10)) == pytest.approx(ell.mean())

    def test_weighted_arithmetic(self):
        assert loss_cls_weighted([1.0, 1.0], [2.0, 0.5]) == 1.25

    def test_weighted_gradient(self, rng):
        z = rng.normal(size=(5, 4))
        y = rng.integers(0, 4, 5)
        v = rng.uniform(0.5, 2.0, 5)
        analytic = cross_entropy_grad(z, y) * (v / 5)[:, None]
        eps = 1e-6
        num = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += eps
            zm[idx] -= eps
            num[idx] = (loss_cls_weighted(cross_entropy(zp, y), v) - loss_cls_weighted(cross_entropy(zm, y), v)) / (2 * eps)
        assert np.max(np.abs(analytic - num) / np.maximum(np.abs(num), 1e-8)) <= 1e-4


class TestAssignBatch:
    def test_regions_follow_densities(self, rng):
        bank = MemoryBank(2)
        bank.insert_many(0, rng.normal(size=(40, 2)) * 0.3, "base")
        bank.insert_many(1, rng.normal(size=(40, 2)) * 0.3 + [1.0, 0.0], "base")
        x = np.array([[0.9, 0.0], [-1.5, 0.0], [0.0, 0.0]])
        logits = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])  # first two misclassified
        imp = assign_batch(x, logits, [0, 0, 0], [0, 0, 0], bank)
        assert imp.regions == [HIGH, LOW, CENTRAL]
        assert imp.weights[0] > 1.0 > imp.weights[1]
        assert imp.weights[2] == 1.0
        assert [a.sample_index for a in imp.assignments] == [0, 1]

    def test_sparse_pool_stays_central(self, rng):
        bank = MemoryBank(2)
        bank.insert_many(0, rng.normal(size=(2, 2)), "base")
        bank.insert_many(1, rng.normal(size=(10, 2)), "base")
        imp = assign_batch([[0.0, 0.0]], [[0.0, 1.0]], [0], [0], bank)
        assert imp.regions == [CENTRAL] and imp.weights[0] == 1.0
