import numpy as np
import pytest

from lrcalib.classifier import (ClassifierHead, cross_entropy, cross_entropy_grad, log_softmax_rows,
                                mean_cross_entropy)
from lrcalib.errors import DimensionMismatch, EmptyInput


class TestCrossEntropy:
    def test_matches_direct_formula(self, rng):
        z = rng.normal(size=(7, 5)) * 3
        y = rng.integers(0, 5, size=7)
        direct = [-np.log(np.exp(z[i, y[i]]) / np.exp(z[i]).sum()) for i in range(7)]
        np.testing.assert_allclose(cross_entropy(z, y), direct, rtol=1e-12)
        assert mean_cross_entropy(z, y) == pytest.approx(np.mean(direct), rel=1e-12)

    def test_stable_for_large_logits(self):
        z = np.array([[1000.0, 0.0], [0.0, -1000.0]])
        ce = cross_entropy(z, [0, 1])
        assert np.all(np.isfinite(ce))
        np.testing.assert_allclose(ce, [0.0, 1000.0])
        assert np.all(np.isfinite(log_softmax_rows(z)))

    def test_gradient_finite_difference(self, rng):
        z = rng.normal(size=(3, 4))
        y = np.array([0, 3, 1])
        g = cross_entropy_grad(z, y)
        eps = 1e-6
        for i in range(3):
            for j in range(4):
                zp, zm = z.copy(), z.copy()
                zp[i, j] += eps
                zm[i, j] -= eps
                fd = (cross_entropy(zp, y)[i] - cross_entropy(zm, y)[i]) / (2 * eps)
                assert g[i, j] == pytest.approx(fd, abs=1e-8)

    def test_bad_inputs(self):
        with pytest.raises(EmptyInput):
            cross_entropy(np.zeros((0, 3)), [])
        with pytest.raises(DimensionMismatch):
            cross_entropy(np.zeros((2, 3)), [0])
        with pytest.raises(DimensionMismatch):
            cross_entropy(np.zeros((1, 3)), [3])


class TestHead:
    def test_columns_and_predict(self):
        head = ClassifierHead(np.eye(3), np.zeros(3), [10, 4, 7])
        np.testing.assert_array_equal(head.columns([7, 10]), [2, 0])
        np.testing.assert_array_equal(head.predict(np.eye(3)), [10, 4, 7])
        with pytest.raises(DimensionMismatch):
            head.columns([5])

    def test_predict_ties_lowest_column(self):
        head = ClassifierHead(np.zeros((3, 2)), np.zeros(3), [5, 1, 2])
        assert head.predict(np.ones((1, 2)))[0] == 5

    def test_weighted_step_zero_weights(self, rng):
        head = ClassifierHead.init([0, 1], 3, rng)
        before = head.copy()
        head.weighted_ce_step(rng.normal(size=(4, 3)), [0, 1, 1, 0], np.zeros(4), 0.5)
        np.testing.assert_array_equal(head.weights, before.weights)

    def test_weighted_step_reduces_loss(self, rng):
        head = ClassifierHead.init([0, 1], 3, rng)
        x = rng.normal(size=(8, 3))
        y = np.array([0, 1] * 4)
        before = mean_cross_entropy(head.logits(x), head.columns(y))
        head.weighted_ce_step(x, y, np.full(8, 1 / 8), 0.1)
        assert mean_cross_entropy(head.logits(x), head.columns(y)) < before

    def test_extended(self, rng):
        head = ClassifierHead.init([0, 1], 3, rng)
        ext = head.extended([5], rng)
        assert ext.class_ids == [0, 1, 5]
        np.testing.assert_array_equal(ext.weights[:2], head.weights)
        assert ext.bias[2] == 0.0
        with pytest.raises(ValueError):
            head.extended([1], rng)

    def test_dimension_check(self):
        head = ClassifierHead(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(DimensionMismatch):
            head.logits(np.zeros((1, 4)))
        with pytest.raises(DimensionMismatch):
            ClassifierHead(np.zeros((2, 3)), np.zeros(3))
