import math

import numpy as np
import pytest

from lrcalib.errors import InsufficientPool
from lrcalib.geometry import normalize, normalize_rows
from lrcalib.memory_bank import MemoryBank
from lrcalib.selection import (criterion_a_scores, criterion_b_scores, fuse_scores, select_batch,
                               select_from_pool, select_grouped, select_lrsample)


def _unit(v):
    n = math.sqrt(sum(t * t for t in v))
    return [t / n for t in v]


def exhaustive_target(x, pool):
    """Fused-score oracle in plain Python: softmax of each criterion, summed, first minimum."""
    d = len(x)
    mean = [sum(row[k] for row in pool) / len(pool) for k in range(d)]
    p, xu = _unit(mean), _unit(x)
    dx = [xu[k] - p[k] for k in range(d)]
    xs = sum(xu[k] * p[k] for k in range(d))
    a, b = [], []
    for row in pool:
        u = _unit(row)
        du = [u[k] - p[k] for k in range(d)]
        dot = sum(dx[k] * du[k] for k in range(d))
        a.append(dot / (math.sqrt(sum(t * t for t in dx)) * math.sqrt(sum(t * t for t in du))))
        b.append(abs(xs - sum(u[k] * p[k] for k in range(d))))

    def sm(s):
        m = max(s)
        e = [math.exp(t - m) for t in s]
        z = sum(e)
        return [t / z for t in e]

    fused = [s + t for s, t in zip(sm(a), sm(b))]
    return min(range(len(fused)), key=lambda i: (fused[i], i))


class TestCriterionA:
    def test_identical_offset(self, rng):
        p = normalize(rng.normal(size=4))
        x = normalize(rng.normal(size=4))
        pool = normalize_rows(rng.normal(size=(5, 4)))
        pool[2] = x
        assert criterion_a_scores(x, pool, p)[2] == pytest.approx(1.0)

    def test_reversed_offset(self):
        p = np.array([1.0, 0.0])
        x = normalize([1.0, 1.0])
        pool = np.array([2 * p - x, [0.0, 1.0]])
        assert criterion_a_scores(x, pool, p)[0] == pytest.approx(-1.0)

    def test_random_pool(self, rng):
        p = normalize(rng.normal(size=8))
        x = normalize(rng.normal(size=8))
        pool = normalize_rows(rng.normal(size=(16, 8)))
        dx = x - p
        expected = [np.dot(dx, u - p) / (np.linalg.norm(dx) * np.linalg.norm(u - p)) for u in pool]
        np.testing.assert_allclose(criterion_a_scores(x, pool, p), expected, atol=1e-12)


class TestCriterionB:
    def test_identical(self, rng):
        p = normalize(rng.normal(size=3))
        x = normalize(rng.normal(size=3))
        assert criterion_b_scores(x, np.array([x]), p)[0] == 0.0

    def test_absolute_gap(self):
        # x.p = 0.9 and y.p = 0.4 with p = e1
        p = np.array([1.0, 0.0])
        x = np.array([0.9, math.sqrt(1 - 0.81)])
        y = np.array([0.4, math.sqrt(1 - 0.16)])
        assert criterion_b_scores(x, np.array([y]), p)[0] == pytest.approx(0.5)

    def test_random_pool(self, rng):
        p = normalize(rng.normal(size=6))
        x = normalize(rng.normal(size=6))
        pool = normalize_rows(rng.normal(size=(10, 6)))
        expected = [abs(sum(x * p) - sum(u * p)) for u in pool]
        np.testing.assert_allclose(criterion_b_scores(x, pool, p), expected, atol=1e-14)


class TestSelect:
    def test_own_copy_loses(self, rng):
        bank = MemoryBank(4)
        x = rng.normal(size=4)
        y = rng.normal(size=4)
        bank.insert_many(0, [x, y])
        res = select_lrsample(x, 0, bank)
        assert res.target_index == 1
        assert exhaustive_target(list(x), [list(x), list(y)]) == 1

    def test_dominant_candidate(self):
        # symmetric pool around e1: every candidate has the same radius and
        # candidate 1 mirrors x, so it is lowest on both criteria
        x = np.array([0.8, 0.6, 0.0])
        pool = np.array([x, [0.8, -0.6, 0.0], [0.8, 0.0, 0.6], [0.8, 0.0, -0.6]])
        res = select_from_pool(x, pool)
        assert np.argmin(res.diff_scores) == 1
        assert res.gap_scores[1] == pytest.approx(res.gap_scores.min(), abs=1e-15)
        assert res.target_index == 1

    @pytest.mark.parametrize("seed", range(4))
    def test_exhaustive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(25):
            pool = rng.normal(size=(32, 8)) + rng.normal(size=8)
            x = rng.normal(size=8) + pool.mean(axis=0)
            bank = MemoryBank(8)
            bank.insert_many(3, pool)
            assert select_lrsample(x, 3, bank).target_index == exhaustive_target(x.tolist(), pool.tolist())

    def test_tie_goes_to_lowest_index(self):
        pool = np.array([[1.0, 1.0], [1.0, 1.0], [1.0, -1.0], [1.0, -1.0]])
        assert select_from_pool([1.0, 0.5], pool).target_index == 2

    def test_needs_two_candidates(self, rng):
        bank = MemoryBank(3)
        bank.insert(0, rng.normal(size=3))
        with pytest.raises(InsufficientPool):
            select_lrsample(rng.normal(size=3), 0, bank)

    def test_fused_is_sum_of_softmaxes(self, rng):
        res = select_from_pool(rng.normal(size=5), rng.normal(size=(9, 5)))
        ea, eb = np.exp(res.diff_scores), np.exp(res.gap_scores)
        np.testing.assert_allclose(res.fused, ea / ea.sum() + eb / eb.sum(), rtol=1e-12)

    def test_rank_fusion(self):
        np.testing.assert_allclose(fuse_scores([0.3, 0.1, 0.2], [5.0, 6.0, 7.0], "rank"),
                                   fuse_scores([2, 0, 1], [0, 1, 2]))
        with pytest.raises(ValueError):
            fuse_scores([1.0], [1.0], "mean")


class TestVectorized:
    @pytest.mark.parametrize("fusion", ["score", "rank"])
    def test_batch_matches_single(self, rng, fusion):
        pool = rng.normal(size=(20, 6)) + 1.0
        xs = rng.normal(size=(12, 6)) + 1.0
        got = select_batch(xs, pool, fusion)
        want = [select_from_pool(x, pool, fusion).target_index for x in xs]
        np.testing.assert_array_equal(got, want)

    @pytest.mark.parametrize("fusion", ["score", "rank"])
    def test_grouped_matches_single(self, fusion):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            d = int(rng.integers(2, 9))
            pools = {c: rng.normal(size=(int(rng.integers(2, 40)), d)) + rng.normal(size=d) for c in range(4)}
            pools[4] = rng.normal(size=(1, d))  # too small to select from
            labels = rng.integers(0, 6, 30)
            xs = rng.normal(size=(30, d))
            got = select_grouped(xs, labels, pools, fusion)
            for i, c in enumerate(labels):
                want = select_from_pool(xs[i], pools[c], fusion).target_index if c < 4 else -1
                assert got[i] == want
