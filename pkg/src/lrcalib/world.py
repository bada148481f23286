"""Feature-space worlds the harness trains and evaluates on.

``SyntheticWorld`` draws class-conditional diagonal Gaussians; each novel
class sits at distance ``delta`` from one assigned base class and shares
that class's variance profile. ``EmpiricalWorld`` resamples rows of a
feature file instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .errors import InvalidConfig
from .rng import stream


@dataclass
class SyntheticWorld:
    dim: int
    base_ids: list
    novel_ids: list
    means: np.ndarray    # (C, d), row = class id
    sigma2: np.ndarray   # (C, d)
    similar: dict        # novel id -> assigned base id
    seed: int

    @property
    def class_ids(self) -> list:
        return self.base_ids + self.novel_ids

    def draw(self, labels, rng: np.random.Generator) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        z = rng.standard_normal((labels.size, self.dim))
        return self.means[labels] + z * np.sqrt(self.sigma2[labels])

    sample_train = draw
    sample_test = draw

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyntheticWorld):
            return NotImplemented
        return (self.dim, self.base_ids, self.novel_ids, self.similar, self.seed) == (
            other.dim, other.base_ids, other.novel_ids, other.similar, other.seed
        ) and np.array_equal(self.means, other.means) and np.array_equal(self.sigma2, other.sigma2)


def generate_world(config: ExperimentConfig, seed: int) -> SyntheticWorld:
    """Draw a synthetic world; deterministic in ``(config.world, seed)``.

    Base class ids are ``0..B-1`` and novel ids ``B..B+N-1``.
    """
    w = config.world
    rng = stream(seed, "world")
    n_base, n_novel, d = w.base_classes, w.novel_classes, w.dim
    base_means = rng.normal(0.0, w.base_scale, size=(n_base, d))
    base_var = w.spread**2 * rng.uniform(1 - w.variance_jitter, 1 + w.variance_jitter, size=(n_base, d))
    assigned = rng.choice(n_base, size=n_novel, replace=n_novel > n_base)

    novel_means = np.empty((n_novel, d))
    for j, b in enumerate(assigned):
        for _ in range(100):
            u = rng.standard_normal(d)
            u /= np.linalg.norm(u)
            cand = base_means[b] + w.delta * u
            dist = np.linalg.norm(base_means - cand, axis=1)
            others = np.delete(dist, b)
            if dist[b] < others.min():
                break
        else:
            raise InvalidConfig(f"world.delta={w.delta} is too large: novel class {n_base + j} "
                                f"cannot stay nearest to its similar base class")
        novel_means[j] = cand
    novel_var = base_var[assigned].copy()

    return SyntheticWorld(
        dim=d,
        base_ids=list(range(n_base)),
        novel_ids=list(range(n_base, n_base + n_novel)),
        means=np.vstack([base_means, novel_means]),
        sigma2=np.vstack([base_var, novel_var]),
        similar={n_base + j: int(b) for j, b in enumerate(assigned)},
        seed=int(seed),
    )


class EmpiricalWorld:
    """World backed by stored feature rows.

    Each class's rows are split once (seeded) into a training half and a
    test half; draws resample with replacement from the relevant half.
    Classes with a single row use it for both.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray, partition: dict, seed: int = 0):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        self.dim = features.shape[1]
        self.base_ids = sorted(c for c, p in partition.items() if p == "base" and np.any(labels == c))
        self.novel_ids = sorted(c for c, p in partition.items() if p == "novel" and np.any(labels == c))
        if len(self.base_ids) < 2:
            raise InvalidConfig("feature file needs at least two populated base classes")
        if not self.novel_ids:
            raise InvalidConfig("feature file needs at least one populated novel class")
        rng = stream(seed, "split")
        self._train, self._test = {}, {}
        for c in self.base_ids + self.novel_ids:
            rows = features[labels == c]
            order = rng.permutation(rows.shape[0])
            half = max(1, rows.shape[0] // 2)
            self._train[c] = rows[order[:half]]
            self._test[c] = rows[order[half:]] if rows.shape[0] > 1 else rows
        self.seed = int(seed)

    @property
    def class_ids(self) -> list:
        return self.base_ids + self.novel_ids

    def _draw(self, table, labels, rng):
        labels = np.asarray(labels, dtype=np.int64)
        out = np.empty((labels.size, self.dim))
        for i, c in enumerate(labels):
            rows = table[int(c)]
            out[i] = rows[rng.integers(rows.shape[0])]
        return out

    def sample_train(self, labels, rng):
        return self._draw(self._train, labels, rng)

    def sample_test(self, labels, rng):
        return self._draw(self._test, labels, rng)
