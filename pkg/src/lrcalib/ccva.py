"""Center calibration and variance augmentation for novel classes.

At fine-tuning time the converter trained on base classes turns each
novel shot into LRSamples. Adding them to the memory bank moves the novel
class center. Augmented features are then drawn from a diagonal Gaussian
around the calibrated center, with variance borrowed from the nearest base
classes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import mean_cross_entropy
from .errors import EmptyInput, InsufficientBaseClasses, InvalidConfig
from .geometry import as_vector, normalized_euclidean
from .ifc import IfcModel, generate_lrsamples
from .memory_bank import MemoryBank


@dataclass(frozen=True)
class GaussianSpec:
    class_id: int
    mu: np.ndarray
    sigma2: np.ndarray


@dataclass(frozen=True)
class CalibrationReport:
    class_id: int
    center_before: np.ndarray
    center_after: np.ndarray
    dist_to_similar_before: float
    dist_to_similar_after: float
    similar_base: int

    def row(self) -> dict:
        return {
            "class": self.class_id,
            "similar_base": self.similar_base,
            "dist_without_lrsamples": self.dist_to_similar_before,
            "dist_with_lrsamples": self.dist_to_similar_after,
        }


def base_statistics(bank: MemoryBank, class_ids) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per-class ``(mean, variance)`` of the bank contents.

    Variance is the unbiased per-component estimate (zero for singletons).
    """
    stats = {}
    for c in class_ids:
        pool = bank.class_pool(c)
        if pool.shape[0] == 0:
            raise EmptyInput(f"no stored features for base class {c}")
        var = pool.var(axis=0, ddof=1) if pool.shape[0] > 1 else np.zeros(bank.dim)
        stats[int(c)] = (pool.mean(axis=0), var)
    return stats


def _base_ids(bank: MemoryBank, base_classes) -> list[int]:
    if base_classes is not None:
        return [int(c) for c in base_classes]
    return [c for c in bank.classes if bank.partitions.get(c) == "base"]


def calibrate_center(bank: MemoryBank, model: IfcModel, class_id: int, shots, count: int = 2,
                     base_classes=None) -> CalibrationReport:
    """Insert converter-generated LRSamples for every shot and report the center shift.

    ``shots`` must already be stored in the bank under ``class_id``;
    ``count=0`` inserts nothing and only reports distances. The
    similar base class is the base prototype nearest (normalized Euclidean)
    to the calibrated center; both distances are measured against it.
    """
    shots = np.atleast_2d(np.asarray(shots, dtype=np.float64))
    if shots.shape[0] == 0:
        raise EmptyInput("calibration needs at least one shot")
    if bank.partitions.get(int(class_id)) == "base":
        raise ValueError(f"class {class_id} is a base class")
    if count < 0:
        raise ValueError("count must be >= 0")
    before = bank.prototype(class_id).mean
    for shot in shots if count else ():
        bank.insert_many(class_id, generate_lrsamples(model, shot, count), partition="novel")
    after = bank.prototype(class_id).mean

    base_ids = _base_ids(bank, base_classes)
    if not base_ids:
        raise InsufficientBaseClasses("no base classes in the bank")
    base_means = {c: bank.prototype(c).mean for c in base_ids}
    similar = min(base_ids, key=lambda c: (normalized_euclidean(after, base_means[c]), c))
    return CalibrationReport(
        int(class_id), before, after,
        normalized_euclidean(before, base_means[similar]),
        normalized_euclidean(after, base_means[similar]),
        similar,
    )


def nearest_base_classes(mu, base_stats, k: int) -> list[int]:
    """The ``k`` base classes whose means are nearest to ``mu``, nearest first."""
    if k < 1:
        raise InvalidConfig("k must be positive")
    if len(base_stats) < k:
        raise InsufficientBaseClasses(f"need {k} base classes, have {len(base_stats)}")
    dists = sorted((normalized_euclidean(mu, mean), int(c)) for c, (mean, _) in base_stats.items())
    return [c for _, c in dists[:k]]


def variance_transfer(novel: int, base_stats, calibrated_mu, k: int = 2) -> GaussianSpec:
    """Build the augmentation Gaussian for a novel class.

    The variance is the equal-weight average of the ``k`` nearest base
    classes' variances.
    """
    mu = as_vector(calibrated_mu, "calibrated_mu")
    chosen = nearest_base_classes(mu, base_stats, k)
    sigma2 = np.mean([np.asarray(base_stats[c][1], dtype=np.float64) for c in chosen], axis=0)
    if np.any(sigma2 < 0):
        raise ValueError("base variances must be non-negative")
    return GaussianSpec(int(novel), mu.copy(), sigma2)


def sample_augmented(spec: GaussianSpec, n: int, seed) -> np.ndarray:
    """``n`` draws from ``N(mu, diag(sigma2))``, shape ``(n, d)``.

    ``seed`` is an int or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((n, spec.mu.shape[0]))
    return spec.mu + z * np.sqrt(spec.sigma2)


def loss_aug(logits_of_augmented, label: int) -> float:
    """Mean cross-entropy of augmented features against one fixed logit column."""
    z = np.atleast_2d(np.asarray(logits_of_augmented, dtype=np.float64))
    return mean_cross_entropy(z, np.full(z.shape[0], int(label)))
