"""Feature density boundary optimization.

Misclassified ("edge") samples are sorted into a high-importance set when
the most similar foreign class is locally denser around them than their
own class, and a low-importance set otherwise. Each sample's loss is then
mapped to a weight by one of three reweighting families.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import cross_entropy
from .errors import (DegenerateRadius, DimensionMismatch, EmptyInput, EmptyPool, InsufficientClasses,
                     InvalidConfig, NegativeLoss, NonpositiveWeight)
from .geometry import EPS_NORM, as_vector
from .memory_bank import MemoryBank, Prototype

HIGH, LOW, CENTRAL = "high", "low", "central"
FAMILIES = ("linear", "exponential", "sigmoid")
WEIGHT_MIN, WEIGHT_MAX = 0.1, 3.0
MIN_OWN_POOL = 4


@dataclass(frozen=True)
class DensityParams:
    d_in: float = 0.3
    eta: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.d_in < 1.0:
            raise InvalidConfig(f"density.d_in must lie in (0, 1), got {self.d_in}")
        if not self.eta > 0.0:
            raise InvalidConfig(f"density.eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class ImportanceAssignment:
    sample_index: int
    region: str
    d_in_value: float
    d_sim_value: float
    similar_class: int
    weight: float


@dataclass(frozen=True)
class ReweightFunction:
    """Loss-to-weight map ``G``.

    High-importance samples get ``1 + alpha * g(loss)``, low-importance
    samples ``1 / (1 + alpha * g(loss))``, with ``g(0) = 0`` for every
    family so a zero loss keeps weight 1. Results are clamped to
    ``[0.1, 3.0]``.
    """

    family: str = "sigmoid"
    alpha: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown reweighting family {self.family!r}; expected one of {FAMILIES}")
        if not self.alpha > 0:
            raise InvalidConfig("reweighting amplitude must be positive")

    def shape(self, losses) -> np.ndarray:
        ell = np.asarray(losses, dtype=np.float64)
        if self.family == "linear":
            return ell.copy()
        if self.family == "exponential":
            # anything past ~700 saturates the clamp long before
            return np.expm1(np.minimum(ell, 700.0))
        return np.tanh(ell / 2.0)  # == 2 * sigmoid(l) - 1

    def raise_weight(self, losses) -> np.ndarray:
        return np.clip(1.0 + self.alpha * self.shape(losses), WEIGHT_MIN, WEIGHT_MAX)

    def lower_weight(self, losses) -> np.ndarray:
        return np.clip(1.0 / (1.0 + self.alpha * self.shape(losses)), WEIGHT_MIN, WEIGHT_MAX)

    def shape_derivative(self, losses) -> np.ndarray:
        ell = np.asarray(losses, dtype=np.float64)
        if self.family == "linear":
            return np.ones_like(ell)
        if self.family == "exponential":
            return np.exp(np.minimum(ell, 700.0))
        return 0.5 * (1.0 - np.tanh(ell / 2.0) ** 2)

    def weight_derivative(self, losses, region: str) -> np.ndarray:
        """d weight / d loss; zero where the clamp is active."""
        ell = np.asarray(losses, dtype=np.float64)
        if region == CENTRAL:
            return np.zeros_like(ell)
        inner = 1.0 + self.alpha * self.shape(ell)
        dg = self.alpha * self.shape_derivative(ell)
        if region == HIGH:
            w, dw = inner, dg
        else:
            w, dw = 1.0 / inner, -dg / inner**2
        return np.where((w > WEIGHT_MIN) & (w < WEIGHT_MAX), dw, 0.0)


def find_edge_samples(logits, labels) -> np.ndarray:
    """Indices of rows whose argmax (lowest column on ties) differs from the label column."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise DimensionMismatch("logits and labels are not aligned")
    return np.flatnonzero(np.argmax(z, axis=1) != y)


def similar_class(x_in, prototypes, own: int) -> int:
    """Class other than ``own`` whose prototype mean is nearest (Euclidean) to ``x_in``.

    ``prototypes`` maps class id to a :class:`~lrcalib.memory_bank.Prototype`
    or to a raw mean vector. Ties go to the lowest class id.
    """
    x = as_vector(x_in, "x_in")
    others = sorted(int(c) for c in prototypes if int(c) != int(own))
    if len(prototypes) < 2 or not others:
        raise InsufficientClasses("need at least one prototype besides the own class")
    best, best_d = None, math.inf
    for c in others:
        p = prototypes[c]
        mean = np.asarray(p.mean if isinstance(p, Prototype) else p, dtype=np.float64)
        if mean.shape != x.shape:
            raise DimensionMismatch("prototype dimension differs from the input")
        d = float(np.linalg.norm(x - mean))
        if d < best_d:
            best, best_d = c, d
    return best


def coverage_count(d_in: float, n: int) -> int:
    """``ceil(d_in * n)``, robust to binary rounding (0.3 * 10 is not 3 in floats)."""
    return max(1, math.ceil(round(d_in * n, 9)))


def local_densities(x_edge, own_pool, sim_pool, params: DensityParams = DensityParams()):
    """Own-class and similar-class local densities around an edge sample.

    The radius ``d_thred`` is the smallest own-class distance that covers at
    least a ``d_in`` fraction of ``own_pool`` (inclusive count), so the own
    density equals ``d_in`` by construction. The similar-class density is
    the fraction of ``sim_pool`` strictly closer than ``eta * d_thred``.

    Returns
    -------
    tuple
        ``(d_in_value, d_sim_value, d_thred)``
    """
    x = as_vector(x_edge, "x_edge")
    own = np.asarray(own_pool, dtype=np.float64).reshape(-1, x.shape[0])
    sim = np.asarray(sim_pool, dtype=np.float64).reshape(-1, x.shape[0])
    if own.shape[0] < MIN_OWN_POOL:
        raise EmptyPool(f"own-class pool has {own.shape[0]} features; need >= {MIN_OWN_POOL}")
    if sim.shape[0] == 0:
        raise EmptyPool("similar-class pool is empty")
    own_d = np.sort(np.linalg.norm(own - x, axis=1))
    d_thred = float(own_d[coverage_count(params.d_in, own_d.size) - 1])
    if d_thred <= EPS_NORM:
        raise DegenerateRadius("own-class radius collapsed to zero")
    sim_d = np.linalg.norm(sim - x, axis=1)
    d_sim = float(np.count_nonzero(sim_d < params.eta * d_thred)) / sim_d.size
    return params.d_in, d_sim, d_thred


def region_of(d_in_value: float, d_sim_value: float) -> str:
    if d_sim_value > d_in_value:
        return HIGH
    if d_sim_value < d_in_value:
        return LOW
    return CENTRAL


def assign_importance(losses, regions, fn: ReweightFunction = ReweightFunction()) -> np.ndarray:
    """Per-sample weights: 1 for central samples, raised for high, lowered for low."""
    ell = np.asarray(losses, dtype=np.float64)
    regions = list(regions)
    if ell.ndim != 1 or len(regions) != ell.size:
        raise DimensionMismatch("losses and regions are not aligned")
    if np.any(ell < 0):
        raise NegativeLoss("losses must be non-negative")
    w = np.ones_like(ell)
    hi = np.array([r == HIGH for r in regions], dtype=bool)
    lo = np.array([r == LOW for r in regions], dtype=bool)
    unknown = set(regions) - {HIGH, LOW, CENTRAL}
    if unknown:
        raise ValueError(f"unknown region labels {sorted(unknown)}")
    w[hi] = fn.raise_weight(ell[hi])
    w[lo] = fn.lower_weight(ell[lo])
    return w


def loss_edge(weights) -> float:
    """Mean relative deviation of the weights from their mean; 0 iff all equal."""
    v = np.asarray(weights, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise EmptyInput("loss_edge needs a nonempty weight vector")
    if np.any(v <= 0):
        raise NonpositiveWeight("weights must be strictly positive")
    return float(np.mean(np.abs(v - v.mean()) / v))


def loss_edge_grad(weights) -> np.ndarray:
    """Gradient of :func:`loss_edge` with respect to each weight.

    Uses the subgradient ``sign(0) = 0`` where a weight equals the mean.
    """
    v = np.asarray(weights, dtype=np.float64)
    n = v.size
    s = np.sign(v - v.mean())
    return (s * v.mean() / v**2 - np.sum(s / v) / n) / n


def loss_cls_weighted(losses, weights) -> float:
    """Mean of ``weights * losses``; weights are treated as constants."""
    ell = np.asarray(losses, dtype=np.float64)
    v = np.asarray(weights, dtype=np.float64)
    if ell.shape != v.shape or ell.ndim != 1:
        raise DimensionMismatch("losses and weights are not aligned")
    if ell.size == 0:
        raise EmptyInput("empty batch")
    return float(np.mean(v * ell))


@dataclass(frozen=True)
class BatchImportance:
    weights: np.ndarray
    losses: np.ndarray
    regions: list
    assignments: list  # ImportanceAssignment per judged edge sample


def assign_batch(features, logits, labels, class_ids, bank: MemoryBank,
                 params: DensityParams = DensityParams(), fn: ReweightFunction = ReweightFunction(),
                 candidate_classes=None):
    """Importance weights for a classified batch.

    Parameters
    ----------
    features : (n, d) array
    logits : (n, C) array
    labels : (n,) logit columns of the true classes
    class_ids : (n,) true class ids (used for bank lookups)
    bank : MemoryBank
        Source of prototypes and density pools.
    candidate_classes : iterable, optional
        Classes eligible as "similar"; defaults to every class in the bank.

    Returns
    -------
    BatchImportance
    """
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    losses = cross_entropy(logits, labels)
    edges = find_edge_samples(logits, labels)
    regions = [CENTRAL] * x.shape[0]
    assignments = []
    if edges.size:
        ids = bank.classes if candidate_classes is None else sorted(int(c) for c in candidate_classes)
        protos = {c: bank.prototype(c) for c in ids if bank.count(c)}
        for i in edges:
            own = int(class_ids[i])
            try:
                sim = similar_class(x[i], protos, own)
                d_in_v, d_sim_v, _ = local_densities(x[i], bank.class_pool(own), bank.class_pool(sim), params)
            except (EmptyPool, DegenerateRadius, InsufficientClasses):
                # not enough local structure to judge; leave the sample neutral
                continue
            regions[i] = region_of(d_in_v, d_sim_v)
            assignments.append((int(i), regions[i], d_in_v, d_sim_v, sim))
    weights = assign_importance(losses, regions, fn)
    return BatchImportance(
        weights, losses, regions,
        [ImportanceAssignment(i, r, a, b, s, float(weights[i])) for i, r, a, b, s in assignments],
    )
