"""Linear classification head and cross-entropy helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyInput


def log_softmax_rows(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_rows(logits) -> np.ndarray:
    return np.exp(log_softmax_rows(logits))


def _check_logits(logits, labels) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise EmptyInput("expected a nonempty 2-D logit array")
    if y.shape != (z.shape[0],):
        raise DimensionMismatch(f"{z.shape[0]} logit rows but {y.size} labels")
    if np.any(y < 0) or np.any(y >= z.shape[1]):
        raise DimensionMismatch(f"label outside [0, {z.shape[1]})")
    return z, y


def cross_entropy(logits, labels) -> np.ndarray:
    """Per-row cross-entropy ``-log softmax(logits)[label]``.

    ``labels`` are column indices into ``logits``.
    """
    z, y = _check_logits(logits, labels)
    return -log_softmax_rows(z)[np.arange(y.size), y]


def mean_cross_entropy(logits, labels) -> float:
    return float(cross_entropy(logits, labels).mean())


def cross_entropy_grad(logits, labels) -> np.ndarray:
    """Gradient of each row's cross-entropy with respect to that row's logits."""
    z, y = _check_logits(logits, labels)
    g = softmax_rows(z)
    g[np.arange(y.size), y] -= 1.0
    return g


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ClassifierHead:
    """Linear head ``logits = x @ weights.T + bias``.

    Column ``j`` of the logits scores class ``class_ids[j]``.
    """

    weights: np.ndarray
    bias: np.ndarray
    class_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not self.class_ids:
            self.class_ids = list(range(self.weights.shape[0]))
        self.class_ids = [int(c) for c in self.class_ids]
        if self.bias.shape != (self.weights.shape[0],) or len(self.class_ids) != self.weights.shape[0]:
            raise DimensionMismatch("head weights, bias and class ids disagree in size")
        self._column = {c: j for j, c in enumerate(self.class_ids)}

    @classmethod
    def init(cls, class_ids, dim: int, rng: np.random.Generator) -> "ClassifierHead":
        n = len(class_ids)
        return cls(uniform_init(rng, (n, dim), dim), np.zeros(n), list(class_ids))

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def columns(self, class_ids) -> np.ndarray:
        """Map class ids to logit columns."""
        try:
            return np.array([self._column[int(c)] for c in np.atleast_1d(class_ids)], dtype=np.int64)
        except KeyError as exc:
            raise DimensionMismatch(f"class {exc.args[0]} is not scored by this head") from None

    def logits(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.dim:
            raise DimensionMismatch(f"head expects dimension {self.dim}, got {x.shape[1]}")
        return x @ self.weights.T + self.bias

    def predict(self, x) -> np.ndarray:
        """Predicted class ids; argmax ties go to the lowest column."""
        return np.asarray(self.class_ids)[np.argmax(self.logits(x), axis=1)]

    def input_grad(self, logit_grad) -> np.ndarray:
        return np.asarray(logit_grad) @ self.weights

    def weighted_ce_step(self, x, class_ids, row_weights, lr: float) -> None:
        """One SGD step on ``sum_i row_weights[i] * CE_i``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        g = cross_entropy_grad(self.logits(x), self.columns(class_ids))
        g *= np.asarray(row_weights, dtype=np.float64)[:, None]
        self.weights -= lr * (g.T @ x)
        self.bias -= lr * g.sum(axis=0)

    def extended(self, new_class_ids, rng: np.random.Generator) -> "ClassifierHead":
        """Copy of this head with freshly initialized rows appended."""
        new_class_ids = [int(c) for c in new_class_ids]
        clash = set(new_class_ids) & set(self.class_ids)
        if clash:
            raise ValueError(f"classes already present in head: {sorted(clash)}")
        extra = uniform_init(rng, (len(new_class_ids), self.dim), self.dim)
        return ClassifierHead(np.vstack([self.weights, extra]),
                              np.concatenate([self.bias, np.zeros(len(new_class_ids))]),
                              self.class_ids + new_class_ids)

    def copy(self) -> "ClassifierHead":
        return ClassifierHead(self.weights.copy(), self.bias.copy(), list(self.class_ids))
