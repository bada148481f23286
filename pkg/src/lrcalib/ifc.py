"""Intra-class feature converter (IFC).

A one-hidden-layer perceptron ``x -> relu(x @ w1 + b1) @ w2 + b2`` trained
to map a feature onto its LRSample target. Gradients are closed-form; there
is no autodiff dependency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import ClassifierHead, cross_entropy_grad, mean_cross_entropy, uniform_init
from .errors import DimensionMismatch, EmptyInput, ZeroVector
from .geometry import EPS_NORM

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class IfcModel:
    w1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h, d)
    b2: np.ndarray  # (d,)

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d, h = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h, d) or self.b2.shape != (d,):
            raise DimensionMismatch("inconsistent IFC parameter shapes")

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator, hidden: int | None = None) -> "IfcModel":
        """Fan-in uniform initialization; ``hidden`` defaults to ``dim``."""
        h = dim if hidden is None else hidden
        return cls(uniform_init(rng, (dim, h), dim), uniform_init(rng, h, dim),
                   uniform_init(rng, (h, dim), h), uniform_init(rng, dim, h))

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "IfcModel":
        return IfcModel(*(p.copy() for p in self.params().values()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, IfcModel):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.params().values(), other.params().values()))

    __hash__ = None


@dataclass
class IfcTrainBatch:
    inputs: np.ndarray   # (n, d)
    targets: np.ndarray  # (n, d)
    classes: np.ndarray  # (n,) class ids

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=np.float64))
        self.classes = np.atleast_1d(np.asarray(self.classes, dtype=np.int64))
        n = self.inputs.shape[0]
        if n == 0:
            raise EmptyInput("IFC batch is empty")
        if self.targets.shape != self.inputs.shape or self.classes.shape != (n,):
            raise DimensionMismatch("IFC batch sequences differ in length or dimension")


def _as_batch(model: IfcModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise DimensionMismatch(f"IFC expects dimension {model.dim}, got {x.shape[1]}")
    return x, single


def ifc_forward(model: IfcModel, x) -> np.ndarray:
    """Apply the converter to one vector or to each row of a 2-D array."""
    xb, single = _as_batch(model, x)
    out = np.maximum(xb @ model.w1 + model.b1, 0.0) @ model.w2 + model.b2
    return out[0] if single else out


def generate_lrsamples(model: IfcModel, x, count: int = 2) -> np.ndarray:
    """Cascade the converter: each output is fed back as the next input.

    Returns a ``(count, d)`` array whose row ``k`` is the ``k+1``-fold
    composition applied to ``x``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    cur = np.asarray(x, dtype=np.float64)
    for _ in range(count):
        cur = ifc_forward(model, cur)
        out.append(cur)
    return np.vstack(out)


def _row_cosines(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na <= EPS_NORM) or np.any(nb <= EPS_NORM):
        raise ZeroVector("cosine of a (near-)zero vector")
    return np.sum(a * b, axis=1) / (na * nb), na, nb


def loss_trans(transferred, targets) -> float:
    """Mean ``1 - cos(transferred_i, target_i)``; lies in [0, 2]."""
    t = np.atleast_2d(np.asarray(transferred, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if t.shape != y.shape:
        raise DimensionMismatch("transferred and target batches differ in shape")
    if t.shape[0] == 0:
        raise EmptyInput("empty batch")
    cos, _, _ = _row_cosines(t, y)
    return float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))


def loss_spec(logits, labels) -> float:
    """Mean cross-entropy of classifier logits for converted features.

    ``labels`` are logit columns (see :meth:`ClassifierHead.columns`).
    """
    return mean_cross_entropy(logits, labels)


def ifc_objective(model: IfcModel, batch: IfcTrainBatch, head: ClassifierHead,
                  lam_trans: float, lam_spec: float, with_grads: bool = True):
    """Evaluate ``lam_trans * L_trans + lam_spec * L_spec`` and its gradients.

    Returns ``(value, parts, grads, head_grads)`` where ``parts`` holds the
    two unweighted losses, ``grads`` maps IFC parameter names to arrays and
    ``head_grads`` is ``(dW, db)`` for the classifier.
    """
    x = batch.inputs
    n = x.shape[0]
    pre = x @ model.w1 + model.b1
    act = np.maximum(pre, 0.0)
    t = act @ model.w2 + model.b2
    y = batch.targets
    cos, nt, ny = _row_cosines(t, y)
    cols = head.columns(batch.classes)
    logits = head.logits(t)
    l_trans = float(np.mean(1.0 - cos))
    l_spec = mean_cross_entropy(logits, cols)
    value = lam_trans * l_trans + lam_spec * l_spec
    parts = {"trans": l_trans, "spec": l_spec}
    if not with_grads:
        return value, parts, None, None

    # d(1 - cos)/dt = -(y / (|t||y|) - cos * t / |t|^2)
    g_trans = -(y / (nt * ny)[:, None] - (cos / nt**2)[:, None] * t) / n
    g_logits = cross_entropy_grad(logits, cols) / n
    g_t = lam_trans * g_trans + lam_spec * head.input_grad(g_logits)

    grads = {"w2": act.T @ g_t, "b2": g_t.sum(axis=0)}
    g_pre = (g_t @ model.w2.T) * (pre > 0.0)
    grads["w1"] = x.T @ g_pre
    grads["b1"] = g_pre.sum(axis=0)
    head_grads = (lam_spec * g_logits.T @ t, lam_spec * g_logits.sum(axis=0))
    return value, parts, grads, head_grads


def ifc_step(model: IfcModel, batch: IfcTrainBatch, head: ClassifierHead,
             lam_trans: float = 0.05, lam_spec: float = 0.4, lr: float = 0.01, joint: bool = False):
    """Like :func:`ifc_train_step` but also returns the pre-step objective and its parts."""
    value, parts, grads, head_grads = ifc_objective(model, batch, head, lam_trans, lam_spec)
    new = IfcModel(*(model.params()[k] - lr * grads[k] for k in PARAM_NAMES))
    if joint:
        head.weights -= lr * head_grads[0]
        head.bias -= lr * head_grads[1]
    return new, value, parts


def ifc_train_step(model: IfcModel, batch: IfcTrainBatch, head: ClassifierHead,
                   lam_trans: float = 0.05, lam_spec: float = 0.4, lr: float = 0.01,
                   joint: bool = False) -> IfcModel:
    """One SGD step on the converter objective; returns the updated model.

    The head is left untouched unless ``joint`` is set, in which case the
    specificity term's gradient is also applied to it in place.
    """
    return ifc_step(model, batch, head, lam_trans, lam_spec, lr, joint)[0]
