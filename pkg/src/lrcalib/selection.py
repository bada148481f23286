"""Local Reverse Sample (LRSample) selection in the prototype reference frame.

For an input feature of class ``c`` every stored feature of ``c`` is scored
by two criteria, both "lower is better":

* criterion A: cosine similarity between the input's offset from the
  normalized prototype and the candidate's offset. Low means the candidate
  sits on the opposite side of the prototype.
* criterion B: absolute gap between the input's and the candidate's
  similarity to the prototype. Low means both lie at a comparable radius.

The two score sequences are mapped through softmax onto a common scale and
summed; the candidate with the smallest fused value is the target.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InsufficientPool, ZeroVector
from .geometry import EPS_NORM, as_vector, normalize, normalize_rows, softmax
from .memory_bank import MemoryBank

FUSION_MODES = ("score", "rank")


@dataclass(frozen=True)
class SelectionResult:
    target_index: int
    target: np.ndarray
    diff_scores: np.ndarray
    gap_scores: np.ndarray
    fused: np.ndarray


def _pool_array(pool, dim: int) -> np.ndarray:
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise InsufficientPool("candidate pool is empty")
    if pool.shape[1] != dim:
        raise DimensionMismatch(f"pool dimension {pool.shape[1]} != {dim}")
    return pool


def criterion_a_scores(x_unit, pool_units, p_unit) -> np.ndarray:
    """Cosine similarity of offset vectors, one value per pool entry."""
    x = as_vector(x_unit, "x")
    p = as_vector(p_unit, "prototype")
    if x.shape != p.shape:
        raise DimensionMismatch("input and prototype dimensions differ")
    pool = _pool_array(pool_units, x.shape[0])
    dx = x - p
    nx = np.linalg.norm(dx)
    if nx <= EPS_NORM:
        raise ZeroVector("input coincides with the prototype")
    offsets = pool - p
    norms = np.linalg.norm(offsets, axis=1)
    if np.any(norms <= EPS_NORM):
        raise ZeroVector(f"pool entry {int(np.argmin(norms))} coincides with the prototype")
    return np.clip(offsets @ dx / (norms * nx), -1.0, 1.0)


def criterion_b_scores(x_unit, pool_units, p_unit) -> np.ndarray:
    """Absolute gap in prototype similarity, one value per pool entry."""
    x = as_vector(x_unit, "x")
    p = as_vector(p_unit, "prototype")
    if x.shape != p.shape:
        raise DimensionMismatch("input and prototype dimensions differ")
    pool = _pool_array(pool_units, x.shape[0])
    return np.abs(float(x @ p) - pool @ p)


def _rank_positions(scores: np.ndarray) -> np.ndarray:
    ranks = np.empty(scores.size)
    ranks[np.argsort(scores, kind="stable")] = np.arange(scores.size)
    return ranks


def fuse_scores(diff_scores, gap_scores, fusion: str = "score") -> np.ndarray:
    """Sum of per-criterion softmax probabilities.

    ``fusion="rank"`` applies the softmax to ascending rank positions
    instead of raw scores; kept only for comparison runs.
    """
    a = np.asarray(diff_scores, dtype=np.float64)
    b = np.asarray(gap_scores, dtype=np.float64)
    if fusion == "rank":
        a, b = _rank_positions(a), _rank_positions(b)
    elif fusion != "score":
        raise ValueError(f"unknown fusion mode {fusion!r}")
    return softmax(a) + softmax(b)


def select_from_pool(x_in, pool, fusion: str = "score") -> SelectionResult:
    """Select the LRSample for ``x_in`` among raw candidate vectors ``pool``.

    The prototype is the mean of ``pool``. Ties resolve to the lowest index.
    """
    x = as_vector(x_in, "x_in")
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] < 2:
        raise InsufficientPool("LRSample selection needs at least two candidates")
    pool = _pool_array(pool, x.shape[0])
    p_unit = normalize(pool.mean(axis=0))
    x_unit = normalize(x)
    units = normalize_rows(pool)
    diff = criterion_a_scores(x_unit, units, p_unit)
    gap = criterion_b_scores(x_unit, units, p_unit)
    fused = fuse_scores(diff, gap, fusion)
    idx = int(np.argmin(fused))
    return SelectionResult(idx, pool[idx].copy(), diff, gap, fused)


def _row_softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def select_batch(xs, pool, fusion: str = "score") -> np.ndarray:
    """Target indices for several same-class inputs against one pool.

    Agrees with :func:`select_from_pool` per input up to float rounding;
    rows whose input coincides with the prototype get index ``-1``.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    pool = np.asarray(pool, dtype=np.float64)
    if pool.ndim != 2 or pool.shape[0] < 2:
        raise InsufficientPool("LRSample selection needs at least two candidates")
    if xs.shape[1] != pool.shape[1]:
        raise DimensionMismatch("inputs and pool differ in dimension")
    p_unit = normalize(pool.mean(axis=0))
    units = normalize_rows(pool)
    x_units = normalize_rows(xs)
    offsets = units - p_unit
    norms = np.linalg.norm(offsets, axis=1)
    if np.any(norms <= EPS_NORM):
        raise ZeroVector(f"pool entry {int(np.argmin(norms))} coincides with the prototype")
    dx = x_units - p_unit
    nx = np.linalg.norm(dx, axis=1)
    ok = nx > EPS_NORM
    diff = np.clip((dx @ offsets.T) / (np.where(ok, nx, 1.0)[:, None] * norms[None, :]), -1.0, 1.0)
    gap = np.abs((x_units @ p_unit)[:, None] - (units @ p_unit)[None, :])
    if fusion == "rank":
        diff = np.apply_along_axis(_rank_positions, 1, diff)
        gap = np.apply_along_axis(_rank_positions, 1, gap)
    elif fusion != "score":
        raise ValueError(f"unknown fusion mode {fusion!r}")
    idx = np.argmin(_row_softmax(diff) + _row_softmax(gap), axis=1)
    return np.where(ok, idx, -1)


def select_grouped(xs, labels, pools: dict, fusion: str = "score") -> np.ndarray:
    """Target indices for a mixed-class batch in one masked pass.

    ``pools`` maps class id to its raw candidate array. Entry ``i`` of the
    result indexes ``pools[labels[i]]``; it is ``-1`` when that pool has
    fewer than two candidates or the input coincides with the prototype.
    Agrees with :func:`select_lrsample` up to float rounding.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    out = np.full(labels.size, -1, dtype=np.int64)
    uniq, inverse = np.unique(labels, return_inverse=True)
    usable = np.array([len(pools.get(int(c), ())) >= 2 for c in uniq.tolist()])
    classes = uniq[usable].tolist()
    if not classes:
        return out
    if fusion != "score":
        for c in classes:
            rows = np.flatnonzero(labels == c)
            out[rows] = select_batch(xs[rows], pools[c], fusion)
        return out

    blocks = [np.asarray(pools[c], dtype=np.float64) for c in classes]
    sizes = np.array([b.shape[0] for b in blocks])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    cand = np.vstack(blocks)
    cand_norm = np.sqrt(np.einsum("ij,ij->i", cand, cand))
    if np.any(cand_norm <= EPS_NORM):
        raise ZeroVector("a pool entry has (near-)zero norm")
    protos = normalize_rows(np.add.reduceat(cand, starts, axis=0) / sizes[:, None])

    # position of each unique label among the usable classes
    pos = np.cumsum(usable) - 1
    rows = np.flatnonzero(usable[inverse])
    group = pos[inverse[rows]]
    x_units = normalize_rows(xs[rows])

    inv_cand = 1.0 / cand_norm
    u_proto = np.einsum("ij,ij->i", cand, np.repeat(protos, sizes, axis=0)) * inv_cand  # u.p per candidate
    sims = (x_units @ cand.T).ravel()
    x_proto = np.einsum("ij,ij->i", x_units, protos[group])

    # one flat segment per input row, holding that row's own-class candidates
    seg_len = sizes[group]
    seg_start = np.concatenate([[0], np.cumsum(seg_len)[:-1]])
    pair_row = np.repeat(np.arange(rows.size), seg_len)
    local = np.arange(pair_row.size) - seg_start[pair_row]
    col = starts[group][pair_row] + local

    cand_proto = u_proto[col]
    cand_x = sims[pair_row * cand.shape[0] + col] * inv_cand[col]  # u.x
    # |u - p|^2 = 2 - 2 u.p for unit u and p; same for x
    off_norm = np.sqrt(np.maximum(2.0 - 2.0 * cand_proto, 0.0))
    if np.any(off_norm <= EPS_NORM):
        raise ZeroVector("a pool entry coincides with its prototype")
    nx = np.sqrt(np.maximum(2.0 - 2.0 * x_proto, 0.0))
    ok = nx > EPS_NORM
    # (x - p).(u - p) = x.u - x.p - u.p + 1
    dots = cand_x - x_proto[pair_row] - cand_proto + 1.0
    diff = np.clip(dots / (np.where(ok, nx, 1.0)[pair_row] * off_norm), -1.0, 1.0)
    gap = np.abs(x_proto[pair_row] - cand_proto)

    def segment_softmax(z):
        e = np.exp(z - np.maximum.reduceat(z, seg_start)[pair_row])
        return e / np.add.reduceat(e, seg_start)[pair_row]

    fused = segment_softmax(diff) + segment_softmax(gap)
    best = np.minimum.reduceat(fused, seg_start)[pair_row]
    # lowest local index among the minimizers of each segment
    idx = np.minimum.reduceat(np.where(fused == best, local, np.iinfo(np.int64).max), seg_start)
    out[rows] = np.where(ok, idx, -1)
    return out


def select_lrsample(x_in, class_id: int, bank: MemoryBank, fusion: str = "score") -> SelectionResult:
    """Pick the stored feature of ``class_id`` that serves as LRSample target for ``x_in``."""
    pool = bank.class_pool(class_id)
    if pool.shape[0] < 2:
        raise InsufficientPool(f"class {class_id} holds {pool.shape[0]} features; need >= 2")
    return select_from_pool(x_in, pool, fusion)
