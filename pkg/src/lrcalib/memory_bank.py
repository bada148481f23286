"""Per-class FIFO feature memory with a single global capacity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyClass, InvalidConfig
from .geometry import normalize

PARTITIONS = ("base", "novel")


@dataclass(frozen=True)
class Prototype:
    class_id: int
    mean: np.ndarray
    unit: np.ndarray


class _ClassBuffer:
    """Contiguous FIFO of rows; the live window is ``data[head:tail]``."""

    def __init__(self, dim: int):
        self.data = np.empty((16, dim))
        self.seqs = np.empty(16, dtype=np.int64)
        self.head = self.tail = 0

    def __len__(self) -> int:
        return self.tail - self.head

    def append(self, row: np.ndarray, seq: int) -> None:
        if self.tail == self.data.shape[0]:
            n = len(self)
            cap = max(16, 2 * n) if n * 2 > self.data.shape[0] else self.data.shape[0]
            data = np.empty((cap, self.data.shape[1]))
            seqs = np.empty(cap, dtype=np.int64)
            data[:n] = self.data[self.head:self.tail]
            seqs[:n] = self.seqs[self.head:self.tail]
            self.data, self.seqs, self.head, self.tail = data, seqs, 0, n
        self.data[self.tail] = row
        self.seqs[self.tail] = seq
        self.tail += 1

    def extend(self, rows: np.ndarray, seqs: np.ndarray) -> None:
        n, k = len(self), rows.shape[0]
        if self.tail + k > self.data.shape[0]:
            cap = max(16, 2 * (n + k))
            data = np.empty((cap, self.data.shape[1]))
            new_seqs = np.empty(cap, dtype=np.int64)
            data[:n] = self.data[self.head:self.tail]
            new_seqs[:n] = self.seqs[self.head:self.tail]
            self.data, self.seqs, self.head, self.tail = data, new_seqs, 0, n
        self.data[self.tail:self.tail + k] = rows
        self.seqs[self.tail:self.tail + k] = seqs
        self.tail += k

    def popleft(self) -> None:
        self.head += 1

    def oldest_seq(self) -> int:
        return int(self.seqs[self.head])

    def rows(self) -> np.ndarray:
        view = self.data[self.head:self.tail]
        view.flags.writeable = False
        return view

    def copy(self) -> "_ClassBuffer":
        other = _ClassBuffer(self.data.shape[1])
        other.data = self.data[self.head:self.tail].copy()
        other.seqs = self.seqs[self.head:self.tail].copy()
        other.tail = len(other.seqs)
        if other.tail == 0:
            other.data = np.empty((16, self.data.shape[1]))
            other.seqs = np.empty(16, dtype=np.int64)
        return other


class MemoryBank:
    """Bounded store of raw feature vectors keyed by class id.

    Capacity is one budget shared by all classes. When an insert overflows
    it, the inserting class gives up its own oldest entry if it holds more
    than its fair share (``capacity // classes_present``); otherwise the
    oldest entry of the largest class is dropped. A bank holding a single
    class therefore behaves as a plain FIFO.

    Vectors are stored as given (unnormalized).
    """

    def __init__(self, dim: int, capacity: int = 4096):
        if dim < 2:
            raise InvalidConfig("bank dimension must be >= 2")
        if capacity < 1:
            raise InvalidConfig("bank capacity must be positive")
        self.dim = int(dim)
        self.capacity = int(capacity)
        self._buffers: dict[int, _ClassBuffer] = {}
        self.partitions: dict[int, str] = {}
        self._next_seq = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def classes(self) -> list[int]:
        return sorted(c for c, b in self._buffers.items() if len(b))

    def count(self, class_id: int) -> int:
        b = self._buffers.get(int(class_id))
        return len(b) if b else 0

    def _register(self, class_id: int, partition: str | None) -> None:
        if class_id < 0:
            raise ValueError("class ids are non-negative integers")
        if partition is None:
            return
        if partition not in PARTITIONS:
            raise ValueError(f"unknown partition {partition!r}")
        known = self.partitions.get(class_id)
        if known is not None and known != partition:
            raise ValueError(f"class {class_id} is already registered as {known}")
        self.partitions[class_id] = partition

    def insert(self, class_id: int, feature, partition: str | None = None) -> None:
        feature = np.asarray(feature, dtype=np.float64)
        if feature.shape != (self.dim,):
            raise DimensionMismatch(f"expected a {self.dim}-vector, got shape {feature.shape}")
        class_id = int(class_id)
        self._register(class_id, partition)
        buf = self._buffers.get(class_id)
        if buf is None:
            buf = self._buffers[class_id] = _ClassBuffer(self.dim)
        buf.append(feature, self._next_seq)
        self._next_seq += 1
        self._size += 1
        if self._size > self.capacity:
            self._evict(class_id)

    def insert_many(self, class_id: int, features, partition: str | None = None) -> None:
        for f in np.atleast_2d(np.asarray(features, dtype=np.float64)):
            self.insert(class_id, f, partition)

    def insert_rows(self, class_ids, features, partition: str | None = None) -> None:
        """Insert ``features[i]`` under ``class_ids[i]`` in row order.

        Equivalent to repeated :meth:`insert` calls, validated once.
        """
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        ids = np.atleast_1d(np.asarray(class_ids, dtype=np.int64))
        if x.shape[1:] != (self.dim,) or ids.shape != (x.shape[0],):
            raise DimensionMismatch("class ids and features do not line up")
        for c in np.unique(ids):
            self._register(int(c), partition)
        seqs = self._next_seq + np.arange(ids.size)
        order = ids.tolist()
        # the per-row eviction rule only needs counts and oldest sequence
        # numbers, so rows are stored in bulk and the evictions replayed
        live = {c: len(b) for c, b in self._buffers.items()}
        pops = dict.fromkeys(live, 0)
        added = {}
        for c in set(order):
            rows = np.flatnonzero(ids == c)
            buf = self._buffers.get(c)
            if buf is None:
                buf = self._buffers[c] = _ClassBuffer(self.dim)
                live[c] = pops[c] = 0
            buf.extend(x[rows], seqs[rows])
            added[c] = rows.size

        def oldest(c):
            b = self._buffers[c]
            return int(b.seqs[b.head + pops[c]])

        n_present = sum(1 for n in live.values() if n)
        for c in order:
            if not live[c]:
                n_present += 1
            live[c] += 1
            self._size += 1
            if self._size <= self.capacity:
                continue
            if live[c] > max(1, self.capacity // n_present):
                victim = c
            else:
                present = [k for k, n in live.items() if n]
                victim = min(present, key=lambda k: (-live[k], oldest(k)))
            live[victim] -= 1
            if not live[victim]:
                n_present -= 1
            pops[victim] += 1
            self._size -= 1
        for c, n in pops.items():
            self._buffers[c].head += n
        self._next_seq += ids.size

    def _evict(self, inserting: int) -> None:
        present = [c for c, b in self._buffers.items() if b.tail > b.head]
        share = max(1, self.capacity // len(present))
        if len(self._buffers[inserting]) > share:
            victim = inserting
        else:
            # largest class; ties go to the class holding the older entry
            victim = min(present, key=lambda c: (-len(self._buffers[c]), self._buffers[c].oldest_seq()))
        self._buffers[victim].popleft()
        self._size -= 1

    def class_pool(self, class_id: int) -> np.ndarray:
        """Stored vectors of one class as an ``(n, d)`` array, oldest first.

        Returns a ``(0, d)`` array for unknown classes. The result is a
        read-only view that later inserts may invalidate; copy it to keep it.
        """
        buf = self._buffers.get(int(class_id))
        if not buf:
            return np.empty((0, self.dim))
        return buf.rows()

    def sequence_numbers(self, class_id: int) -> list[int]:
        buf = self._buffers.get(int(class_id))
        return [] if not buf else buf.seqs[buf.head:buf.tail].tolist()

    def prototype(self, class_id: int) -> Prototype:
        pool = self.class_pool(class_id)
        if pool.shape[0] == 0:
            raise EmptyClass(f"class {class_id} has no stored features")
        mean = pool.mean(axis=0)
        return Prototype(int(class_id), mean, normalize(mean))

    def prototypes(self, class_ids=None) -> dict[int, Prototype]:
        ids = self.classes if class_ids is None else class_ids
        return {c: self.prototype(c) for c in ids}

    def copy(self) -> "MemoryBank":
        other = MemoryBank(self.dim, self.capacity)
        other._buffers = {c: b.copy() for c, b in self._buffers.items()}
        other.partitions = dict(self.partitions)
        other._next_seq = self._next_seq
        other._size = self._size
        return other

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoryBank):
            return NotImplemented
        if (self.dim, self.capacity, self._next_seq, self.partitions, self.classes) != (
                other.dim, other.capacity, other._next_seq, other.partitions, other.classes):
            return False
        return all(
            self.sequence_numbers(c) == other.sequence_numbers(c)
            and np.array_equal(self.class_pool(c), other.class_pool(c))
            for c in self.classes
        )

    __hash__ = None
