"""Binary formats: feature files and training checkpoints.

All integers are little-endian unsigned, all reals little-endian float64.

Feature file::

    b"LRC1" | d:u32 | n:u32 | C:u32 | n x (class:u32, novel:u8, d x f64)

Converter checkpoint::

    d:u32 | h:u32 | w1 (d*h) | b1 (h) | w2 (h*d) | b2 (d)

Head, bank and statistics checkpoints carry their own four-byte magic and
a count header before row-major data; see the writer functions.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierHead
from .errors import CheckpointMismatch, IoError, ParseError
from .ifc import IfcModel
from .memory_bank import MemoryBank, _ClassBuffer

FEATURE_MAGIC = b"LRC1"
HEAD_MAGIC = b"LRH1"
BANK_MAGIC = b"LRB1"
STATS_MAGIC = b"LRS1"

_F8 = np.dtype("<f8")
_RECORD_HEAD = struct.Struct("<IB")
_PARTITION_FLAG = {"base": 0, "novel": 1}
_FLAG_PARTITION = {0: "base", 1: "novel"}
_UNREGISTERED = 255


@dataclass
class FeatureFile:
    features: np.ndarray   # (n, d) float64
    labels: np.ndarray     # (n,) class ids
    novel: np.ndarray      # (n,) bool
    n_classes: int

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def partition(self) -> dict[int, str]:
        """Class id -> partition; a class flagged both ways is rejected."""
        out: dict[int, str] = {}
        for c, nv in zip(self.labels.tolist(), self.novel.tolist()):
            p = "novel" if nv else "base"
            if out.setdefault(c, p) != p:
                raise ParseError(f"class {c} appears in both partitions")
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureFile):
            return NotImplemented
        return (self.n_classes == other.n_classes and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.novel, other.novel)
                and self.features.tobytes() == other.features.tobytes())

    __hash__ = None


# -- low-level helpers ------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes, what: str):
        self.data, self.pos, self.what = data, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ParseError(f"{self.what}: truncated at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self) -> int:
        return self.take(1)[0]

    def reals(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype=_F8).astype(np.float64).reshape(shape)

    def ints(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<i8").astype(np.int64)

    def magic(self, expected: bytes) -> None:
        got = self.take(len(expected))
        if got != expected:
            raise ParseError(f"{self.what}: bad magic {got!r}, expected {expected!r}")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise ParseError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _reals(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_F8).tobytes()


# -- feature files ----------------------------------------------------------

def encode_features(ff: FeatureFile) -> bytes:
    x = np.asarray(ff.features, dtype=np.float64)
    labels = np.asarray(ff.labels, dtype=np.int64)
    n, d = x.shape
    if labels.shape != (n,) or np.asarray(ff.novel).shape != (n,):
        raise ValueError("labels, flags and features differ in length")
    if n and (labels.min() < 0 or labels.max() >= ff.n_classes):
        raise ValueError(f"class ids must lie in [0, {ff.n_classes})")
    buf = io.BytesIO()
    buf.write(FEATURE_MAGIC + struct.pack("<III", d, n, ff.n_classes))
    for row, c, nv in zip(x, labels.tolist(), np.asarray(ff.novel, dtype=bool).tolist()):
        buf.write(_RECORD_HEAD.pack(c, int(nv)))
        buf.write(_reals(row))
    return buf.getvalue()


def decode_features(data: bytes) -> FeatureFile:
    r = _Reader(data, "feature file")
    r.magic(FEATURE_MAGIC)
    d, n, n_classes = r.u32(), r.u32(), r.u32()
    record = _RECORD_HEAD.size + 8 * d
    if len(data) - r.pos != n * record:
        raise ParseError(f"feature file: header declares {n} records of {record} bytes, "
                         f"body holds {len(data) - r.pos} bytes")
    x = np.empty((n, d))
    labels = np.empty(n, dtype=np.int64)
    novel = np.empty(n, dtype=bool)
    for i in range(n):
        c, flag = _RECORD_HEAD.unpack(r.take(_RECORD_HEAD.size))
        if c >= n_classes:
            raise ParseError(f"feature file: record {i} has class {c} >= {n_classes}")
        if flag not in _FLAG_PARTITION:
            raise ParseError(f"feature file: record {i} has partition flag {flag}")
        labels[i], novel[i] = c, bool(flag)
        x[i] = r.reals(d)
    r.done()
    return FeatureFile(x, labels, novel, n_classes)


def write_features(path, ff: FeatureFile) -> None:
    _write_bytes(path, encode_features(ff))


def read_features(path) -> FeatureFile:
    return decode_features(_read_bytes(path))


# -- converter --------------------------------------------------------------

def encode_ifc(model: IfcModel) -> bytes:
    d, h = model.w1.shape
    return struct.pack("<II", d, h) + b"".join(_reals(p) for p in model.params().values())


def decode_ifc(data: bytes) -> IfcModel:
    r = _Reader(data, "converter checkpoint")
    d, h = r.u32(), r.u32()
    model = IfcModel(r.reals((d, h)), r.reals(h), r.reals((h, d)), r.reals(d))
    r.done()
    return model


# -- classifier head --------------------------------------------------------

def encode_head(head: ClassifierHead) -> bytes:
    c, d = head.weights.shape
    ids = np.asarray(head.class_ids, dtype="<u4").tobytes()
    return HEAD_MAGIC + struct.pack("<II", c, d) + ids + _reals(head.weights) + _reals(head.bias)


def decode_head(data: bytes) -> ClassifierHead:
    r = _Reader(data, "head checkpoint")
    r.magic(HEAD_MAGIC)
    c, d = r.u32(), r.u32()
    ids = [r.u32() for _ in range(c)]
    head = ClassifierHead(r.reals((c, d)), r.reals(c), ids)
    r.done()
    return head


# -- memory bank ------------------------------------------------------------

def encode_bank(bank: MemoryBank) -> bytes:
    """Header ``(d, capacity, C, next_seq)``, then per class ``(id, flag,
    count)``, then each class's rows followed by its sequence numbers."""
    ids = sorted(bank._buffers)
    out = [BANK_MAGIC, struct.pack("<IIIQ", bank.dim, bank.capacity, len(ids), bank._next_seq)]
    for c in ids:
        flag = _PARTITION_FLAG.get(bank.partitions.get(c), _UNREGISTERED)
        out.append(struct.pack("<IBI", c, flag, bank.count(c)))
    for c in ids:
        out.append(_reals(bank.class_pool(c)))
        out.append(np.asarray(bank.sequence_numbers(c), dtype="<i8").tobytes())
    return b"".join(out)


def decode_bank(data: bytes) -> MemoryBank:
    r = _Reader(data, "bank checkpoint")
    r.magic(BANK_MAGIC)
    d, capacity, n_classes, next_seq = r.u32(), r.u32(), r.u32(), r.u64()
    header = [(r.u32(), r.u8(), r.u32()) for _ in range(n_classes)]
    bank = MemoryBank(d, capacity)
    for c, flag, count in header:
        if flag != _UNREGISTERED:
            if flag not in _FLAG_PARTITION:
                raise ParseError(f"bank checkpoint: class {c} has partition flag {flag}")
            bank.partitions[c] = _FLAG_PARTITION[flag]
        buf = _ClassBuffer(d)
        rows, seqs = r.reals((count, d)), r.ints(count)
        if count:
            buf.extend(rows, seqs)
        bank._buffers[c] = buf
        bank._size += count
    r.done()
    if bank._size > capacity:
        raise ParseError(f"bank checkpoint: {bank._size} rows exceed capacity {capacity}")
    bank._next_seq = next_seq
    return bank


# -- base statistics --------------------------------------------------------

def encode_stats(stats: dict, dim: int) -> bytes:
    out = [STATS_MAGIC, struct.pack("<II", dim, len(stats))]
    for c in sorted(stats):
        mean, var = stats[c]
        out.append(struct.pack("<I", c) + _reals(mean) + _reals(var))
    return b"".join(out)


def decode_stats(data: bytes) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    r = _Reader(data, "statistics checkpoint")
    r.magic(STATS_MAGIC)
    d, n = r.u32(), r.u32()
    stats = {}
    for _ in range(n):
        c = r.u32()
        stats[c] = (r.reals(d), r.reals(d))
    r.done()
    return stats


# -- checkpoint directories -------------------------------------------------

CHECKPOINT_FILES = {"head": "head.bin", "ifc": "ifc.bin", "bank": "bank.bin", "stats": "base_stats.bin"}


def save_base(directory, base) -> None:
    """Write the four base-stage checkpoints of ``base`` into ``directory``."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {directory}: {exc}") from exc
    _write_bytes(directory / CHECKPOINT_FILES["head"], encode_head(base.head))
    _write_bytes(directory / CHECKPOINT_FILES["ifc"], encode_ifc(base.ifc))
    _write_bytes(directory / CHECKPOINT_FILES["bank"], encode_bank(base.bank))
    _write_bytes(directory / CHECKPOINT_FILES["stats"], encode_stats(base.base_stats, base.bank.dim))


def load_base(directory, world=None):
    """Read a checkpoint directory back into ``BaseArtifacts``.

    With ``world`` given, dimensions and base-class sets must agree with it;
    otherwise :class:`CheckpointMismatch` is raised.
    """
    from .harness import BaseArtifacts

    directory = Path(directory)
    head = decode_head(_read_bytes(directory / CHECKPOINT_FILES["head"]))
    ifc = decode_ifc(_read_bytes(directory / CHECKPOINT_FILES["ifc"]))
    bank = decode_bank(_read_bytes(directory / CHECKPOINT_FILES["bank"]))
    stats = decode_stats(_read_bytes(directory / CHECKPOINT_FILES["stats"]))

    dims = {"head": head.weights.shape[1], "converter": ifc.dim, "bank": bank.dim}
    dims.update({"statistics": len(m) for m, _ in stats.values()})
    if world is not None:
        dims["world"] = world.dim
    if len(set(dims.values())) > 1:
        raise CheckpointMismatch(f"checkpoint dimensions disagree: {dims}")
    if sorted(stats) != sorted(head.class_ids):
        raise CheckpointMismatch(f"head classes {sorted(head.class_ids)} != statistics classes {sorted(stats)}")
    if world is not None and sorted(head.class_ids) != sorted(world.base_ids):
        raise CheckpointMismatch(f"checkpoint holds {len(head.class_ids)} base classes, "
                                 f"world has {len(world.base_ids)}")
    return BaseArtifacts(head, ifc, bank, stats, {})
