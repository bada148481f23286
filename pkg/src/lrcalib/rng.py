"""Named random streams derived from one root seed.

Each consumer (world generation, shot draws, initializations, batches,
augmentation, test draws) gets its own generator, so switching a module
on or off never shifts another module's draws.
"""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("world", "shots", "head-init", "novel-head-init", "ifc-init", "batches",
           "finetune-batches", "augmentation", "test", "split", "export")


def stream(root_seed: int, name: str) -> np.random.Generator:
    if name not in STREAMS:
        raise ValueError(f"unknown random stream {name!r}")
    key = zlib.crc32(name.encode("ascii"))
    return np.random.default_rng(np.random.SeedSequence(int(root_seed) & (2**64 - 1), spawn_key=(key,)))
