import struct

import numpy as np
import pytest

from lrcalib.errors import CheckpointMismatch, IoError, ParseError
from lrcalib.fileio import (CHECKPOINT_FILES, FeatureFile, decode_bank, decode_features, decode_head,
                            decode_ifc, decode_stats, encode_bank, encode_features, encode_head, encode_ifc,
                            encode_stats, load_base, read_features, save_base, write_features)
from lrcalib.harness import fine_tune
from lrcalib.world import generate_world


def random_features(rng, n=30, d=5, c=4):
    labels = rng.integers(0, c, size=n)
    return FeatureFile(rng.normal(size=(n, d)), labels, labels >= c - 1, c)


class TestFeatureFile:
    def test_round_trip(self, rng, tmp_path):
        ff = random_features(rng)
        write_features(tmp_path / "f.lrc", ff)
        assert read_features(tmp_path / "f.lrc") == ff

    def test_layout(self):
        ff = FeatureFile(np.array([[1.5, -2.0]]), np.array([3]), np.array([True]), 4)
        data = encode_features(ff)
        assert data[:4] == b"LRC1"
        assert struct.unpack("<III", data[4:16]) == (2, 1, 4)
        assert struct.unpack("<IB", data[16:21]) == (3, 1)
        assert struct.unpack("<2d", data[21:]) == (1.5, -2.0)

    def test_bit_exact_reals(self):
        x = np.array([[np.nextafter(1.0, 2.0), 1e-310, -0.0]])
        out = decode_features(encode_features(FeatureFile(x, np.array([0]), np.array([False]), 1)))
        assert out.features.tobytes() == x.tobytes()

    def test_empty(self):
        ff = FeatureFile(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=bool), 2)
        assert decode_features(encode_features(ff)) == ff

    @pytest.mark.parametrize("cut", [0, 3, 10, 17, -1])
    def test_truncated(self, rng, cut):
        data = encode_features(random_features(rng))
        with pytest.raises(ParseError):
            decode_features(data[:cut] if cut >= 0 else data[:-1])

    def test_trailing_and_magic(self, rng):
        data = encode_features(random_features(rng))
        with pytest.raises(ParseError):
            decode_features(data + b"\0")
        with pytest.raises(ParseError):
            decode_features(b"XXXX" + data[4:])

    def test_bad_class_and_flag(self):
        ff = FeatureFile(np.zeros((1, 1)), np.array([0]), np.array([False]), 2)
        data = bytearray(encode_features(ff))
        data[16:20] = struct.pack("<I", 2)
        with pytest.raises(ParseError):
            decode_features(bytes(data))
        data = bytearray(encode_features(ff))
        data[20] = 7
        with pytest.raises(ParseError):
            decode_features(bytes(data))

    def test_partition_conflict(self):
        ff = FeatureFile(np.zeros((2, 1)), np.array([0, 0]), np.array([False, True]), 1)
        with pytest.raises(ParseError):
            ff.partition()

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_features(tmp_path / "absent.lrc")


class TestCheckpoints:
    def test_component_round_trips(self, small_run):
        world, art = small_run
        assert decode_ifc(encode_ifc(art.ifc)) == art.ifc
        head = decode_head(encode_head(art.head))
        assert head.class_ids == art.head.class_ids
        assert head.weights.tobytes() == art.head.weights.tobytes()
        assert decode_bank(encode_bank(art.bank)) == art.bank
        stats = decode_stats(encode_stats(art.base_stats, world.dim))
        assert sorted(stats) == sorted(art.base_stats)
        for c, (m, v) in art.base_stats.items():
            assert stats[c][0].tobytes() == m.tobytes() and stats[c][1].tobytes() == v.tobytes()

    def test_reload_continues_identically(self, small_run, small_config, tmp_path):
        world, art = small_run
        save_base(tmp_path, art)
        loaded = load_base(tmp_path, world)
        a = fine_tune(art, world, small_config, 7)
        b = fine_tune(loaded, world, small_config, 7)
        assert a.accuracy == b.accuracy
        assert a.curves == b.curves
        assert [r.row() for r in a.calibration] == [r.row() for r in b.calibration]

    def test_world_mismatch(self, small_run, small_config, tmp_path):
        _, art = small_run
        save_base(tmp_path, art)
        other = generate_world(small_config.replace(world__base_classes=5), 7)
        with pytest.raises(CheckpointMismatch):
            load_base(tmp_path, other)
        wide = generate_world(small_config.replace(world__dim=9), 7)
        with pytest.raises(CheckpointMismatch):
            load_base(tmp_path, wide)

    def test_missing_and_corrupt(self, small_run, tmp_path):
        _, art = small_run
        save_base(tmp_path, art)
        (tmp_path / CHECKPOINT_FILES["ifc"]).unlink()
        with pytest.raises(IoError):
            load_base(tmp_path)
        save_base(tmp_path, art)
        bank = tmp_path / CHECKPOINT_FILES["bank"]
        bank.write_bytes(bank.read_bytes()[:-3])
        with pytest.raises(ParseError):
            load_base(tmp_path)
