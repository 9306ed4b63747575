import numpy as np
import pytest

from spikeforge import SpikeTrain
from spikeforge.raster import MAGIC, RasterError, dump_spikes, load_spikes


class TestRasterRoundTrip:
    def test_round_trip_identity(self, rng, tmp_path):
        bits = (rng.random((7, 2, 3, 5, 5)) < 0.3).astype(np.uint8)
        train = SpikeTrain(bits)
        path = tmp_path / "train.spk"
        dump_spikes(train, path)
        loaded = load_spikes(path)
        assert loaded.window == 7
        np.testing.assert_array_equal(loaded.bits, bits)

    def test_counts_survive(self, rng, tmp_path):
        bits = (rng.random((4, 1, 2, 3, 3)) < 0.5).astype(np.uint8)
        train = SpikeTrain(bits)
        path = tmp_path / "t.spk"
        dump_spikes(train, path)
        assert load_spikes(path).fired() == train.fired()

    def test_header_layout(self, tmp_path):
        train = SpikeTrain(np.ones((2, 1, 1, 2, 2), dtype=np.uint8))
        path = tmp_path / "t.spk"
        dump_spikes(train, path)
        raw = path.read_bytes()
        assert raw[:4] == MAGIC
        t, n, c, h, w = np.frombuffer(raw[4:24], dtype="<u4")
        assert (t, n, c, h, w) == (2, 1, 1, 2, 2)
        # 4 elements per plane -> 1 byte per plane, low bits set
        assert raw[24:] == bytes([0b1111, 0b1111])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.spk"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(RasterError, match="magic"):
            load_spikes(path)

    def test_truncated_payload(self, tmp_path):
        train = SpikeTrain(np.ones((3, 1, 1, 2, 2), dtype=np.uint8))
        path = tmp_path / "t.spk"
        dump_spikes(train, path)
        path.write_bytes(path.read_bytes()[:-1])
        with pytest.raises(RasterError, match="payload"):
            load_spikes(path)

    def test_synthetic_energy_figures(self, tmp_path):
        # 476035 set bits of 4169728 slots is a 11.4% firing ratio
        t, shape = 8, (1, 509, 32, 32)
        size = int(np.prod(shape))
        assert t * size == 4169728
        rng = np.random.default_rng(52)
        flat = np.zeros(t * size, dtype=np.uint8)
        flat[rng.choice(t * size, size=476035, replace=False)] = 1
        train = SpikeTrain(flat.reshape((t,) + shape))
        path = tmp_path / "energy.spk"
        dump_spikes(train, path)
        loaded = load_spikes(path)
        assert loaded.fired() == 476035
        assert loaded.slots() == 4169728
        assert abs(100.0 * loaded.fired() / loaded.slots() - 11.4) <= 0.05
