import numpy as np
import pytest

from stylediff.containers import (ContainerError, export_pgm, load_bundle,
                                  read_pgm, read_tensor, save_bundle, write_pgm,
                                  write_tensor)
from stylediff.numerics import Rng, gaussian


class TestTensorContainer:
    def test_round_trip_is_float32_exact(self, tmp_path):
        arr = gaussian(Rng(1), (3, 5, 7))
        p = tmp_path / "a.savt"
        write_tensor(p, arr)
        back = read_tensor(p)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr.astype(np.float32).astype(np.float64))

    def test_rewrite_is_byte_identical(self, tmp_path):
        arr = gaussian(Rng(2), (4, 4))
        p1, p2 = tmp_path / "a.savt", tmp_path / "b.savt"
        write_tensor(p1, arr)
        write_tensor(p2, read_tensor(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        p = tmp_path / "a.savt"
        write_tensor(p, np.zeros((2, 3)))
        blob = p.read_bytes()
        assert blob[:4] == b"SAVT"
        assert blob[4:6] == (1).to_bytes(2, "little")
        assert blob[6:8] == (2).to_bytes(2, "little")
        assert blob[8:12] == (2).to_bytes(4, "little")
        assert blob[12:16] == (3).to_bytes(4, "little")
        assert len(blob) == 16 + 4 * 6 + 4

    def test_crc_corruption_detected(self, tmp_path):
        p = tmp_path / "a.savt"
        write_tensor(p, np.ones((2, 2)))
        blob = bytearray(p.read_bytes())
        blob[20] ^= 0xFF  # flip a payload byte
        p.write_bytes(bytes(blob))
        with pytest.raises(ContainerError):
            read_tensor(p)

    def test_truncation_detected(self, tmp_path):
        p = tmp_path / "a.savt"
        write_tensor(p, np.ones((4, 4)))
        p.write_bytes(p.read_bytes()[:-6])
        with pytest.raises(ContainerError):
            read_tensor(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "a.savt"
        p.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ContainerError):
            read_tensor(p)

    def test_nonfinite_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_tensor(tmp_path / "a.savt", np.array([np.nan]))


class TestPgm:
    def test_endpoint_bytes(self, tmp_path):
        p = tmp_path / "g.pgm"
        write_pgm(p, np.array([[0.0, 1.0], [0.5, 0.25]]))
        blob = p.read_bytes()
        pixels = blob.split(b"255\n", 1)[1]
        assert pixels[0] == 0
        assert pixels[1] == 255
        assert pixels[2] == 128  # 127.5 rounds half up
        assert pixels[3] == 64

    def test_out_of_range_clipped_with_warning(self, tmp_path):
        with pytest.warns(RuntimeWarning):
            write_pgm(tmp_path / "g.pgm", np.array([[1.5, -0.2]]))
        back = read_pgm(tmp_path / "g.pgm")
        assert back[0, 0] == 1.0 and back[0, 1] == 0.0

    def test_quantization_bound(self, tmp_path):
        seq = np.clip(gaussian(Rng(3), (2, 1, 6, 6)) * 0.2 + 0.5, 0, 1)
        paths = export_pgm(seq, tmp_path / "frames")
        assert len(paths) == 2
        for f, p in zip(seq, paths):
            back = read_pgm(p)
            assert np.abs(back - f[0]).max() <= 0.5 / 255 + 1e-12

    def test_multichannel_layout(self, tmp_path):
        seq = np.zeros((1, 3, 4, 4))
        paths = export_pgm(seq, tmp_path / "rgb")
        assert [p.split("/")[-1] for p in paths] == \
            ["frame_000_c0.pgm", "frame_000_c1.pgm", "frame_000_c2.pgm"]


class TestBundles:
    def test_round_trip(self, tmp_path):
        tensors = {"w": gaussian(Rng(4), (2, 3)), "b": np.zeros(3)}
        save_bundle(tmp_path / "m", tensors, {"kind": "test", "extra": 7})
        back, meta = load_bundle(tmp_path / "m")
        assert meta == {"kind": "test", "extra": 7}
        for k in tensors:
            assert np.array_equal(back[k], tensors[k].astype(np.float32).astype(np.float64))
