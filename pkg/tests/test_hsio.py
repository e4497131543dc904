"""File formats, sidecars, and synthetic data generators."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cassilab import hsio


class TestHscFormat:
    def test_roundtrip_bitwise(self, tmp_path):
        rng = np.random.default_rng(0)
        cube = rng.standard_normal((5, 7, 3)).astype(np.float32)
        path = tmp_path / "cube.hsc"
        hsio.write_hsc(cube, path)
        back = hsio.read_hsc(path)
        assert back.tobytes() == cube.tobytes() and back.shape == cube.shape

    def test_50_random_roundtrips(self, tmp_path):
        rng = np.random.default_rng(1)
        for i in range(50):
            shape = tuple(int(rng.integers(1, 9)) for _ in range(3))
            cube = rng.standard_normal(shape).astype(np.float32)
            path = tmp_path / f"c{i}.hsc"
            hsio.write_hsc(cube, path)
            assert hsio.read_hsc(path).tobytes() == cube.tobytes()

    def test_byte_layout(self, tmp_path):
        """2x2x1 cube: 4-byte magic + 12 bytes of dims + 4-byte dtype + 16-byte payload."""
        cube = np.arange(4, dtype=np.float32).reshape(1, 2, 2)
        path = tmp_path / "tiny.hsc"
        hsio.write_hsc(cube, path)
        blob = path.read_bytes()
        assert len(blob) == 4 + 12 + 4 + 16
        assert blob[:4] == b"HSC1"
        assert struct.unpack("<IIII", blob[4:20]) == (2, 2, 1, 0)
        assert blob[20:] == cube.astype("<f4").tobytes()

    def test_payload_index_order(self, tmp_path):
        """Flat payload index is ((m*H + x)*W + y)."""
        c, h, w = 2, 3, 4
        cube = np.arange(c * h * w, dtype=np.float32).reshape(c, h, w)
        path = tmp_path / "order.hsc"
        hsio.write_hsc(cube, path)
        flat = np.frombuffer(path.read_bytes()[20:], dtype="<f4")
        m, x, y = 1, 2, 3
        assert flat[(m * h + x) * w + y] == cube[m, x, y]

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.hsc"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="bad magic"):
            hsio.read_hsc(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "trunc.hsc"
        hsio.write_hsc(np.ones((2, 2, 2), np.float32), path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(ValueError, match="truncated"):
            hsio.read_hsc(path)

    def test_unknown_dtype(self, tmp_path):
        path = tmp_path / "dtype.hsc"
        path.write_bytes(b"HSC1" + struct.pack("<IIII", 1, 1, 1, 9) + b"\x00" * 4)
        with pytest.raises(ValueError, match="unknown dtype"):
            hsio.read_hsc(path)

    def test_float64_refused(self, tmp_path):
        with pytest.raises(TypeError, match="float32"):
            hsio.write_hsc(np.ones((1, 1, 1)), tmp_path / "f64.hsc")


class TestHscwFormat:
    def test_roundtrip_bitwise_and_ordered(self, tmp_path):
        rng = np.random.default_rng(2)
        named = [(f"layer{i}.w", rng.standard_normal((i + 1, 3)).astype(np.float32))
                 for i in range(5)]
        named.append(("scalar", np.float32(rng.standard_normal(())) * np.ones((), np.float32)))
        path = tmp_path / "w.hscw"
        hsio.write_hscw(named, path)
        back = hsio.read_hscw(path)
        assert list(back) == [n for n, _ in named]
        for name, arr in named:
            assert back[name].tobytes() == np.asarray(arr).tobytes()

    def test_50_random_roundtrips(self, tmp_path):
        rng = np.random.default_rng(3)
        for i in range(50):
            rank = int(rng.integers(0, 4))
            shape = tuple(int(rng.integers(1, 5)) for _ in range(rank))
            named = [("t", rng.standard_normal(shape).astype(np.float32))]
            path = tmp_path / f"w{i}.hscw"
            hsio.write_hscw(named, path)
            back = hsio.read_hscw(path)
            assert back["t"].shape == shape
            assert back["t"].tobytes() == named[0][1].tobytes()

    def test_duplicate_names_rejected(self, tmp_path):
        named = [("x", np.ones(2, np.float32)), ("x", np.ones(3, np.float32))]
        with pytest.raises(ValueError, match="duplicate"):
            hsio.write_hscw(named, tmp_path / "dup.hscw")

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.hscw"
        path.write_bytes(b"WHAT" + b"\x00" * 8)
        with pytest.raises(ValueError, match="bad magic"):
            hsio.read_hscw(path)

    def test_truncation_fails_loudly(self, tmp_path):
        path = tmp_path / "t.hscw"
        hsio.write_hscw([("weights", np.ones((4, 4), np.float32))], path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ValueError, match="truncated"):
            hsio.read_hscw(path)


class TestMetaSidecar:
    def test_roundtrip(self, tmp_path):
        target = tmp_path / "scene.hsc"
        hsio.write_meta(target, {"peak": 0.97, "seed": 42})
        assert (tmp_path / "scene.hsc.meta").exists()
        meta = hsio.read_meta(target)
        assert meta == {"peak": "0.97", "seed": "42"}


class TestSceneGeneration:
    def test_same_seed_identical(self):
        spec = hsio.SyntheticSceneSpec(kind="gaussian-blobs", seed=5)
        a, b = hsio.generate_scene(spec), hsio.generate_scene(spec)
        assert a.tobytes() == b.tobytes()

    @given(st.sampled_from(hsio.SCENE_KINDS), st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_values_in_unit_range(self, kind, seed):
        cube = hsio.generate_scene(hsio.SyntheticSceneSpec(
            kind=kind, height=16, width=16, channels=6, seed=seed))
        assert cube.min() >= 0.0 and cube.max() <= 1.0

    @pytest.mark.parametrize("seed", range(8))
    def test_blobs_spectrally_smooth(self, seed):
        cube = hsio.generate_scene(hsio.SyntheticSceneSpec(
            kind="gaussian-blobs", height=24, width=24, channels=8, seed=seed))
        flat = cube.reshape(8, -1)
        a, b = flat[:-1].reshape(-1), flat[1:].reshape(-1)
        corr = np.corrcoef(a, b)[0, 1]
        assert corr > 0.5, f"lag-1 spectral autocorrelation {corr:.3f} too low"

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="scene kind"):
            hsio.SyntheticSceneSpec(kind="plasma")


class TestMaskGeneration:
    def test_density_boundaries(self):
        assert hsio.generate_mask(8, 8, density=1.0, seed=0).min() == 1.0
        assert hsio.generate_mask(8, 8, density=0.0, seed=0).max() == 0.0

    def test_density_concentration(self):
        mask = hsio.generate_mask(256, 256, density=0.5, seed=9)
        assert set(np.unique(mask)) <= {0.0, 1.0}
        assert abs(mask.mean() - 0.5) < 0.01

    def test_same_seed_identical(self):
        a = hsio.generate_mask(16, 16, 0.4, seed=3)
        b = hsio.generate_mask(16, 16, 0.4, seed=3)
        assert a.tobytes() == b.tobytes()

    def test_bad_density_rejected(self):
        with pytest.raises(ValueError, match="density"):
            hsio.generate_mask(4, 4, density=1.5)


class TestRasterIngestion:
    def test_filename_ordered_channels(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(6)
        planes = [(rng.random((5, 6)) * 200).astype(np.uint8) for _ in range(3)]
        for i, plane in enumerate(planes):
            Image.fromarray(plane, mode="L").save(tmp_path / f"ch{i}.png")
        cube, peak = hsio.ingest_rasters(sorted(tmp_path.glob("*.png")))
        assert cube.shape == (3, 5, 6)
        assert cube.max() <= 1.0 and peak == max(p.max() for p in planes)
        np.testing.assert_allclose(cube[1] * peak, planes[1], atol=1e-4)
