"""P6 image serialization: byte-exact round trips, the quantization error
bound, header parsing edge cases, and the optional PNG path."""

import numpy as np
import pytest

from swerve import quantization_l2_bound, read_image, read_ppm, write_image, write_ppm


def test_uint8_round_trip_is_exact(tmp_path, rng):
    img = rng.integers(0, 256, size=(13, 9, 3), dtype=np.uint8)
    path = tmp_path / "x.ppm"
    write_ppm(img, path)
    np.testing.assert_array_equal(read_ppm(path), img)


def test_float_write_quantizes_to_nearest(tmp_path):
    img = np.array([[[0.0, 1.0, 0.5]]], dtype=np.float32)
    path = tmp_path / "x.ppm"
    write_ppm(img, path)
    np.testing.assert_array_equal(read_ppm(path)[0, 0], [0, 255, 128])


def test_quantization_l2_bound(tmp_path, rng):
    img = rng.random((20, 20, 3), dtype=np.float32)
    path = tmp_path / "x.ppm"
    write_ppm(img, path)
    back = read_ppm(path).astype(np.float64) / 255.0
    err = np.sqrt(((back - img.astype(np.float64)) ** 2).sum())
    bound = quantization_l2_bound(img.shape)
    assert err <= bound
    assert bound == pytest.approx(np.sqrt(img.size) / 510.0)


def test_float_out_of_range_rejected(tmp_path):
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        write_ppm(np.full((2, 2, 3), 1.5, dtype=np.float32), tmp_path / "x.ppm")


def test_shape_validated(tmp_path):
    with pytest.raises(ValueError, match=r"\(H, W, 3\)"):
        write_ppm(np.zeros((2, 2), dtype=np.uint8), tmp_path / "x.ppm")


def test_header_comments_and_whitespace(tmp_path):
    pixels = bytes(range(12))
    raw = b"P6\n# a comment line\n2 2\n# another\n255\n" + pixels
    path = tmp_path / "c.ppm"
    path.write_bytes(raw)
    img = read_ppm(path)
    assert img.shape == (2, 2, 3)
    assert img.tobytes() == pixels


def test_non_p6_rejected(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ValueError, match="P6"):
        read_ppm(path)


def test_wrong_maxval_rejected(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
    with pytest.raises(ValueError, match="maxval"):
        read_ppm(path)


def test_truncated_pixels_rejected(tmp_path):
    path = tmp_path / "x.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(5))
    with pytest.raises(ValueError, match="pixel bytes"):
        read_ppm(path)


def test_read_image_dispatch(tmp_path, rng):
    img = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
    write_image(img, tmp_path / "a.ppm")
    np.testing.assert_array_equal(read_image(tmp_path / "a.ppm"), img)
    with pytest.raises(ValueError, match="unsupported"):
        read_image(tmp_path / "a.bmp")


def test_png_round_trip(tmp_path, rng):
    pytest.importorskip("PIL")
    img = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
    write_image(img, tmp_path / "a.png")
    np.testing.assert_array_equal(read_image(tmp_path / "a.png"), img)
