import numpy as np
import pytest

from cumamba.imageio import ImageFormatError, decode_u8, encode_u8, read_image, write_image


def test_full_scale_value_round_trips_exactly():
    img = np.ones((2, 2, 3))
    assert np.all(decode_u8(encode_u8(img)) == 1.0)


def test_half_value_quantizes_to_128():
    img = np.full((1, 1, 3), 0.5)
    raw = encode_u8(img)
    assert np.all(raw == 128)  # round(127.5) -> 128 under round-half-even
    back = decode_u8(raw)
    assert back[0, 0, 0] == pytest.approx(128 / 255, abs=1e-9)


def test_round_trip_error_bounded_by_half_step():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 1, (32, 32, 3))
    back = decode_u8(encode_u8(img))
    assert np.max(np.abs(back - img)) <= 1.0 / 510 + 1e-12


def test_values_outside_range_clamped():
    img = np.array([[[1.5, -0.2, 0.3]]])
    raw = encode_u8(img)
    assert raw[0, 0, 0] == 255 and raw[0, 0, 1] == 0


@pytest.mark.parametrize("suffix", [".ppm", ".png"])
def test_file_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 1, (9, 13, 3)).astype(np.float32)
    path = tmp_path / f"img{suffix}"
    write_image(path, img)
    back = read_image(path)
    assert back.shape == (9, 13, 3)
    assert np.max(np.abs(back - img)) <= 1.0 / 510 + 1e-12


def test_ppm_with_comments(tmp_path):
    path = tmp_path / "c.ppm"
    payload = bytes([10, 20, 30] * 4)
    path.write_bytes(b"P6\n# a comment\n2 2\n# another\n255\n" + payload)
    img = read_image(path)
    assert img.shape == (2, 2, 3)
    assert img[0, 0, 0] == pytest.approx(10 / 255)


def test_truncated_ppm_rejected(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n4 4\n255\n\x00\x00\x00")
    with pytest.raises(ImageFormatError, match="truncated"):
        read_image(path)


def test_ascii_ppm_rejected(tmp_path):
    path = tmp_path / "a.ppm"
    path.write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ImageFormatError, match="P6"):
        read_image(path)


def test_unsupported_format(tmp_path):
    with pytest.raises(ImageFormatError, match="unsupported format"):
        read_image(tmp_path / "x.jpg")
    with pytest.raises(ImageFormatError, match="unsupported format"):
        write_image(tmp_path / "x.gif", np.zeros((2, 2, 3)))
