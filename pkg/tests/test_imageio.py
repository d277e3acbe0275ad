import numpy as np
import pytest

from ctstereo.imageio import PFMError, read_image, read_pfm, read_png, write_pfm, write_png


@pytest.mark.parametrize("shape", [(5, 7), (4, 6, 3)])
def test_pfm_round_trip(tmp_path, rng, shape):
    a = rng.random(shape).astype(np.float32)
    p = tmp_path / "a.pfm"
    write_pfm(p, a)
    assert np.array_equal(read_pfm(p), a)


def test_pfm_bit_layout(tmp_path):
    a = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32)
    p = tmp_path / "a.pfm"
    write_pfm(p, a)
    raw = p.read_bytes()
    assert raw.startswith(b"Pf\n2 2\n-1.0\n")
    body = np.frombuffer(raw[len(b"Pf\n2 2\n-1.0\n"):], "<f4")
    # bottom row first
    assert body.tolist() == [3.0, 4.0, 1.0, 2.0]


def test_pfm_big_endian(tmp_path):
    a = np.array([[1.5, -2.0]], np.float32)
    p = tmp_path / "b.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + a.astype(">f4").tobytes())
    assert read_pfm(p).tolist() == [[1.5, -2.0]]


@pytest.mark.parametrize("payload", [b"P6\n1 1\n255\n", b"PF\nxx\n", b"Pf\n2 2\n-1.0\n\x00\x00"])
def test_pfm_malformed(tmp_path, payload):
    p = tmp_path / "bad.pfm"
    p.write_bytes(payload)
    with pytest.raises(PFMError, match="bad.pfm"):
        read_pfm(p)


def test_png_round_trip(tmp_path, rng):
    a = rng.random((6, 5, 3))
    write_png(tmp_path / "a.png", a)
    assert np.abs(read_png(tmp_path / "a.png") - a).max() <= 0.5 / 255 + 1e-12
    g = rng.random((6, 5))
    write_png(tmp_path / "g.png", g, bit_depth=16)
    assert np.abs(read_image(tmp_path / "g.png") - g).max() <= 0.5 / 65535 + 1e-12
