import numpy as np
import pytest

from toontex import imgio
from toontex.errors import ContractError


def test_ppm_roundtrip(tmp_path, rng):
    img = rng.random((17, 23, 3))
    path = tmp_path / "x.ppm"
    imgio.write_ppm(path, img)
    back = imgio.read_ppm(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12


def test_ppm_quantization_round_half_up(tmp_path):
    # 0.5/255 exactly at a quantization boundary rounds up
    vals = np.array([[[0.0, 0.5 / 255, 1.0]]])
    path = tmp_path / "q.ppm"
    imgio.write_ppm(path, vals)
    raw = path.read_bytes()
    assert raw.endswith(bytes([0, 1, 255]))


def test_ppm_deterministic_bytes(tmp_path, rng):
    img = rng.random((9, 9, 3))
    p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
    imgio.write_ppm(p1, img)
    imgio.write_ppm(p2, img)
    assert p1.read_bytes() == p2.read_bytes()


def test_pgm16_roundtrip(tmp_path, rng):
    img = rng.random((11, 5))
    path = tmp_path / "d.pgm"
    imgio.write_pgm16(path, img)
    back = imgio.read_pgm16(path)
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12


def test_pgm16_big_endian(tmp_path):
    path = tmp_path / "e.pgm"
    imgio.write_pgm16(path, np.array([[1.0]]))
    assert path.read_bytes().endswith(b"\xff\xff")
    imgio.write_pgm16(path, np.array([[256.5 / 65535]]))
    assert path.read_bytes().endswith(b"\x01\x01")


def test_header_comments_ignored(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes([0, 0, 0, 255, 255, 255]))
    img = imgio.read_ppm(path)
    assert img.shape == (1, 2, 3)
    assert img[0, 1, 0] == 1.0


def test_bad_inputs(tmp_path):
    with pytest.raises(ContractError):
        imgio.write_ppm(tmp_path / "bad.ppm", np.zeros((3, 3)))
    with pytest.raises(ContractError):
        imgio.write_ppm(tmp_path / "bad.ppm", np.full((2, 2, 3), np.nan))
    p = tmp_path / "trunc.ppm"
    p.write_bytes(b"P6\n2")
    with pytest.raises(ContractError):
        imgio.read_ppm(p)
