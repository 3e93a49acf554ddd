import numpy as np
import pytest
from hypothesis import given

from retinet import io
from retinet.errors import DomainError
from strategies import images


@given(images(channels=3, hi=50.0))
def test_pfm_round_trip_rgb(tmp_path_factory, img):
    img = img.astype(np.float32)
    p = tmp_path_factory.mktemp("pfm") / "x.pfm"
    io.write_pfm(p, img)
    back = io.read_pfm(p)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, img)


def test_pfm_single_channel(tmp_path):
    img = np.arange(12, dtype=np.float32).reshape(3, 4, 1)
    io.write_pfm(tmp_path / "g.pfm", img)
    np.testing.assert_array_equal(io.read_pfm(tmp_path / "g.pfm"), img)


def test_pfm_layout_is_bottom_up_little_endian(tmp_path):
    img = np.array([[[1.0]], [[2.0]]], dtype=np.float32)  # two rows
    io.write_pfm(tmp_path / "o.pfm", img)
    raw = (tmp_path / "o.pfm").read_bytes()
    assert raw.startswith(b"Pf\n1 2\n-1.0\n")
    body = np.frombuffer(raw[len(b"Pf\n1 2\n-1.0\n"):], "<f4")
    np.testing.assert_array_equal(body, [2.0, 1.0])


def test_pfm_big_endian_is_read(tmp_path):
    body = np.array([3.0, 4.0], dtype=">f4").tobytes()
    (tmp_path / "b.pfm").write_bytes(b"Pf\n2 1\n1.0\n" + body)
    np.testing.assert_array_equal(io.read_pfm(tmp_path / "b.pfm")[0, :, 0], [3.0, 4.0])


def test_pfm_rejects_nan_on_read(tmp_path):
    body = np.array([np.nan], dtype="<f4").tobytes()
    (tmp_path / "n.pfm").write_bytes(b"Pf\n1 1\n-1.0\n" + body)
    with pytest.raises(DomainError):
        io.read_pfm(tmp_path / "n.pfm")
    assert np.isnan(io.read_pfm(tmp_path / "n.pfm", validate=False)[0, 0, 0])


def test_pfm_rejects_negative_on_write(tmp_path):
    with pytest.raises(DomainError):
        io.write_pfm(tmp_path / "x.pfm", -np.ones((2, 2, 3)))


def test_not_a_pfm(tmp_path):
    (tmp_path / "x.pfm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(DomainError):
        io.read_pfm(tmp_path / "x.pfm")


def test_png_gamma_round_trip(tmp_path):
    lin = np.linspace(0, 1, 12).reshape(2, 2, 3)
    io.write_png(tmp_path / "p.png", lin, gamma=2.2)
    back = io.read_png(tmp_path / "p.png", gamma=2.2)
    np.testing.assert_allclose(back, lin, atol=0.02)


def test_png_alpha_is_kept_last(tmp_path):
    from PIL import Image
    rgba = np.zeros((2, 2, 4), np.uint8)
    rgba[..., 3] = [[0, 255], [255, 255]]
    Image.fromarray(rgba).save(tmp_path / "a.png")
    img = io.read_png(tmp_path / "a.png", gamma=2.2)
    assert img.shape == (2, 2, 4)
    assert img[0, 0, 3] == 0 and img[0, 1, 3] == 1


def test_read_image_dispatch(tmp_path):
    with pytest.raises(DomainError):
        io.read_image(tmp_path / "x.exr")
