import numpy as np
import pytest

from flatsplat.images import (
    ImageFormatError,
    hflip,
    image_load,
    image_png_bytes,
    image_save,
)


def test_all_black_png(tmp_path):
    path = tmp_path / "black.png"
    image_save(np.zeros((8, 6, 3)), path)
    assert np.array_equal(image_load(path), np.zeros((8, 6, 3)))


def test_all_white_ppm(tmp_path):
    path = tmp_path / "white.ppm"
    image_save(np.ones((5, 7, 3)), path)
    assert np.array_equal(image_load(path), np.ones((5, 7, 3)))


@pytest.mark.parametrize("suffix", [".png", ".ppm"])
def test_save_load_pixel_identical_corpus(tmp_path, suffix):
    rng = np.random.default_rng(1)
    for i in range(4):
        img = rng.integers(0, 256, (11 + i, 9 + 2 * i, 3)).astype(np.float64) / 255.0
        path = tmp_path / f"img{i}{suffix}"
        image_save(img, path)
        assert np.array_equal(image_load(path), img)


def test_quantization_rounds_and_clamps(tmp_path):
    img = np.array([[[0.0012, 0.9999, 1.7], [-0.3, 0.5, 0.002]]])
    path = tmp_path / "q.png"
    image_save(img, path)
    out = image_load(path)
    expect = np.clip(np.rint(img * 255), 0, 255) / 255.0
    assert np.array_equal(out, expect)


def test_hflip_single_pixel():
    img = np.zeros((4, 9, 3))
    img[0, 0] = 1.0
    out = hflip(img)
    assert out[0, 8, 0] == 1.0
    assert out[0, 0, 0] == 0.0


def test_hflip_symmetric_image_fixed_point():
    img = np.zeros((3, 5, 3))
    img[:, 2] = 0.7
    img[1, 0] = img[1, 4] = 0.3
    assert np.array_equal(hflip(img), img)


def test_hflip_involution():
    rng = np.random.default_rng(2)
    img = rng.uniform(0, 1, (13, 17, 3))
    assert np.array_equal(hflip(hflip(img)), img)


def test_rejects_non_rgb_png(tmp_path):
    from PIL import Image

    path = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8), mode="L").save(path)
    with pytest.raises(ImageFormatError, match="RGB"):
        image_load(path)


def test_rejects_16bit_ppm(tmp_path):
    path = tmp_path / "deep.ppm"
    path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(ImageFormatError, match="maxval"):
        image_load(path)


def test_ppm_with_comments(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# a comment\n2 1\n# another\n255\n" + bytes([255, 0, 0, 0, 255, 0]))
    img = image_load(path)
    assert img.shape == (1, 2, 3)
    assert np.array_equal(img[0, 0], [1, 0, 0])
    assert np.array_equal(img[0, 1], [0, 1, 0])


def test_png_bytes_deterministic():
    rng = np.random.default_rng(3)
    img = rng.uniform(0, 1, (16, 16, 3))
    assert image_png_bytes(img) == image_png_bytes(img.copy())
