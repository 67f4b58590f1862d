import numpy as np
import pytest
from PIL import Image

from cytoseg.imagecore import (Histogram, ImageReadError, UnsupportedImageError, compute_histogram,
                               load_grayscale, load_labels, load_mask, normalize, save_image, save_mask)


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (20, 30), dtype=np.uint8)
    save_image(img, tmp_path / "a.png")
    np.testing.assert_array_equal(load_grayscale(tmp_path / "a.png"), img)


def test_pgm_read(tmp_path, rng):
    img = rng.integers(0, 256, (7, 9), dtype=np.uint8)
    Image.fromarray(img).save(tmp_path / "a.pgm")
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5")
    np.testing.assert_array_equal(load_grayscale(tmp_path / "a.pgm"), img)


def test_color_reduced_to_luma(tmp_path):
    rgb = np.zeros((2, 2, 3), np.uint8)
    rgb[0, 0] = (255, 0, 0)
    rgb[1, 1] = (10, 200, 30)
    Image.fromarray(rgb).save(tmp_path / "c.png")
    out = load_grayscale(tmp_path / "c.png")
    assert out[0, 0] == round(0.299 * 255)
    assert out[1, 1] == round(0.299 * 10 + 0.587 * 200 + 0.114 * 30)


def test_missing_and_unsupported(tmp_path):
    with pytest.raises(ImageReadError):
        load_grayscale(tmp_path / "nope.png")
    (tmp_path / "junk.png").write_bytes(b"not an image")
    with pytest.raises(ImageReadError):
        load_grayscale(tmp_path / "junk.png")
    Image.fromarray(np.zeros((3, 3), np.uint8)).save(tmp_path / "a.tif")
    with pytest.raises(UnsupportedImageError):
        load_grayscale(tmp_path / "a.tif")
    Image.fromarray(np.zeros((3, 3), np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(UnsupportedImageError):
        load_grayscale(tmp_path / "deep.png")


def test_mask_encoding(tmp_path):
    m = np.zeros((4, 5), bool)
    m[1:3, 2:4] = True
    save_mask(m, tmp_path / "m.png")
    raw = np.asarray(Image.open(tmp_path / "m.png"))
    assert raw.dtype == np.uint8 and set(np.unique(raw)) == {0, 255}
    np.testing.assert_array_equal(load_mask(tmp_path / "m.png"), m)


def test_label_map_is_16_bit(tmp_path):
    labels = np.zeros((4, 4), np.int32)
    labels[0, 0], labels[3, 3] = 1, 300
    save_mask(labels, tmp_path / "l.png")
    assert Image.open(tmp_path / "l.png").mode.startswith("I")
    np.testing.assert_array_equal(load_labels(tmp_path / "l.png"), labels)


def test_histogram_and_normalize():
    img = np.array([[0, 1, 1], [255, 255, 255]], np.uint8)
    h = compute_histogram(img)
    assert isinstance(h, Histogram) and h.l_max == 255 and h.total == 6
    assert h.counts[0] == 1 and h.counts[1] == 2 and h.counts[255] == 3
    p = normalize(h)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_histogram_roi():
    img = np.array([[0, 1], [2, 3]], np.uint8)
    roi = np.array([[True, False], [False, True]])
    h = compute_histogram(img, roi)
    assert h.total == 2 and h.counts[0] == 1 and h.counts[3] == 1
    with pytest.raises(ValueError):
        compute_histogram(img, np.zeros((2, 2), bool))
    with pytest.raises(ValueError):
        compute_histogram(img, np.ones((3, 3), bool))


@pytest.mark.parametrize("bad", [np.zeros((2, 2, 2)), np.array([[256]]), np.array([[-1]]),
                                 np.array([[0.5]]), np.zeros((0, 3)), np.ones((2, 2), bool)])
def test_rejects_invalid_gray(bad):
    with pytest.raises(ValueError):
        compute_histogram(bad)


def test_pgm_examples(tmp_path):
    (tmp_path / "z.pgm").write_bytes(b"P5\n3 3\n255\n" + bytes(9))
    np.testing.assert_array_equal(load_grayscale(tmp_path / "z.pgm"), np.zeros((3, 3)))
    (tmp_path / "r.pgm").write_bytes(b"P5\n3 3\n255\n" + bytes(range(9)))
    np.testing.assert_array_equal(load_grayscale(tmp_path / "r.pgm"), np.arange(9).reshape(3, 3))


def test_red_pixel_luma(tmp_path):
    Image.fromarray(np.array([[[255, 0, 0]]], np.uint8)).save(tmp_path / "r.png")
    assert load_grayscale(tmp_path / "r.png")[0, 0] == 76


def test_mask_round_trips(tmp_path, rng):
    m = rng.random((16, 16)) < 0.5
    save_mask(m, tmp_path / "m.png")
    np.testing.assert_array_equal(load_mask(tmp_path / "m.png"), m)
    save_mask(np.zeros((5, 5), bool), tmp_path / "e.png")
    assert not np.asarray(Image.open(tmp_path / "e.png")).any()
    labels = np.zeros((6, 6), np.int32)
    labels[0, :2], labels[2, 2], labels[5, 5] = 1, 2, 3
    save_mask(labels, tmp_path / "l.png")
    assert set(np.unique(np.asarray(Image.open(tmp_path / "l.png")))) == {0, 1, 2, 3}


def test_histogram_examples(rng):
    h = compute_histogram(np.full((4, 4), 7, np.uint8))
    assert h.counts[7] == 16 and h.total == 16
    all_levels = compute_histogram(np.arange(256, dtype=np.uint8).reshape(16, 16))
    assert np.all(all_levels.counts == 1)
    img = rng.integers(0, 256, (32, 32), dtype=np.uint8)
    roi = rng.random((32, 32)) < 0.4
    tally = np.zeros(256, int)
    for y in range(32):
        for x in range(32):
            if roi[y, x]:
                tally[img[y, x]] += 1
    np.testing.assert_array_equal(compute_histogram(img, roi).counts, tally)


def test_normalize_examples():
    counts = np.zeros(256, np.int64)
    counts[[0, 255]] = 1
    p = normalize(Histogram(counts))
    assert p[0] == p[255] == 0.5
    np.testing.assert_array_equal(normalize(Histogram(np.full(256, 3))), np.full(256, 1 / 256))
    with pytest.raises(ValueError):
        normalize(Histogram(np.zeros(256, np.int64)))
