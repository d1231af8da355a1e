import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from advstego.errors import BoundsError, FormatError, TruncatedFileError, UnsupportedFormatError
from advstego.image import (GrayImage, PixelFlip, apply_flips, decode_pgm, encode_pgm, load_pgm,
                            save_pgm, wet_mask)

images = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda s: arrays(np.uint8, s)).map(GrayImage)


def test_load_p5_bytes(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 7]))
    img = load_pgm(path)
    assert img == GrayImage.from_values(2, 2, [0, 128, 255, 7])
    assert (img.width, img.height) == (2, 2)


def test_header_comments_accepted():
    img = decode_pgm(b"P5\n# made by hand\n3 1 # trailing\n255\n\x01\x02\x03")
    assert img.pixels.tolist() == [[1, 2, 3]]


def test_ascii_pgm_rejected(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n2 1\n255\n0 1\n")
    with pytest.raises(FormatError):
        load_pgm(path)


def test_16bit_rejected():
    with pytest.raises(UnsupportedFormatError):
        decode_pgm(b"P5\n1 1\n65535\n\x00\x01")


def test_truncated_raster():
    with pytest.raises(TruncatedFileError):
        decode_pgm(b"P5\n4 4\n255\n" + bytes(10))


def test_single_pixel_file(tmp_path):
    path = tmp_path / "one.pgm"
    save_pgm(GrayImage.from_values(1, 1, [255]), path)
    data = path.read_bytes()
    assert data == b"P5\n1 1\n255\n\xff"
    assert data[-1] == 0xFF


def test_empty_image_rejected():
    with pytest.raises(ValueError):
        GrayImage(np.zeros((0, 0), dtype=np.uint8))
    with pytest.raises(ValueError):
        GrayImage.from_values(0, 0, [])


def test_out_of_range_rejected():
    with pytest.raises(ValueError):
        GrayImage(np.array([[256]]))
    with pytest.raises(ValueError):
        GrayImage(np.array([[-1]]))


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        save_pgm(GrayImage.from_values(1, 1, [3]), tmp_path / "missing" / "x.pgm")


@settings(max_examples=60, deadline=None)
@given(images)
def test_pgm_round_trip(img):
    assert decode_pgm(encode_pgm(img)) == img


def test_pgm_round_trip_on_disk(tmp_path, rng):
    img = GrayImage(rng.integers(0, 256, (13, 7)))
    save_pgm(img, tmp_path / "r.pgm")
    assert load_pgm(tmp_path / "r.pgm") == img


def test_images_are_immutable():
    img = GrayImage.from_values(2, 1, [1, 2])
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 9


def test_apply_flip_plus_one():
    img = GrayImage.from_values(2, 1, [100, 5])
    out = apply_flips(img, [PixelFlip(0, 0, +1)])
    assert out.pixels.tolist() == [[101, 5]]
    assert img.pixels.tolist() == [[100, 5]]


def test_apply_no_flips_is_identity():
    img = GrayImage.from_values(2, 1, [100, 5])
    assert apply_flips(img, []) == img


def test_apply_flip_out_of_range():
    img = GrayImage.from_values(1, 1, [255])
    with pytest.raises(BoundsError):
        apply_flips(img, [PixelFlip(0, 0, +1)])


def test_apply_flip_duplicate_position():
    img = GrayImage.from_values(2, 1, [100, 5])
    with pytest.raises(ValueError):
        apply_flips(img, [PixelFlip(0, 1, 1), PixelFlip(0, 1, -1)])


@settings(max_examples=60, deadline=None)
@given(images, st.data())
def test_apply_flips_l1_distance(img, data):
    arr = img.pixels.astype(int)
    cells = [(r, c) for r in range(img.height) for c in range(img.width)]
    chosen = data.draw(st.lists(st.sampled_from(cells), unique=True, max_size=len(cells)))
    flips = []
    for r, c in chosen:
        options = [d for d in (1, -1) if 0 <= arr[r, c] + d <= 255]
        flips.append(PixelFlip(r, c, data.draw(st.sampled_from(options))))
    out = apply_flips(img, flips)
    diff = out.pixels.astype(int) - arr
    assert np.abs(diff).sum() == len(flips)
    for f in flips:
        assert diff[f.row, f.col] == f.direction


def test_wet_mask_examples():
    img = GrayImage.from_values(4, 1, [0, 128, 255, 7])
    assert wet_mask(img).ravel().tolist() == [True, False, True, False]
    assert not wet_mask(GrayImage(np.full((3, 3), 128))).any()
    assert wet_mask(GrayImage(np.zeros((3, 3)))).all()


@settings(max_examples=60, deadline=None)
@given(images)
def test_wet_mask_matches_blocked_direction(img):
    v = img.pixels.astype(int)
    blocked = (v + 1 > 255) | (v - 1 < 0)
    assert np.array_equal(wet_mask(img), blocked)
