"""PNG/base64 round trips and array validation."""

from __future__ import annotations

import numpy as np
import pytest

from retinalizer.errors import ShapeError
from retinalizer.imaging import (
    decode_image_b64,
    encode_image_b64,
    from_uint8,
    load_image_png,
    load_labelmap_png,
    save_image_png,
    save_labelmap_png,
    thumbnail_b64,
    to_uint8,
    validate_image,
    validate_labelmap,
)


def _grid_image(rng, h=24, w=24):
    """Random image whose values sit exactly on the 8-bit grid."""
    return from_uint8(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def test_validate_image_accepts_and_casts():
    img = np.zeros((16, 16, 3), np.float64)
    out = validate_image(img)
    assert out.dtype == np.float32


@pytest.mark.parametrize(
    "bad",
    [
        np.zeros((16, 16), np.float32),          # missing channel axis
        np.zeros((8, 16, 3), np.float32),        # side below minimum
        np.full((16, 16, 3), 2.0, np.float32),   # out of range
        np.full((16, 16, 3), np.nan, np.float32),
    ],
)
def test_validate_image_rejects(bad):
    with pytest.raises(ShapeError):
        validate_image(bad)


def test_validate_labelmap_shape_checks():
    img = np.zeros((16, 16, 3), np.float32)
    labels = np.zeros((16, 16), np.int64)
    assert validate_labelmap(labels, img).dtype == np.int32
    with pytest.raises(ShapeError):
        validate_labelmap(np.zeros((8, 16), np.int32), img)
    with pytest.raises(ShapeError):
        validate_labelmap(np.full((16, 16), -1, np.int32))
    with pytest.raises(ShapeError):
        validate_labelmap(np.zeros((16, 16, 3), np.int32))


def test_uint8_round_trip_is_exact_on_grid():
    rng = np.random.default_rng(0)
    img = _grid_image(rng)
    assert np.array_equal(from_uint8(to_uint8(img)), img)


def test_png_round_trip_image(tmp_path):
    rng = np.random.default_rng(1)
    img = _grid_image(rng)
    path = tmp_path / "img.png"
    save_image_png(img, path)
    assert np.array_equal(load_image_png(path), img)


def test_png_round_trip_labelmap(tmp_path):
    rng = np.random.default_rng(2)
    labels = rng.integers(0, 9, size=(32, 20)).astype(np.int32)
    path = tmp_path / "labels.png"
    save_labelmap_png(labels, path)
    assert np.array_equal(load_labelmap_png(path), labels)


def test_labelmap_png_rejects_wide_ids(tmp_path):
    with pytest.raises(ShapeError):
        save_labelmap_png(np.full((16, 16), 300, np.int32), tmp_path / "x.png")


def test_b64_round_trip_lossless():
    rng = np.random.default_rng(3)
    img = _grid_image(rng)
    assert np.array_equal(decode_image_b64(encode_image_b64(img)), img)


def test_b64_rejects_garbage():
    from retinalizer.errors import CodecError
    import base64

    with pytest.raises(CodecError, match="base64"):
        decode_image_b64("!!!not base64!!!")
    with pytest.raises(CodecError, match="decodable image"):
        decode_image_b64(base64.b64encode(b"these bytes are no png").decode())


def test_thumbnail_shrinks_to_max_side():
    rng = np.random.default_rng(4)
    img = _grid_image(rng, h=128, w=64)
    thumb = decode_image_b64(thumbnail_b64(img, max_side=32))
    assert max(thumb.shape[:2]) <= 32
    assert thumb.shape[2] == 3
