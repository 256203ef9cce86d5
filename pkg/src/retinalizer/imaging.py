"""Image and label map primitives.

Images are float arrays of shape (H, W, 3) with values in [0, 1]; label maps
are integer arrays of shape (H, W) with class id 0 reserved for background.
Files and wire payloads use 8-bit PNG: RGB for images, single-channel
indexed PNG for label maps.
"""

from __future__ import annotations

import base64
import io

import numpy as np
from PIL import Image as PILImage

from .errors import CodecError, ShapeError

MIN_SIDE = 16


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check the Image invariants and return the array as float32."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"image must be (H, W, 3), got {img.shape}")
    if img.shape[0] < MIN_SIDE or img.shape[1] < MIN_SIDE:
        raise ShapeError(f"image sides must be >= {MIN_SIDE}, got {img.shape[:2]}")
    if not np.isfinite(img).all():
        raise ShapeError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ShapeError("image values must lie in [0, 1]")
    return img.astype(np.float32, copy=False)


def validate_labelmap(labels: np.ndarray, image: np.ndarray | None = None) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"label map must be (H, W), got {labels.shape}")
    if labels.min() < 0:
        raise ShapeError("label ids must be >= 0")
    if image is not None and labels.shape != image.shape[:2]:
        raise ShapeError(
            f"label map {labels.shape} does not match image {image.shape[:2]}"
        )
    return labels.astype(np.int32, copy=False)


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a float image in [0, 1] to 8 bit (round-half-away like PIL)."""
    return (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / 255.0


def save_image_png(img: np.ndarray, path) -> None:
    PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def load_image_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def save_labelmap_png(labels: np.ndarray, path, palette_u8: np.ndarray | None = None) -> None:
    """Write a label map as single-channel indexed PNG.

    ``palette_u8`` is an optional (K, 3) uint8 array giving display colors for
    ids 0..K-1; the pixel data stays the raw class ids either way.
    """
    labels = np.asarray(labels)
    if labels.max(initial=0) > 255:
        raise ShapeError("indexed PNG supports at most 256 class ids")
    im = PILImage.fromarray(labels.astype(np.uint8), mode="P")
    flat = np.zeros((256, 3), dtype=np.uint8)
    if palette_u8 is not None:
        flat[: len(palette_u8)] = palette_u8
    im.putpalette(flat.reshape(-1).tolist())
    im.save(path, format="PNG")


def load_labelmap_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode not in ("P", "L"):
            raise ShapeError(f"label map PNG must be indexed or grayscale, got mode {im.mode}")
        return np.asarray(im).astype(np.int32)


def encode_image_b64(img: np.ndarray) -> str:
    """Image -> base64 PNG payload (lossless at the 8-bit boundary)."""
    buf = io.BytesIO()
    PILImage.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image_b64(payload: str) -> np.ndarray:
    try:
        raw = base64.b64decode(payload, validate=True)
    except (ValueError, TypeError) as exc:
        raise CodecError(f"payload is not valid base64: {exc}") from exc
    try:
        with PILImage.open(io.BytesIO(raw)) as im:
            return from_uint8(np.asarray(im.convert("RGB")))
    except OSError as exc:
        raise CodecError(f"payload is not a decodable image: {exc}") from exc


def thumbnail_b64(img: np.ndarray, max_side: int = 96) -> str:
    pil = PILImage.fromarray(to_uint8(img), mode="RGB")
    pil.thumbnail((max_side, max_side), PILImage.NEAREST)
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")
