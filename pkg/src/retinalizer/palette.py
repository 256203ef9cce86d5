"""Class/color coding: palette extraction, nearest-color decoding, recoloring.

All colors live on the 8-bit grid (k/255) so that PNG round trips never
fragment a palette. Decoding assigns each predicted pixel the palette color
with the lowest euclidean distance, ties resolving to the lowest palette
index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import AugmentationError, CodecError, ContextError

# minimum pairwise L2 distance between class colors, in [0,1] scale
DEFAULT_DELTA_MIN = 80.0 / 255.0

ContextPair = tuple[np.ndarray, np.ndarray]


def quantize(colors: np.ndarray) -> np.ndarray:
    """Snap float colors in [0,1] to the 8-bit grid."""
    u8 = (np.clip(np.asarray(colors, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    return u8.astype(np.float32) / 255.0


@dataclass(frozen=True)
class Palette:
    """Ordered (class id, RGB color) entries; colors are floats on the 8-bit grid."""

    ids: tuple[int, ...]
    colors: np.ndarray  # (K, 3) float32

    def __post_init__(self):
        object.__setattr__(self, "colors", quantize(self.colors).reshape(-1, 3))
        if len(self.ids) != len(self.colors):
            raise CodecError("palette ids and colors differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise CodecError("palette class ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    def color_of(self, class_id: int) -> np.ndarray:
        try:
            return self.colors[self.ids.index(class_id)]
        except ValueError:
            raise CodecError(f"class id {class_id} has no palette entry") from None

    def min_pairwise_distance(self) -> float:
        if len(self) < 2:
            return float("inf")
        d = self.colors[:, None, :] - self.colors[None, :, :]
        dist = np.sqrt((d * d).sum(-1))
        dist[np.diag_indices(len(self))] = np.inf
        return float(dist.min())

    def validate(self, delta_min: float = DEFAULT_DELTA_MIN) -> None:
        if self.min_pairwise_distance() < delta_min:
            raise CodecError(
                f"palette colors closer than delta_min={delta_min:.4f} "
                f"(min distance {self.min_pairwise_distance():.4f})"
            )

    def to_jsonable(self) -> list[list[int]]:
        u8 = (self.colors * 255.0 + 0.5).astype(int)
        return [[int(i), int(r), int(g), int(b)] for i, (r, g, b) in zip(self.ids, u8)]

    @classmethod
    def from_jsonable(cls, entries: Sequence[Sequence[int]]) -> "Palette":
        ids = tuple(int(e[0]) for e in entries)
        colors = np.asarray([[e[1], e[2], e[3]] for e in entries], dtype=np.float32) / 255.0
        return cls(ids=ids, colors=colors)


@dataclass
class DecodedPrediction:
    labels: np.ndarray  # (H, W) int32 class ids from the palette
    palette_used: Palette
    snap_distance_mean: float


def _packed_u8(img: np.ndarray) -> np.ndarray:
    u8 = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint32)
    return (u8[..., 0] << 16) | (u8[..., 1] << 8) | u8[..., 2]


def extract_context_colors(
    context: Sequence[ContextPair], max_classes: int = 16
) -> Palette:
    """Unique 8-bit colors of the context output images, by first occurrence.

    Order is row-major within an image, pair order across the context. The
    resulting palette numbers classes 0..K-1 in that order. More than
    ``max_classes`` unique colors signals a non-semantic context.
    """
    if not context:
        raise ContextError("context set is empty")
    packed = np.concatenate([_packed_u8(out).reshape(-1) for _, out in context])
    _, first_idx = np.unique(packed, return_index=True)
    ordered = packed[np.sort(first_idx)]
    if len(ordered) > max_classes:
        raise ContextError(
            f"context outputs contain {len(ordered)} unique colors "
            f"(max {max_classes}); not a semantic context"
        )
    colors = np.stack(
        [(ordered >> 16) & 0xFF, (ordered >> 8) & 0xFF, ordered & 0xFF], axis=-1
    ).astype(np.float32) / 255.0
    return Palette(ids=tuple(range(len(ordered))), colors=colors)


def decode_to_classes(pred: np.ndarray, palette: Palette) -> DecodedPrediction:
    """Snap every pixel to its nearest palette color (argmin of euclidean distance)."""
    if len(palette) == 0:
        raise ContextError("cannot decode with an empty palette")
    h, w = pred.shape[:2]
    flat = pred.reshape(-1, 3).astype(np.float64)
    idx = kernels.nearest_color_indices(flat, palette.colors.astype(np.float64))
    ids = np.asarray(palette.ids, dtype=np.int32)[idx].reshape(h, w)
    snapped = palette.colors.astype(np.float64)[idx]
    snap_mean = float(np.sqrt(((flat - snapped) ** 2).sum(-1)).mean())
    return DecodedPrediction(labels=ids, palette_used=palette, snap_distance_mean=snap_mean)


def encode_labels(labels: np.ndarray, palette: Palette) -> np.ndarray:
    """Pixelwise class id -> palette color substitution."""
    labels = np.asarray(labels)
    present = np.unique(labels)
    missing = [int(i) for i in present if int(i) not in palette.ids]
    if missing:
        raise CodecError(f"label ids {missing} have no palette entry")
    lut = np.zeros((int(max(palette.ids)) + 1, 3), dtype=np.float32)
    for class_id, color in zip(palette.ids, palette.colors):
        lut[class_id] = color
    return lut[labels]


def draw_random_colors(
    count: int,
    rng: np.random.Generator,
    delta_min: float = DEFAULT_DELTA_MIN,
    max_tries: int = 200,
) -> np.ndarray:
    """Draw ``count`` colors uniformly from the 8-bit RGB cube, pairwise >= delta_min apart."""
    chosen: list[np.ndarray] = []
    for _ in range(count):
        for _ in range(max_tries):
            cand = rng.integers(0, 256, size=3).astype(np.float32) / 255.0
            if all(np.linalg.norm(cand - c) >= delta_min for c in chosen):
                chosen.append(cand)
                break
        else:
            raise AugmentationError(
                f"could not draw {count} colors with pairwise distance >= {delta_min:.4f}"
            )
    return np.stack(chosen) if chosen else np.zeros((0, 3), dtype=np.float32)


def substitute_colors(img: np.ndarray, old: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Replace exact occurrences (after 8-bit quantization) of each old color."""
    packed = _packed_u8(img)
    out = img.astype(np.float32, copy=True)
    old_packed = _packed_u8(old.reshape(-1, 1, 3))[:, 0]
    new_q = quantize(new)
    for code, color in zip(old_packed, new_q):
        out[packed == code] = color
    return out


def random_recolor(
    context: Sequence[ContextPair],
    target: np.ndarray,
    palette: Palette,
    rng: np.random.Generator,
    delta_min: float = DEFAULT_DELTA_MIN,
) -> tuple[list[ContextPair], np.ndarray, Palette]:
    """Coherently substitute fresh random class colors in context outputs and target.

    Context inputs are scans and carry no class colors, so they pass through
    unchanged. The class structure is preserved: decoding with the returned
    palette yields the same label maps as before.
    """
    if len(palette) == 0:
        return [tuple(p) for p in context], target, palette
    new_colors = draw_random_colors(len(palette), rng, delta_min=delta_min)
    new_palette = Palette(ids=palette.ids, colors=new_colors)
    new_context = [
        (inp, substitute_colors(out, palette.colors, new_colors)) for inp, out in context
    ]
    new_target = substitute_colors(target, palette.colors, new_colors)
    return new_context, new_target, new_palette
