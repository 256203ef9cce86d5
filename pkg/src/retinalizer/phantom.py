"""Procedural OCT-like phantom scans with layer and fluid annotations.

Each scan is a stack of smooth retinal bands (random low-frequency cosine
boundaries, strictly ordered top to bottom) with optional elliptical fluid
pockets clipped to the retina, rendered to a grayscale B-scan and finished
with a vendor-style pipeline (multiplicative speckle, gamma, blur, offset)
that touches the image only, never the labels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigurationError

PROFILES = ("LAYERS", "DME", "UMN", "RETOUCH", "OCTDL")

N_LAYER_CLASSES = 7
N_RETOUCH_FLUIDS = 3

# baseline per-band reflectivity, vitreous to choroid
_BAND_LEVELS = np.array([0.55, 0.28, 0.45, 0.22, 0.35, 0.55, 0.78])
_FLUID_LEVEL = 0.06
_BACKGROUND_LEVEL = 0.05
_BELOW_LEVEL = 0.12


@dataclass(frozen=True)
class VendorStyle:
    speckle_variance: float = 0.05
    gamma: float = 1.0
    blur_sigma: float = 0.7
    intensity_offset: float = 0.0

    def __post_init__(self):
        if self.speckle_variance < 0:
            raise ConfigurationError("speckle_variance must be >= 0")
        if not 0.5 <= self.gamma <= 2.0:
            raise ConfigurationError("gamma must lie in [0.5, 2.0]")


DEFAULT_STYLE = VendorStyle()

# three synthetic vendors standing in for the multi-device fluid dataset
VENDOR_STYLES = {
    "A": VendorStyle(speckle_variance=0.03, gamma=0.85, blur_sigma=0.5, intensity_offset=0.04),
    "B": VendorStyle(speckle_variance=0.12, gamma=1.30, blur_sigma=1.3, intensity_offset=-0.03),
    "C": VendorStyle(speckle_variance=0.015, gamma=1.0, blur_sigma=0.9, intensity_offset=0.10),
}

_HEALTHY_DEFAULTS = {"LAYERS": 0.0, "DME": 0.87, "UMN": 0.56, "RETOUCH": 0.5, "OCTDL": 0.16}


def derive_sample_seed(corpus_seed: int, geometry_key: str, index: int) -> int:
    """Stable per-sample seed; parallel and serial corpus builds agree."""
    digest = hashlib.blake2s(
        f"{corpus_seed}:{geometry_key}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def _cosine_curve(rng: np.random.Generator, width: int, amps: list[float]) -> np.ndarray:
    x = np.arange(width) / width
    curve = np.zeros(width)
    for amp in amps:
        freq = rng.uniform(0.5, 3.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        curve += amp * rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * freq * x + phase)
    return curve


def _layer_boundaries(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """(8, W) boundary rows b_0 < ... < b_7; band k lies in [b_k, b_{k+1})."""
    center = h * rng.uniform(0.42, 0.55) + _cosine_curve(rng, w, [0.05 * h, 0.02 * h])
    thickness = h * rng.uniform(0.30, 0.40) + _cosine_curve(rng, w, [0.015 * h])
    thickness = np.clip(thickness, 0.28 * h, 0.48 * h)
    widths = 1.0 + rng.random(N_LAYER_CLASSES)
    widths /= widths.sum()
    top = center - thickness / 2.0
    bounds = [top]
    for frac in widths:
        bounds.append(bounds[-1] + frac * thickness)
    b = np.stack(bounds)
    return np.clip(b, 1.0, h - 2.0)


def _fluid_blobs(
    rng: np.random.Generator,
    bounds: np.ndarray,
    shape: tuple[int, int],
    class_ids: list[int],
    blobs_per_class: tuple[int, int] = (1, 2),
) -> np.ndarray:
    """Axis-aligned ellipses per fluid class, clipped to the retina region."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    retina = (yy >= bounds[0][xx]) & (yy < bounds[-1][xx])
    labels = np.zeros(shape, dtype=np.int32)
    for class_id in class_ids:
        for _ in range(rng.integers(blobs_per_class[0], blobs_per_class[1] + 1)):
            cx = rng.uniform(0.15 * w, 0.85 * w)
            cy = np.interp(cx, np.arange(w), (bounds[0] + bounds[-1]) / 2.0)
            cy += rng.uniform(-0.15, 0.15) * np.interp(
                cx, np.arange(w), bounds[-1] - bounds[0]
            )
            ax = rng.uniform(0.05, 0.14) * w
            ay = rng.uniform(0.04, 0.10) * h
            ellipse = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0
            labels[ellipse & retina] = class_id
    return labels


def generate_phantom_scan(
    seed: int,
    style: VendorStyle = DEFAULT_STYLE,
    profile: str = "LAYERS",
    size: int = 64,
    healthy: bool | None = None,
    fluid_classes: int | None = None,
    return_geometry: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """One deterministic scan with its label map.

    Geometry, fluid placement and the speckle field depend only on
    ``(seed, profile, size)`` and the health flags; the vendor style rescales
    them afterwards, so two styles under the same seed share the exact same
    label map. ``return_geometry`` additionally yields the (8, W) layer
    boundary rows.
    """
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown dataset profile {profile!r}")
    if size < 32:
        raise ConfigurationError("phantom scans need size >= 32 to fit all layer bands")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF]))
    h = w = size
    bounds = _layer_boundaries(rng, h, w)
    yy, xx = np.mgrid[0:h, 0:w]

    layer_map = np.zeros((h, w), dtype=np.int32)
    for k in range(N_LAYER_CLASSES):
        band = (yy >= bounds[k][xx]) & (yy < bounds[k + 1][xx])
        layer_map[band] = k + 1

    if healthy is None:
        healthy = bool(rng.random() < _HEALTHY_DEFAULTS[profile])
    if profile == "LAYERS":
        fluid_ids: list[int] = []
    elif profile == "RETOUCH":
        if fluid_classes is None:
            fluid_classes = 0 if healthy else int(rng.integers(1, N_RETOUCH_FLUIDS + 1))
        ordered = list(rng.permutation(N_RETOUCH_FLUIDS) + 1)
        fluid_ids = sorted(ordered[:fluid_classes])
    else:
        fluid_ids = [] if healthy else [1]
    fluid_map = _fluid_blobs(rng, bounds, (h, w), fluid_ids) if fluid_ids else np.zeros(
        (h, w), dtype=np.int32
    )

    levels = np.clip(_BAND_LEVELS + rng.uniform(-0.08, 0.08, N_LAYER_CLASSES), 0.12, 0.92)
    img = np.full((h, w), _BACKGROUND_LEVEL)
    img[yy >= bounds[-1][xx]] = _BELOW_LEVEL
    for k in range(N_LAYER_CLASSES):
        img[layer_map == k + 1] = levels[k]
    if profile == "OCTDL":
        # image-only diversity: extra bright/dark streak across the scan
        streak = rng.uniform(-0.15, 0.2) * np.exp(
            -((yy - rng.uniform(0.2, 0.8) * h) ** 2) / (2 * (0.06 * h) ** 2)
        )
        img = img + streak
    img[fluid_map > 0] = _FLUID_LEVEL

    noise = rng.standard_normal((h, w))
    img = img * np.clip(1.0 + np.sqrt(style.speckle_variance) * noise, 0.0, None)
    img = np.clip(img, 0.0, 1.0) ** style.gamma
    if style.blur_sigma > 0:
        img = gaussian_filter(img, style.blur_sigma)
    img = np.clip(img + style.intensity_offset, 0.0, 1.0)

    if profile == "LAYERS":
        labels = layer_map
    elif profile == "OCTDL":
        labels = np.zeros((h, w), dtype=np.int32)
    else:
        labels = fluid_map
    image = np.repeat(img[:, :, None], 3, axis=2).astype(np.float32)
    if return_geometry:
        return image, labels.astype(np.int32), bounds
    return image, labels.astype(np.int32)


def retina_mask(bounds_or_labels: np.ndarray) -> np.ndarray:
    """Merged-retina support of a LAYERS label map (union of all layer bands)."""
    return np.asarray(bounds_or_labels) > 0
