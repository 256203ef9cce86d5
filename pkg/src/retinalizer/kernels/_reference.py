"""Pure NumPy implementations of the hot per-pixel kernels.

These are the fallback backend and the semantic reference: the compiled
module in ``_native.pyx`` must produce bit-identical results (same float64
accumulation order, same tie rule, same parallel-deletion schedule).
"""

from __future__ import annotations

import numpy as np


def nearest_color_indices(pixels: np.ndarray, colors: np.ndarray) -> np.ndarray:
    """Index of the nearest palette color for every pixel.

    ``pixels``: (N, 3) float64, ``colors``: (K, 3) float64. Distance is the
    euclidean norm; ties resolve to the lowest palette index.
    """
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    colors = np.ascontiguousarray(colors, dtype=np.float64)
    diff = pixels[:, None, :] - colors[None, :, :]
    # accumulate channel-by-channel so the float op order matches _native
    dist = diff[:, :, 0] * diff[:, :, 0]
    dist += diff[:, :, 1] * diff[:, :, 1]
    dist += diff[:, :, 2] * diff[:, :, 2]
    return dist.argmin(axis=1).astype(np.int64)


_RING_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def thin_zhang_suen(mask: np.ndarray, max_iter: int = 10_000) -> np.ndarray:
    """Morphological thinning (two-subpass parallel deletion) of a binary mask.

    Returns a uint8 array with the 1-pixel-wide medial skeleton. Pixels
    outside the image count as background.
    """
    img = (np.asarray(mask) > 0).astype(np.uint8)
    for _ in range(max_iter):
        changed = False
        for phase in (0, 1):
            padded = np.pad(img, 1)
            ring = [
                padded[1 + dy : 1 + dy + img.shape[0], 1 + dx : 1 + dx + img.shape[1]]
                for dy, dx in _RING_OFFSETS
            ]
            p2, _, p4, _, p6, _, p8, _ = ring
            neigh = np.zeros(img.shape, dtype=np.int16)
            for r in ring:
                neigh += r
            trans = np.zeros(img.shape, dtype=np.int16)
            for i in range(8):
                trans += (ring[i] == 0) & (ring[(i + 1) % 8] == 1)
            cond = (img == 1) & (neigh >= 2) & (neigh <= 6) & (trans == 1)
            if phase == 0:
                cond &= (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond &= (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            if cond.any():
                img[cond] = 0
                changed = True
        if not changed:
            break
    return img
