"""Benchmark the compiled kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5]

Reports wall time per call for both backends and verifies the outputs agree
bit-for-bit (the fallback is the reference semantics; the extension must be
an exact drop-in).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from retinalizer.kernels import _reference

try:
    from retinalizer.kernels import _native
except ImportError:
    _native = None


def _time(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_decode(size: int, colors: int, repeat: int, rng) -> None:
    pixels = rng.random((size * size, 3)).astype(np.float32)
    palette = rng.random((colors, 3)).astype(np.float32)
    ref = _reference.nearest_color_indices(pixels, palette)
    t_ref = _time(_reference.nearest_color_indices, pixels, palette, repeat=repeat)
    line = f"decode {size}x{size} px, {colors} colors: fallback {t_ref * 1e3:8.2f} ms"
    if _native is not None:
        nat = _native.nearest_color_indices(pixels, palette)
        assert np.array_equal(ref, nat), "backends disagree on nearest_color_indices"
        t_nat = _time(_native.nearest_color_indices, pixels, palette, repeat=repeat)
        line += f" | native {t_nat * 1e3:8.2f} ms | speedup {t_ref / t_nat:5.1f}x"
    print(line)


def _band_mask(size: int, rng) -> np.ndarray:
    """Curved horizontal band, shaped like the anatomical class masks the
    skeleton task actually thins."""
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    center = size * (0.5 + 0.12 * np.sin(2 * np.pi * xs / size + rng.uniform(0, 6)))
    half = size * 0.12
    return ((ys > center - half) & (ys < center + half)).astype(np.uint8)


def bench_thin(size: int, repeat: int, rng) -> None:
    cases = {
        "band ": _band_mask(size, rng),
        "noise": (rng.random((size, size)) < 0.6).astype(np.uint8),
    }
    for name, mask in cases.items():
        ref = _reference.thin_zhang_suen(mask)
        t_ref = _time(_reference.thin_zhang_suen, mask, repeat=repeat)
        line = f"thin   {size}x{size} {name} mask:     fallback {t_ref * 1e3:8.2f} ms"
        if _native is not None:
            nat = _native.thin_zhang_suen(mask)
            assert np.array_equal(ref, nat), "backends disagree on thin_zhang_suen"
            t_nat = _time(_native.thin_zhang_suen, mask, repeat=repeat)
            line += f" | native {t_nat * 1e3:8.2f} ms | speedup {t_ref / t_nat:5.1f}x"
        print(line)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    parser.add_argument("--colors", type=int, nargs="+", default=[4, 16])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    if _native is None:
        print("note: compiled extension not available; fallback only")
    for size in args.sizes:
        for colors in args.colors:
            bench_decode(size, colors, args.repeat, rng)
    for size in args.sizes:
        bench_thin(size, args.repeat, rng)


if __name__ == "__main__":
    main()
