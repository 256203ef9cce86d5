/** Pure pixel operations behind the canvas views. */

/** Blend an overlay onto a base image: out = (1-opacity)*base + opacity*over.
 * Both buffers are RGBA of equal length; alpha is forced opaque. */
export function composeOverlay(
  base: Uint8ClampedArray,
  over: Uint8ClampedArray,
  opacity: number,
): Uint8ClampedArray<ArrayBuffer> {
  if (base.length !== over.length) {
    throw new Error(`buffer sizes differ: ${base.length} vs ${over.length}`);
  }
  const o = Math.min(1, Math.max(0, opacity));
  const out = new Uint8ClampedArray(base.length);
  for (let p = 0; p < base.length; p += 4) {
    out[p] = (1 - o) * base[p] + o * over[p];
    out[p + 1] = (1 - o) * base[p + 1] + o * over[p + 1];
    out[p + 2] = (1 - o) * base[p + 2] + o * over[p + 2];
    out[p + 3] = 255;
  }
  return out;
}

export function buffersEqual(a: Uint8ClampedArray, b: Uint8ClampedArray): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}
