/** Class-color bookkeeping for the composer: extraction, recoloring, and the
 * minimum-separation rule the decoder relies on. */

import type { PaletteEntry } from "./api.js";

/** 8-bit RGB triple. */
export type Rgb = [number, number, number];

/** Minimum pairwise L2 color distance (in [0,1] scale) a palette must keep
 * for nearest-color decoding to stay well-separated. */
export const DELTA_MIN = 80 / 255;

export function colorDistance(a: Rgb, b: Rgb): number {
  const dr = (a[0] - b[0]) / 255;
  const dg = (a[1] - b[1]) / 255;
  const db = (a[2] - b[2]) / 255;
  return Math.sqrt(dr * dr + dg * dg + db * db);
}

export function colorKey(c: Rgb): string {
  return `${c[0]},${c[1]},${c[2]}`;
}

export function rgbToHex(c: Rgb): string {
  return "#" + c.map((v) => v.toString(16).padStart(2, "0")).join("");
}

export function hexToRgb(hex: string): Rgb {
  const m = /^#?([0-9a-fA-F]{6})$/.exec(hex);
  if (!m) throw new Error(`not a #rrggbb color: ${hex}`);
  const v = parseInt(m[1], 16);
  return [(v >> 16) & 0xff, (v >> 8) & 0xff, v & 0xff];
}

/** null when every pair of colors is at least DELTA_MIN apart, otherwise a
 * message naming the first offending pair. */
export function validateSeparation(colors: Rgb[]): string | null {
  for (let i = 0; i < colors.length; i++) {
    for (let j = i + 1; j < colors.length; j++) {
      const d = colorDistance(colors[i], colors[j]);
      if (d < DELTA_MIN) {
        return (
          `colors ${i} (${rgbToHex(colors[i])}) and ${j} (${rgbToHex(colors[j])}) ` +
          `are too close: distance ${d.toFixed(3)} < ${DELTA_MIN.toFixed(3)}`
        );
      }
    }
  }
  return null;
}

/** Unique colors of an RGBA buffer in first-occurrence (row-major) order —
 * the same ordering the service uses when it derives a palette from context
 * outputs. */
export function extractColors(rgba: Uint8ClampedArray | Uint8Array, maxColors = 64): Rgb[] {
  const seen = new Set<string>();
  const out: Rgb[] = [];
  for (let p = 0; p < rgba.length; p += 4) {
    const c: Rgb = [rgba[p], rgba[p + 1], rgba[p + 2]];
    const key = colorKey(c);
    if (!seen.has(key)) {
      seen.add(key);
      out.push(c);
      if (out.length > maxColors) {
        throw new Error(`more than ${maxColors} unique colors; not a class map`);
      }
    }
  }
  return out;
}

/** Apply one color substitution coherently to an RGBA buffer (pure). */
export function recolorPixels(
  rgba: Uint8ClampedArray | Uint8Array,
  mapping: Map<string, Rgb>,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(rgba);
  for (let p = 0; p < out.length; p += 4) {
    const next = mapping.get(`${out[p]},${out[p + 1]},${out[p + 2]}`);
    if (next) {
      out[p] = next[0];
      out[p + 1] = next[1];
      out[p + 2] = next[2];
    }
  }
  return out;
}

/** Palette entries ([id, r, g, b]) for ordinal class ids 0..k-1. */
export function toPaletteEntries(colors: Rgb[]): PaletteEntry[] {
  return colors.map((c, i) => [i, c[0], c[1], c[2]] as PaletteEntry);
}

export interface LegendItem {
  id: number;
  color: Rgb;
  hex: string;
}

export function legendOf(entries: PaletteEntry[]): LegendItem[] {
  return entries.map(([id, r, g, b]) => {
    const color: Rgb = [r, g, b];
    return { id, color, hex: rgbToHex(color) };
  });
}
