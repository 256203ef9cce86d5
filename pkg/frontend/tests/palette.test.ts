import { describe, expect, it } from "vitest";

import {
  DELTA_MIN,
  colorDistance,
  extractColors,
  hexToRgb,
  legendOf,
  recolorPixels,
  rgbToHex,
  toPaletteEntries,
  validateSeparation,
  type Rgb,
} from "../src/palette.js";

function rgbaOf(colors: Rgb[]): Uint8ClampedArray {
  const data = new Uint8ClampedArray(colors.length * 4);
  colors.forEach((c, i) => {
    data.set([c[0], c[1], c[2], 255], i * 4);
  });
  return data;
}

describe("color separation rule", () => {
  it("accepts colors at least delta-min apart", () => {
    expect(validateSeparation([[0, 0, 0], [255, 0, 0], [0, 0, 255]])).toBeNull();
  });

  it("rejects a pair closer than delta-min and names it", () => {
    const msg = validateSeparation([[0, 0, 0], [40, 0, 0]]);
    expect(msg).toMatch(/colors 0 .* and 1 .* too close/);
  });

  it("boundary: distance exactly delta-min passes", () => {
    expect(colorDistance([0, 0, 0], [80, 0, 0])).toBeCloseTo(DELTA_MIN, 12);
    expect(validateSeparation([[0, 0, 0], [80, 0, 0]])).toBeNull();
  });

  it("empty and single-color palettes are trivially valid", () => {
    expect(validateSeparation([])).toBeNull();
    expect(validateSeparation([[7, 7, 7]])).toBeNull();
  });
});

describe("hex conversions", () => {
  it("round-trips", () => {
    const color: Rgb = [12, 200, 255];
    expect(hexToRgb(rgbToHex(color))).toEqual(color);
  });

  it("rejects malformed hex", () => {
    expect(() => hexToRgb("#12345")).toThrow(/rrggbb/);
  });
});

describe("extractColors", () => {
  it("keeps first-occurrence row-major order", () => {
    const data = rgbaOf([[0, 0, 0], [200, 0, 0], [0, 0, 0], [0, 200, 0]]);
    expect(extractColors(data)).toEqual([[0, 0, 0], [200, 0, 0], [0, 200, 0]]);
  });

  it("throws past the class cap", () => {
    const many: Rgb[] = Array.from({ length: 70 }, (_, i) => [i, 0, 0] as Rgb);
    expect(() => extractColors(rgbaOf(many), 64)).toThrow(/64 unique/);
  });
});

describe("recolorPixels", () => {
  it("substitutes mapped colors coherently and leaves the rest", () => {
    const data = rgbaOf([[0, 0, 0], [200, 0, 0], [200, 0, 0], [5, 5, 5]]);
    const out = recolorPixels(data, new Map([["200,0,0", [0, 0, 255] as Rgb]]));
    expect(extractColors(out)).toEqual([[0, 0, 0], [0, 0, 255], [5, 5, 5]]);
    // the two mapped pixels moved together
    expect([...out.slice(4, 7)]).toEqual([0, 0, 255]);
    expect([...out.slice(8, 11)]).toEqual([0, 0, 255]);
  });

  it("is pure: the source buffer is untouched", () => {
    const data = rgbaOf([[200, 0, 0]]);
    recolorPixels(data, new Map([["200,0,0", [1, 2, 3] as Rgb]]));
    expect([...data.slice(0, 3)]).toEqual([200, 0, 0]);
  });

  it("swap of two classes via simultaneous mapping", () => {
    const data = rgbaOf([[200, 0, 0], [0, 200, 0]]);
    const out = recolorPixels(
      data,
      new Map<string, Rgb>([
        ["200,0,0", [0, 200, 0]],
        ["0,200,0", [200, 0, 0]],
      ]),
    );
    expect(extractColors(out)).toEqual([[0, 200, 0], [200, 0, 0]]);
  });
});

describe("palette entries and legend", () => {
  it("assigns ordinal ids and the legend mirrors them", () => {
    const entries = toPaletteEntries([[0, 0, 0], [10, 20, 30]]);
    expect(entries).toEqual([[0, 0, 0, 0], [1, 10, 20, 30]]);
    const legend = legendOf(entries);
    expect(legend).toHaveLength(2);
    expect(legend[1]).toEqual({ id: 1, color: [10, 20, 30], hex: "#0a141e" });
  });
});
