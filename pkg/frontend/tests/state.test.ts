import { describe, expect, it } from "vitest";

import {
  addContextPair,
  canSubmit,
  createState,
  removeContextPair,
  resetComposition,
  setOverlayOpacity,
  setQuery,
  type ContextEntry,
} from "../src/state.js";

function entry(id: string, width = 32, height = 32): ContextEntry {
  return { sampleId: id, input: `in-${id}`, output: `out-${id}`, width, height };
}

describe("context assembly", () => {
  it("accepts pairs up to the limit, then rejects with a hint", () => {
    const state = createState(3);
    for (const id of ["a", "b", "c"]) {
      expect(addContextPair(state, entry(id)).ok).toBe(true);
    }
    const refused = addContextPair(state, entry("d"));
    expect(refused).toEqual({ ok: false, reason: "context is full (max 3 pairs)" });
    expect(state.context).toHaveLength(3);
  });

  it("rejects a size mismatch against the existing context", () => {
    const state = createState();
    addContextPair(state, entry("a", 32, 32));
    const refused = addContextPair(state, entry("b", 64, 64));
    expect(refused.ok).toBe(false);
    if (!refused.ok) expect(refused.reason).toMatch(/64x64.*32x32/);
  });

  it("rejects duplicate samples", () => {
    const state = createState();
    addContextPair(state, entry("a"));
    expect(addContextPair(state, entry("a")).ok).toBe(false);
  });

  it("removal frees a slot", () => {
    const state = createState(2);
    addContextPair(state, entry("a"));
    addContextPair(state, entry("b"));
    removeContextPair(state, 0);
    expect(state.context.map((c) => c.sampleId)).toEqual(["b"]);
    expect(addContextPair(state, entry("c")).ok).toBe(true);
  });
});

describe("query and submit gating", () => {
  it("walks through the gate reasons in order", () => {
    const state = createState();
    expect(canSubmit(state)).toMatchObject({ ok: false, reason: /context pair/ });
    addContextPair(state, entry("a"));
    expect(canSubmit(state)).toMatchObject({ ok: false, reason: /query/ });
    setQuery(state, { sampleId: "q", image: "img", width: 32, height: 32 });
    expect(canSubmit(state)).toEqual({ ok: true });
    state.inFlight = true;
    expect(canSubmit(state)).toMatchObject({ ok: false, reason: /in flight/ });
  });

  it("rejects a query whose size differs from the context", () => {
    const state = createState();
    addContextPair(state, entry("a", 32, 32));
    const refused = setQuery(state, { sampleId: "q", image: "img", width: 16, height: 16 });
    expect(refused.ok).toBe(false);
    expect(state.query).toBeNull();
  });

  it("blocks submit while assigned colors violate the separation rule", () => {
    const state = createState();
    addContextPair(state, entry("a"));
    setQuery(state, { sampleId: "q", image: "img", width: 32, height: 32 });
    state.colors = [[0, 0, 0], [10, 0, 0]];
    expect(canSubmit(state)).toMatchObject({ ok: false, reason: /too close/ });
    state.colors = [[0, 0, 0], [255, 0, 0]];
    expect(canSubmit(state)).toEqual({ ok: true });
  });
});

describe("misc state", () => {
  it("overlay opacity clamps to [0,1]", () => {
    const state = createState();
    setOverlayOpacity(state, 1.7);
    expect(state.overlayOpacity).toBe(1);
    setOverlayOpacity(state, -2);
    expect(state.overlayOpacity).toBe(0);
  });

  it("reset clears the composition but keeps browse selections", () => {
    const state = createState();
    state.dataset = "dme";
    addContextPair(state, entry("a"));
    setQuery(state, { sampleId: "q", image: "img", width: 32, height: 32 });
    state.colors = [[1, 2, 3]];
    resetComposition(state);
    expect(state.context).toHaveLength(0);
    expect(state.query).toBeNull();
    expect(state.colors).toHaveLength(0);
    expect(state.dataset).toBe("dme");
  });
});
