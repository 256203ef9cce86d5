/** Composer session state and its transitions, kept free of DOM concerns so
 * the rules (context limits, size coherence, submit gating) are testable. */

import type { InferResponse } from "./api.js";
import { validateSeparation, type Rgb } from "./palette.js";

export interface ContextEntry {
  sampleId: string;
  /** base64 PNG payloads exactly as they will be submitted */
  input: string;
  output: string;
  width: number;
  height: number;
}

export interface QueryEntry {
  sampleId: string;
  image: string;
  width: number;
  height: number;
}

export interface ComposerState {
  dataset: string | null;
  split: string;
  context: ContextEntry[];
  query: QueryEntry | null;
  /** class colors currently assigned, ordinal id -> color */
  colors: Rgb[];
  lastResponse: InferResponse | null;
  overlayOpacity: number;
  inFlight: boolean;
  readonly maxContext: number;
}

export function createState(maxContext = 8): ComposerState {
  return {
    dataset: null,
    split: "train",
    context: [],
    query: null,
    colors: [],
    lastResponse: null,
    overlayOpacity: 0.6,
    inFlight: false,
    maxContext,
  };
}

export type Outcome = { ok: true } | { ok: false; reason: string };

export function addContextPair(state: ComposerState, entry: ContextEntry): Outcome {
  if (state.context.length >= state.maxContext) {
    return { ok: false, reason: `context is full (max ${state.maxContext} pairs)` };
  }
  const first = state.context[0];
  if (first && (first.width !== entry.width || first.height !== entry.height)) {
    return {
      ok: false,
      reason:
        `pair is ${entry.width}x${entry.height} but the context is ` +
        `${first.width}x${first.height}; all pairs must match`,
    };
  }
  if (state.context.some((c) => c.sampleId === entry.sampleId)) {
    return { ok: false, reason: `sample ${entry.sampleId} is already in the context` };
  }
  state.context.push(entry);
  return { ok: true };
}

export function removeContextPair(state: ComposerState, index: number): void {
  state.context.splice(index, 1);
}

export function setQuery(state: ComposerState, query: QueryEntry): Outcome {
  const first = state.context[0];
  if (first && (first.width !== query.width || first.height !== query.height)) {
    return {
      ok: false,
      reason:
        `query is ${query.width}x${query.height} but the context is ` +
        `${first.width}x${first.height}`,
    };
  }
  state.query = query;
  return { ok: true };
}

export function setOverlayOpacity(state: ComposerState, value: number): void {
  state.overlayOpacity = Math.min(1, Math.max(0, value));
}

export function colorProblem(state: ComposerState): string | null {
  return state.colors.length ? validateSeparation(state.colors) : null;
}

/** Submit gate: one in-flight request, at least one pair, a query, and a
 * color assignment that keeps the decoder's separation rule. */
export function canSubmit(state: ComposerState): Outcome {
  if (state.inFlight) return { ok: false, reason: "a request is already in flight" };
  if (state.context.length === 0) return { ok: false, reason: "add at least one context pair" };
  if (!state.query) return { ok: false, reason: "choose a query image" };
  const problem = colorProblem(state);
  if (problem) return { ok: false, reason: problem };
  return { ok: true };
}

export function resetComposition(state: ComposerState): void {
  state.context = [];
  state.query = null;
  state.colors = [];
  state.lastResponse = null;
  state.inFlight = false;
}
