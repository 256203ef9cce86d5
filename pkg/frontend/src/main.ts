/** Context-composer app: browse samples, assemble a context set, recolor
 * classes, submit a query, and inspect the prediction overlay. */

import { ApiClient, errorMessage, type InferRequest, type SampleInfo } from "./api.js";
import {
  extractColors,
  legendOf,
  hexToRgb,
  recolorPixels,
  rgbToHex,
  toPaletteEntries,
  colorKey,
  type Rgb,
} from "./palette.js";
import { composeOverlay } from "./render.js";
import {
  addContextPair,
  canSubmit,
  colorProblem,
  createState,
  removeContextPair,
  resetComposition,
  setOverlayOpacity,
  setQuery,
} from "./state.js";

const api = new ApiClient("");
const state = createState();
/** colors as they appear in the unmodified context outputs */
let originalColors: Rgb[] = [];
/** decoded RGBA buffers of the raw context outputs, keyed by sample id */
const outputPixels = new Map<string, ImageData>();

function $(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text) node.textContent = text;
  return node;
}

function payloadToImageData(payload: string): Promise<ImageData> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      const canvas = document.createElement("canvas");
      canvas.width = img.naturalWidth;
      canvas.height = img.naturalHeight;
      const ctx = canvas.getContext("2d")!;
      ctx.drawImage(img, 0, 0);
      resolve(ctx.getImageData(0, 0, canvas.width, canvas.height));
    };
    img.onerror = () => reject(new Error("undecodable image payload"));
    img.src = `data:image/png;base64,${payload}`;
  });
}

function imageDataToPayload(data: ImageData): string {
  const canvas = document.createElement("canvas");
  canvas.width = data.width;
  canvas.height = data.height;
  canvas.getContext("2d")!.putImageData(data, 0, 0);
  return canvas.toDataURL("image/png").split(",", 2)[1];
}

function drawToCanvas(canvas: HTMLCanvasElement, data: ImageData): void {
  canvas.width = data.width;
  canvas.height = data.height;
  canvas.getContext("2d")!.putImageData(data, 0, 0);
}

function banner(kind: "error" | "info" | "", text = ""): void {
  const node = $("banner");
  node.className = kind ? `banner ${kind}` : "banner hidden";
  node.textContent = text;
}

/** mapping from original to currently assigned colors (identity entries omitted) */
function currentMapping(): Map<string, Rgb> {
  const mapping = new Map<string, Rgb>();
  originalColors.forEach((orig, i) => {
    const assigned = state.colors[i];
    if (assigned && colorKey(assigned) !== colorKey(orig)) {
      mapping.set(colorKey(orig), assigned);
    }
  });
  return mapping;
}

function refreshColors(): void {
  const ordered: Rgb[] = [];
  const seen = new Set<string>();
  for (const entry of state.context) {
    const pixels = outputPixels.get(entry.sampleId);
    if (!pixels) continue;
    for (const color of extractColors(pixels.data)) {
      if (!seen.has(colorKey(color))) {
        seen.add(colorKey(color));
        ordered.push(color);
      }
    }
  }
  originalColors = ordered;
  state.colors = ordered.map((c) => [...c] as Rgb);
  renderColorPanel();
}

function renderColorPanel(): void {
  const panel = $("colors");
  panel.textContent = "";
  originalColors.forEach((orig, i) => {
    const row = el("div", "color-row");
    const swatch = el("span", "swatch");
    swatch.style.background = rgbToHex(orig);
    const picker = el("input") as HTMLInputElement;
    picker.type = "color";
    picker.value = rgbToHex(state.colors[i]);
    picker.addEventListener("input", () => {
      state.colors[i] = hexToRgb(picker.value);
      renderContextStrip();
      updateSubmitGate();
    });
    row.append(swatch, el("span", "color-label", `class ${i}`), picker);
    panel.append(row);
  });
  const reset = el("button", "", "reset colors");
  reset.addEventListener("click", () => {
    state.colors = originalColors.map((c) => [...c] as Rgb);
    renderColorPanel();
    renderContextStrip();
    updateSubmitGate();
  });
  if (originalColors.length) panel.append(reset);
  updateSubmitGate();
}

function renderContextStrip(): void {
  const strip = $("context-strip");
  strip.textContent = "";
  const mapping = currentMapping();
  state.context.forEach((entry, index) => {
    const card = el("div", "pair-card");
    const inputCanvas = el("canvas", "pair-canvas");
    const outputCanvas = el("canvas", "pair-canvas");
    payloadToImageData(entry.input).then((d) => drawToCanvas(inputCanvas, d));
    const pixels = outputPixels.get(entry.sampleId);
    if (pixels) {
      const recolored = new ImageData(
        recolorPixels(pixels.data, mapping),
        pixels.width,
        pixels.height,
      );
      drawToCanvas(outputCanvas, recolored);
    }
    const remove = el("button", "remove", "x");
    remove.title = `remove ${entry.sampleId}`;
    remove.addEventListener("click", () => {
      removeContextPair(state, index);
      outputPixels.delete(entry.sampleId);
      refreshColors();
      renderContextStrip();
    });
    card.append(inputCanvas, outputCanvas, remove);
    strip.append(card);
  });
  $("context-count").textContent = `${state.context.length}/${state.maxContext}`;
  updateSubmitGate();
}

function updateSubmitGate(): void {
  const gate = canSubmit(state);
  const button = $("submit") as HTMLButtonElement;
  button.disabled = !gate.ok;
  $("gate-hint").textContent = gate.ok ? "" : gate.reason;
  const problem = colorProblem(state);
  $("color-problem").textContent = problem ?? "";
}

async function addSampleToContext(sample: SampleInfo): Promise<void> {
  const output = sample.labels ?? sample.image;
  const pixels = await payloadToImageData(output);
  const outcome = addContextPair(state, {
    sampleId: sample.id,
    input: sample.image,
    output,
    width: pixels.width,
    height: pixels.height,
  });
  if (!outcome.ok) {
    banner("error", outcome.reason);
    return;
  }
  banner("");
  outputPixels.set(sample.id, pixels);
  refreshColors();
  renderContextStrip();
}

async function chooseQuery(sample: SampleInfo): Promise<void> {
  const pixels = await payloadToImageData(sample.image);
  const outcome = setQuery(state, {
    sampleId: sample.id,
    image: sample.image,
    width: pixels.width,
    height: pixels.height,
  });
  if (!outcome.ok) {
    banner("error", outcome.reason);
    return;
  }
  banner("");
  $("query-id").textContent = sample.id;
  drawToCanvas($("query-canvas") as HTMLCanvasElement, pixels);
  updateSubmitGate();
}

async function loadSamples(): Promise<void> {
  const dataset = ($("dataset") as HTMLSelectElement).value;
  const split = ($("split") as HTMLSelectElement).value;
  state.dataset = dataset;
  state.split = split;
  const grid = $("grid");
  grid.textContent = "loading…";
  try {
    const listing = await api.samples(dataset, split, 24);
    grid.textContent = "";
    if (!listing.samples.length) {
      grid.append(el("p", "empty", `no samples in ${dataset}/${split}`));
      return;
    }
    for (const sample of listing.samples) {
      const card = el("div", "sample-card");
      const img = el("img") as HTMLImageElement;
      img.src = `data:image/png;base64,${sample.thumbnail}`;
      img.title = sample.id;
      const addBtn = el("button", "", "+ context");
      addBtn.addEventListener("click", () => void addSampleToContext(sample));
      const queryBtn = el("button", "", "query");
      queryBtn.addEventListener("click", () => void chooseQuery(sample));
      card.append(img, el("div", "sample-id", sample.id), addBtn, queryBtn);
      grid.append(card);
    }
  } catch (err) {
    grid.textContent = "";
    banner("error", errorMessage(err));
  }
}

function buildRequest(): InferRequest {
  const mapping = currentMapping();
  const recolor = mapping.size > 0;
  const context = state.context.map((entry) => {
    if (!recolor) return { input: entry.input, output: entry.output };
    const pixels = outputPixels.get(entry.sampleId)!;
    const recolored = new ImageData(
      recolorPixels(pixels.data, mapping),
      pixels.width,
      pixels.height,
    );
    return { input: entry.input, output: imageDataToPayload(recolored) };
  });
  const request: InferRequest = { context, query: state.query!.image };
  if (state.colors.length) {
    request.decode = true;
    request.palette = toPaletteEntries(state.colors);
  }
  return request;
}

async function renderResult(): Promise<void> {
  const resp = state.lastResponse;
  if (!resp) return;
  const prediction = await payloadToImageData(resp.prediction);
  const base = await payloadToImageData(state.query!.image);
  const blended = composeOverlay(base.data, prediction.data, state.overlayOpacity);
  drawToCanvas(
    $("result-canvas") as HTMLCanvasElement,
    new ImageData(blended, prediction.width, prediction.height),
  );
  const meta = `model ${resp.model_id} · ${resp.latency_ms} ms` +
    (resp.snap_distance_mean !== undefined
      ? ` · snap ${resp.snap_distance_mean.toFixed(4)}`
      : "");
  $("result-meta").textContent = meta;

  const legend = $("legend");
  legend.textContent = "";
  for (const item of legendOf(resp.palette ?? [])) {
    const row = el("div", "legend-row");
    const swatch = el("span", "swatch");
    swatch.style.background = item.hex;
    row.append(swatch, el("span", "", `class ${item.id} ${item.hex}`));
    legend.append(row);
  }

  const downloads = $("downloads");
  downloads.textContent = "";
  const links: Array<[string, string | undefined]> = [
    ["prediction.png", resp.prediction],
    ["labels.png", resp.labelmap],
  ];
  for (const [name, payload] of links) {
    if (!payload) continue;
    const a = el("a", "", name) as HTMLAnchorElement;
    a.href = `data:image/png;base64,${payload}`;
    a.download = name;
    downloads.append(a);
  }
}

async function submit(): Promise<void> {
  const gate = canSubmit(state);
  if (!gate.ok) {
    banner("error", gate.reason);
    return;
  }
  state.inFlight = true;
  updateSubmitGate();
  banner("info", "inferring…");
  try {
    state.lastResponse = await api.infer(buildRequest());
    banner("");
    await renderResult();
  } catch (err) {
    banner("error", errorMessage(err));
  } finally {
    state.inFlight = false;
    updateSubmitGate();
  }
}

async function boot(): Promise<void> {
  try {
    const health = await api.health();
    $("health").textContent =
      `${health.status} · ${health.model_id ?? "no model"} · ` +
      `${health.kernel_backend} kernels · ${health.tasks_loaded} tasks`;
    const tasks = await api.tasks();
    const datasets = [...new Set(tasks.map((t) => t.dataset))];
    const select = $("dataset") as HTMLSelectElement;
    select.textContent = "";
    for (const name of datasets) {
      const option = el("option", "", name) as HTMLOptionElement;
      option.value = name;
      select.append(option);
    }
    banner("");
    await loadSamples();
  } catch (err) {
    banner("error", errorMessage(err));
    const retry = el("button", "", "retry");
    retry.addEventListener("click", () => void boot());
    $("banner").append(" ", retry);
  }
}

export function wire(): void {
  $("dataset").addEventListener("change", () => void loadSamples());
  $("split").addEventListener("change", () => void loadSamples());
  $("submit").addEventListener("click", () => void submit());
  $("clear").addEventListener("click", () => {
    resetComposition(state);
    outputPixels.clear();
    originalColors = [];
    renderColorPanel();
    renderContextStrip();
    $("query-id").textContent = "none";
    banner("");
  });
  const slider = $("opacity") as HTMLInputElement;
  slider.addEventListener("input", () => {
    setOverlayOpacity(state, Number(slider.value) / 100);
    void renderResult();
  });
  void boot();
}

wire();
