/**
 * DOM shell for the mask studio.
 *
 * Wires the pure editor core to a canvas: load a face image, paint or erase
 * the mask with the brush, complete through the HTTP service, resample or
 * repeat seeds, toggle blending, and download the mask/result PNGs. All
 * mask logic lives in editor.ts; this file only moves pixels and events.
 */

import { buildCompleteRequest, CompleteResponseWire, CompletionClient, EmptyMaskError } from "./api";
import { fromBase64 } from "./base64";
import { createEditor, EditorState, exportNames, maskArea, paintStroke, Point, redo, sampleSeed, undo } from "./editor";

const $ = <T extends HTMLElement>(id: string): T => document.getElementById(id) as T;

const serviceBase = new URLSearchParams(window.location.search).get("service") ?? window.location.origin;
const client = new CompletionClient(serviceBase);

let state: EditorState | null = null;
let imagePng: Uint8Array | null = null;
let imagePixels: ImageData | null = null;
let lastResponse: CompleteResponseWire | null = null;
let strokePath: Point[] = [];

const overlay = $<HTMLCanvasElement>("overlay");
const banner = $("banner");

function showBanner(text: string, kind: "info" | "error" = "info"): void {
  banner.textContent = text;
  banner.className = kind;
}

function canvasPoint(ev: PointerEvent): Point {
  const rect = overlay.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * overlay.width,
    y: ((ev.clientY - rect.top) / rect.height) * overlay.height,
  };
}

function renderOverlay(): void {
  if (!state) {
    return;
  }
  const ctx = overlay.getContext("2d")!;
  const img = ctx.createImageData(state.width, state.height);
  for (let i = 0; i < state.mask.length; i++) {
    if (state.mask[i]) {
      img.data[i * 4] = 255;
      img.data[i * 4 + 3] = 110;
    }
  }
  ctx.clearRect(0, 0, overlay.width, overlay.height);
  ctx.putImageData(img, 0, 0);
  renderMaskedPanel();
  $("mask-area").textContent = `${maskArea(state)} px`;
}

function renderMaskedPanel(): void {
  if (!state || !imagePixels) {
    return;
  }
  const canvas = $<HTMLCanvasElement>("panel-masked");
  const ctx = canvas.getContext("2d")!;
  const img = ctx.createImageData(state.width, state.height);
  img.data.set(imagePixels.data);
  for (let i = 0; i < state.mask.length; i++) {
    if (state.mask[i]) {
      img.data.set([128, 128, 128, 255], i * 4);
    }
  }
  ctx.putImageData(img, 0, 0);
}

function setState(next: EditorState): void {
  state = next;
  renderOverlay();
}

async function loadImage(file: File): Promise<void> {
  const bitmap = await createImageBitmap(file);
  const canvas = $<HTMLCanvasElement>("panel-original");
  canvas.width = bitmap.width;
  canvas.height = bitmap.height;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(bitmap, 0, 0);
  imagePixels = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
  // re-encode through the canvas so the service always receives RGB PNG
  const blob = await new Promise<Blob | null>((resolve) => canvas.toBlob(resolve, "image/png"));
  if (!blob) {
    showBanner("could not encode the image as PNG", "error");
    return;
  }
  imagePng = new Uint8Array(await blob.arrayBuffer());
  for (const id of ["overlay", "panel-masked"]) {
    const c = $<HTMLCanvasElement>(id);
    c.width = bitmap.width;
    c.height = bitmap.height;
  }
  setState(createEditor(bitmap.width, bitmap.height));
  showBanner(`loaded ${bitmap.width}x${bitmap.height}; paint the region to replace`);
}

async function requestCompletion(seedMode: "current" | "resample" | "repeat"): Promise<void> {
  if (!state || !imagePng) {
    showBanner("load an image first", "error");
    return;
  }
  if (seedMode === "resample") {
    state.seed = sampleSeed();
  } else if (seedMode === "repeat" && lastResponse) {
    state.seed = lastResponse.seed_used;
  }
  let prepared;
  try {
    prepared = buildCompleteRequest(state, imagePng);
  } catch (err) {
    if (err instanceof EmptyMaskError) {
      showBanner(err.message, "error");
      return;
    }
    throw err;
  }
  showBanner(`completing with seed ${state.seed}...`);
  let resp: CompleteResponseWire;
  try {
    resp = await client.complete(prepared.wire);
  } catch (err) {
    if (err instanceof DOMException && err.name === "AbortError") {
      return; // replaced by a newer request
    }
    showBanner(`completion failed: ${(err as Error).message}`, "error");
    return;
  }
  lastResponse = resp;
  state.seed = resp.seed_used;
  $("seed").textContent = String(resp.seed_used);
  $<HTMLImageElement>("panel-completed").src = `data:image/png;base64,${resp.completed}`;
  showBanner(resp.warnings.length ? resp.warnings.join("; ") : `done (seed ${resp.seed_used})`);
  const names = exportNames(resp.seed_used, state.blend);
  updateDownload("download-mask", prepared.maskPng, names.mask);
  updateDownload("download-completed", fromBase64(resp.completed), names.completed);
}

function updateDownload(id: string, bytes: Uint8Array, filename: string): void {
  const anchor = $<HTMLAnchorElement>(id);
  anchor.href = URL.createObjectURL(new Blob([bytes.slice().buffer], { type: "image/png" }));
  anchor.download = filename;
  anchor.classList.remove("disabled");
}

function wireEvents(): void {
  $<HTMLInputElement>("image-input").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) {
      void loadImage(file);
    }
  });
  overlay.addEventListener("pointerdown", (ev) => {
    if (!state) {
      return;
    }
    overlay.setPointerCapture(ev.pointerId);
    strokePath = [canvasPoint(ev)];
  });
  overlay.addEventListener("pointermove", (ev) => {
    if (!state || strokePath.length === 0) {
      return;
    }
    strokePath.push(canvasPoint(ev));
    // live feedback: commit incrementally against the pre-stroke state
    const preview = paintStroke({ ...state, history: [], future: [] }, strokePath);
    const ctx = overlay.getContext("2d")!;
    const img = ctx.createImageData(state.width, state.height);
    for (let i = 0; i < preview.mask.length; i++) {
      if (preview.mask[i]) {
        img.data[i * 4] = 255;
        img.data[i * 4 + 3] = 110;
      }
    }
    ctx.clearRect(0, 0, overlay.width, overlay.height);
    ctx.putImageData(img, 0, 0);
  });
  overlay.addEventListener("pointerup", () => {
    if (!state || strokePath.length === 0) {
      return;
    }
    setState(paintStroke(state, strokePath));
    strokePath = [];
  });
  $<HTMLInputElement>("brush-radius").addEventListener("input", (ev) => {
    if (state) {
      state.brush.radius = Number((ev.target as HTMLInputElement).value);
      $("brush-readout").textContent = `${state.brush.radius} px`;
    }
  });
  for (const mode of ["paint", "erase"] as const) {
    $<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
      if (state) {
        state.brush.mode = mode;
      }
    });
  }
  $<HTMLInputElement>("blend").addEventListener("change", (ev) => {
    if (state) {
      state.blend = (ev.target as HTMLInputElement).checked;
    }
  });
  $("undo").addEventListener("click", () => state && setState(undo(state)));
  $("redo").addEventListener("click", () => state && setState(redo(state)));
  $("complete").addEventListener("click", () => void requestCompletion("current"));
  $("resample").addEventListener("click", () => void requestCompletion("resample"));
  $("repeat").addEventListener("click", () => void requestCompletion("repeat"));
}

async function announceService(): Promise<void> {
  try {
    const health = await client.health();
    showBanner(`service ready: ${health["model_tag"]} (stage ${health["stage"]}, step ${health["step"]})`);
  } catch {
    showBanner(`service unreachable at ${serviceBase}; start it with: facefill serve --checkpoint <dir>`, "error");
  }
}

wireEvents();
void announceService();
