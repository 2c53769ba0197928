/**
 * Mask-painting editor state: a binary mask over a fixed-size image, brush
 * settings, completion options, and an exact undo/redo history.
 *
 * All functions are pure: strokes copy the mask before writing, and the
 * history stacks hold those frozen copies, so undo/redo restores bitmaps
 * bit for bit.
 */

export type BrushMode = "paint" | "erase";

export interface Brush {
  radius: number;
  mode: BrushMode;
}

export interface Point {
  x: number;
  y: number;
}

export interface EditorState {
  readonly width: number;
  readonly height: number;
  /** One byte per pixel, row-major; 1 = missing (to be completed). */
  mask: Uint8Array;
  brush: Brush;
  seed: number;
  blend: boolean;
  /** Undo stack of previous mask bitmaps, most recent last. */
  history: Uint8Array[];
  /** Redo stack; any new stroke clears it. */
  future: Uint8Array[];
}

export function createEditor(width: number, height: number): EditorState {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width <= 0 || height <= 0) {
    throw new Error(`invalid editor size ${width}x${height}`);
  }
  return {
    width,
    height,
    mask: new Uint8Array(width * height),
    brush: { radius: 8, mode: "paint" },
    seed: 0,
    blend: true,
    history: [],
    future: [],
  };
}

/**
 * Apply one brush stroke along a path of canvas points.
 *
 * Every pixel whose center lies within the brush radius of the polyline is
 * set (paint) or cleared (erase). The pre-stroke mask is pushed onto the
 * undo history even when nothing changes, and the redo stack is cleared.
 */
export function paintStroke(state: EditorState, path: Point[], mode?: BrushMode): EditorState {
  if (path.length === 0) {
    return state;
  }
  const value = (mode ?? state.brush.mode) === "paint" ? 1 : 0;
  const mask = state.mask.slice();
  const r = state.brush.radius;
  for (let i = 0; i < path.length; i++) {
    stampSegment(mask, state.width, state.height, path[Math.max(i - 1, 0)], path[i], r, value);
  }
  return { ...state, mask, history: [...state.history, state.mask], future: [] };
}

function stampSegment(mask: Uint8Array, width: number, height: number, a: Point, b: Point, radius: number, value: number): void {
  const x0 = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius));
  const x1 = Math.min(width - 1, Math.ceil(Math.max(a.x, b.x) + radius));
  const y0 = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius));
  const y1 = Math.min(height - 1, Math.ceil(Math.max(a.y, b.y) + radius));
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const len2 = dx * dx + dy * dy;
  const r2 = radius * radius;
  for (let y = y0; y <= y1; y++) {
    for (let x = x0; x <= x1; x++) {
      // distance from the pixel center to the segment, via clamped projection
      let t = len2 === 0 ? 0 : ((x - a.x) * dx + (y - a.y) * dy) / len2;
      t = Math.max(0, Math.min(1, t));
      const ex = x - (a.x + t * dx);
      const ey = y - (a.y + t * dy);
      if (ex * ex + ey * ey <= r2) {
        mask[y * width + x] = value;
      }
    }
  }
}

export function undo(state: EditorState): EditorState {
  if (state.history.length === 0) {
    return state;
  }
  const previous = state.history[state.history.length - 1];
  return { ...state, mask: previous, history: state.history.slice(0, -1), future: [...state.future, state.mask] };
}

export function redo(state: EditorState): EditorState {
  if (state.future.length === 0) {
    return state;
  }
  const next = state.future[state.future.length - 1];
  return { ...state, mask: next, future: state.future.slice(0, -1), history: [...state.history, state.mask] };
}

export function maskArea(state: EditorState): number {
  let area = 0;
  for (const v of state.mask) {
    area += v;
  }
  return area;
}

/** The wire mask pixels: one grayscale byte per cell, 255 = missing. */
export function maskPixels(state: EditorState): Uint8Array {
  const out = new Uint8Array(state.mask.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = state.mask[i] ? 255 : 0;
  }
  return out;
}

/** Fresh nonnegative 31-bit seed for the "resample" button. */
export function sampleSeed(rand: () => number = Math.random): number {
  return Math.floor(rand() * 0x80000000);
}

/** Download filenames embedding the parameters needed to reproduce the result. */
export function exportNames(seed: number, blend: boolean): { mask: string; completed: string } {
  const tag = `seed${seed}_blend${blend ? "on" : "off"}`;
  return { mask: `mask_${tag}.png`, completed: `completed_${tag}.png` };
}
