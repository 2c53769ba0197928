/**
 * Wire client for the completion service.
 *
 * The editor talks to exactly three endpoints: POST /complete for filling,
 * POST /parse for label maps, GET /health for the banner. Requests are
 * single JSON bodies with base64 PNG payloads; at most one completion is in
 * flight, and a newer click aborts the older request.
 */

import { EditorState, maskArea, maskPixels } from "./editor";
import { encodeMaskPng } from "./png";
import { toBase64 } from "./base64";

export interface CompleteRequestWire {
  image: string;
  mask: string;
  seed?: number;
  blend?: boolean;
}

export interface CompleteResponseWire {
  completed: string;
  seed_used: number;
  mask_area: number;
  warnings: string[];
}

export class EmptyMaskError extends Error {}

export interface PreparedRequest {
  wire: CompleteRequestWire;
  /** The exact mask bytes sent on the wire, reused for the download link. */
  maskPng: Uint8Array;
}

export function buildCompleteRequest(state: EditorState, imagePng: Uint8Array): PreparedRequest {
  if (maskArea(state) === 0) {
    throw new EmptyMaskError("paint a mask first: completion needs at least one missing pixel");
  }
  const maskPng = encodeMaskPng(state.width, state.height, maskPixels(state));
  return {
    wire: { image: toBase64(imagePng), mask: toBase64(maskPng), seed: state.seed, blend: state.blend },
    maskPng,
  };
}

export class CompletionClient {
  private inflight: AbortController | null = null;

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  /** POST /complete; a newer call aborts any request still in flight. */
  async complete(wire: CompleteRequestWire): Promise<CompleteResponseWire> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/complete`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(wire),
        signal: controller.signal,
      });
      if (!resp.ok) {
        throw new Error(`service error ${resp.status}: ${await resp.text()}`);
      }
      return (await resp.json()) as CompleteResponseWire;
    } finally {
      if (this.inflight === controller) {
        this.inflight = null;
      }
    }
  }

  async health(): Promise<Record<string, unknown>> {
    const resp = await this.fetchImpl(`${this.baseUrl}/health`);
    if (!resp.ok) {
      throw new Error(`service error ${resp.status}`);
    }
    return (await resp.json()) as Record<string, unknown>;
  }
}
