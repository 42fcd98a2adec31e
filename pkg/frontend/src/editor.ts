/** Editor state machine, DOM-free.
 *
 * Owns the source image bytes, the mask buffer, brush size, the single
 * in-flight request rule, and the iterate flow where a result becomes the
 * next source. The canvas layer renders this state and forwards pointer
 * input; it never holds truth of its own.
 */

import { ApiError, InpaintClient, type InpaintOptions } from "./client.js";
import { MaskBuffer, type Point } from "./maskBuffer.js";
import { encodeGrayPng } from "./png.js";

export const DEFAULT_BRUSH_SIZE = 24;

export class Editor {
  sourcePng: Uint8Array | null = null;
  width = 0;
  height = 0;
  mask: MaskBuffer | null = null;
  brushSize = DEFAULT_BRUSH_SIZE;
  pending = false;
  lastResultPng: Uint8Array | null = null;
  errorMessage: string | null = null;

  private readonly client: InpaintClient;
  private activeStroke: Point[] | null = null;

  constructor(client: InpaintClient) {
    this.client = client;
  }

  /** Install a new source image; resets mask, history, and result. */
  loadImage(png: Uint8Array, width: number, height: number): void {
    this.sourcePng = png;
    this.width = width;
    this.height = height;
    this.mask = new MaskBuffer(width, height);
    this.lastResultPng = null;
    this.errorMessage = null;
    this.activeStroke = null;
  }

  hasImage(): boolean {
    return this.sourcePng !== null && this.mask !== null;
  }

  /** Submit is allowed only with a loaded image, at least one painted
   * hole pixel, and no request already in flight. */
  canSubmit(): boolean {
    return this.hasImage() && !this.pending && this.mask!.holeCount() > 0;
  }

  beginStroke(point: Point): void {
    if (!this.mask || this.pending) return;
    this.activeStroke = [point];
  }

  /** Extends the in-progress stroke; rasterizes only on endStroke so the
   * whole gesture is one undo unit. */
  extendStroke(point: Point): void {
    if (this.activeStroke) this.activeStroke.push(point);
  }

  endStroke(): boolean {
    if (!this.mask || !this.activeStroke) return false;
    const stroke = this.activeStroke;
    this.activeStroke = null;
    return this.mask.paintStroke(stroke, this.brushSize);
  }

  /** The in-progress polyline, for live overlay preview. */
  strokePreview(): Point[] | null {
    return this.activeStroke ? [...this.activeStroke] : null;
  }

  undo(): boolean {
    return this.mask?.undo() ?? false;
  }

  redo(): boolean {
    return this.mask?.redo() ?? false;
  }

  clearMask(): void {
    this.mask?.clear();
  }

  async submit(options: InpaintOptions = {}): Promise<boolean> {
    if (!this.canSubmit()) return false;
    // pending must flip before the first await or a second submit could
    // pass canSubmit while the mask is still encoding
    this.pending = true;
    this.errorMessage = null;
    try {
      const maskPng = await encodeGrayPng(this.width, this.height, this.mask!.exportGray());
      this.lastResultPng = await this.client.inpaint(this.sourcePng!, maskPng, options);
      return true;
    } catch (err) {
      this.errorMessage =
        err instanceof ApiError ? err.message : `request failed: ${String(err)}`;
      return false;
    } finally {
      this.pending = false;
    }
  }

  /** Promote the last result to source for another editing round. */
  continueEditing(): boolean {
    if (!this.lastResultPng) return false;
    this.loadImage(this.lastResultPng, this.width, this.height);
    return true;
  }
}
