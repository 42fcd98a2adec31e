/** Per-pixel hole mask with bounded, lossless undo/redo.
 *
 * The buffer stores 1 for painted (hole) pixels and 0 for untouched
 * (valid) ones, always at the source image's native resolution; zooming is
 * the view's problem. Strokes are hard-edged capsules around a polyline,
 * matching the binary mask contract. History keeps full pre-stroke
 * snapshots, capped at `historyLimit` strokes.
 */

export interface Point {
  x: number;
  y: number;
}

export const DEFAULT_HISTORY_LIMIT = 50;

function distanceToSegmentSquared(px: number, py: number, a: Point, b: Point): number {
  const dx = b.x - a.x;
  const dy = b.y - a.y;
  const lengthSq = dx * dx + dy * dy;
  let t = 0;
  if (lengthSq > 0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / lengthSq;
    t = Math.max(0, Math.min(1, t));
  }
  const cx = a.x + t * dx - px;
  const cy = a.y + t * dy - py;
  return cx * cx + cy * cy;
}

export class MaskBuffer {
  readonly width: number;
  readonly height: number;
  private buffer: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];
  private readonly historyLimit: number;

  constructor(width: number, height: number, historyLimit = DEFAULT_HISTORY_LIMIT) {
    if (width < 1 || height < 1 || !Number.isInteger(width) || !Number.isInteger(height)) {
      throw new Error(`bad mask dimensions ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.historyLimit = historyLimit;
    this.buffer = new Uint8Array(width * height);
  }

  isHole(x: number, y: number): boolean {
    return this.buffer[y * this.width + x] === 1;
  }

  holeCount(): number {
    let n = 0;
    for (let i = 0; i < this.buffer.length; i++) n += this.buffer[i];
    return n;
  }

  snapshot(): Uint8Array {
    return this.buffer.slice();
  }

  /** Rasterize a polyline as hole pixels. Returns false for an empty
   * polyline (state untouched, nothing pushed to history). */
  paintStroke(polyline: Point[], brushSize: number): boolean {
    if (polyline.length === 0) return false;
    if (brushSize <= 0) throw new Error(`brush size must be positive, got ${brushSize}`);
    this.pushUndo();
    this.redoStack = [];
    const radius = brushSize / 2;
    const radiusSq = radius * radius;
    const segments: Array<[Point, Point]> =
      polyline.length === 1
        ? [[polyline[0], polyline[0]]]
        : polyline.slice(1).map((p, i) => [polyline[i], p] as [Point, Point]);
    for (const [a, b] of segments) {
      // out-of-bounds points are clamped by iterating the clipped box only
      const x0 = Math.max(0, Math.floor(Math.min(a.x, b.x) - radius));
      const x1 = Math.min(this.width - 1, Math.ceil(Math.max(a.x, b.x) + radius));
      const y0 = Math.max(0, Math.floor(Math.min(a.y, b.y) - radius));
      const y1 = Math.min(this.height - 1, Math.ceil(Math.max(a.y, b.y) + radius));
      for (let y = y0; y <= y1; y++) {
        for (let x = x0; x <= x1; x++) {
          if (distanceToSegmentSquared(x + 0.5, y + 0.5, a, b) <= radiusSq) {
            this.buffer[y * this.width + x] = 1;
          }
        }
      }
    }
    return true;
  }

  clear(): void {
    if (this.holeCount() === 0) return;
    this.pushUndo();
    this.redoStack = [];
    this.buffer.fill(0);
  }

  private pushUndo(): void {
    this.undoStack.push(this.buffer.slice());
    if (this.undoStack.length > this.historyLimit) {
      this.undoStack.shift();
    }
  }

  canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.buffer);
    this.buffer = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.buffer);
    this.buffer = next;
    return true;
  }

  /** Server wire format: 0 at hole pixels, 255 at valid pixels. */
  exportGray(): Uint8Array {
    const out = new Uint8Array(this.buffer.length);
    for (let i = 0; i < this.buffer.length; i++) {
      out[i] = this.buffer[i] === 1 ? 0 : 255;
    }
    return out;
  }
}
