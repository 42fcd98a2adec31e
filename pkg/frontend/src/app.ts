/** DOM wiring: canvas rendering, pointer input, and controls around the
 * Editor state machine. Zoom is a pure CSS transform on the canvas stack;
 * the mask always lives at native image resolution.
 */

import { InpaintClient } from "./client.js";
import { DEFAULT_BRUSH_SIZE, Editor } from "./editor.js";
import type { Point } from "./maskBuffer.js";

const client = new InpaintClient("");
const editor = new Editor(client);

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const fileInput = el<HTMLInputElement>("file-input");
const imageCanvas = el<HTMLCanvasElement>("image-canvas");
const overlayCanvas = el<HTMLCanvasElement>("overlay-canvas");
const canvasStack = el<HTMLDivElement>("canvas-stack");
const brushInput = el<HTMLInputElement>("brush-size");
const brushLabel = el<HTMLSpanElement>("brush-label");
const zoomInput = el<HTMLInputElement>("zoom");
const undoButton = el<HTMLButtonElement>("undo");
const redoButton = el<HTMLButtonElement>("redo");
const clearButton = el<HTMLButtonElement>("clear-mask");
const submitButton = el<HTMLButtonElement>("submit");
const continueButton = el<HTMLButtonElement>("continue-editing");
const errorBanner = el<HTMLDivElement>("error-banner");
const statusLine = el<HTMLDivElement>("status-line");
const resultImage = el<HTMLImageElement>("result-image");
const resultPanel = el<HTMLDivElement>("result-panel");

let sourceBitmap: ImageBitmap | null = null;
let resultUrl: string | null = null;

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function syncControls(): void {
  submitButton.disabled = !editor.canSubmit();
  undoButton.disabled = !(editor.mask?.canUndo() ?? false);
  redoButton.disabled = !(editor.mask?.canRedo() ?? false);
  clearButton.disabled = !editor.hasImage() || editor.mask!.holeCount() === 0;
  continueButton.disabled = editor.lastResultPng === null;
  errorBanner.textContent = editor.errorMessage ?? "";
  errorBanner.hidden = editor.errorMessage === null;
  brushLabel.textContent = `${editor.brushSize}px`;
}

function drawOverlay(): void {
  const ctx = overlayCanvas.getContext("2d")!;
  ctx.clearRect(0, 0, overlayCanvas.width, overlayCanvas.height);
  const mask = editor.mask;
  if (!mask) return;
  const image = ctx.createImageData(mask.width, mask.height);
  for (let y = 0; y < mask.height; y++) {
    for (let x = 0; x < mask.width; x++) {
      if (mask.isHole(x, y)) {
        const i = (y * mask.width + x) * 4;
        image.data[i] = 255;
        image.data[i + 1] = 64;
        image.data[i + 2] = 64;
        image.data[i + 3] = 150;
      }
    }
  }
  ctx.putImageData(image, 0, 0);
  const preview = editor.strokePreview();
  if (preview && preview.length > 0) {
    ctx.strokeStyle = "rgba(255, 64, 64, 0.6)";
    ctx.lineWidth = editor.brushSize;
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    ctx.beginPath();
    ctx.moveTo(preview[0].x, preview[0].y);
    for (const p of preview.slice(1)) ctx.lineTo(p.x, p.y);
    ctx.stroke();
  }
}

function redraw(): void {
  if (sourceBitmap) {
    const ctx = imageCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, imageCanvas.width, imageCanvas.height);
    ctx.drawImage(sourceBitmap, 0, 0);
  }
  drawOverlay();
  syncControls();
}

async function installSource(png: Uint8Array): Promise<void> {
  const bitmap = await createImageBitmap(new Blob([png as BlobPart], { type: "image/png" }));
  sourceBitmap?.close();
  sourceBitmap = bitmap;
  editor.loadImage(png, bitmap.width, bitmap.height);
  imageCanvas.width = overlayCanvas.width = bitmap.width;
  imageCanvas.height = overlayCanvas.height = bitmap.height;
  resultPanel.hidden = true;
  setStatus(`${bitmap.width}x${bitmap.height} loaded; paint the region to remove`);
  redraw();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  await installSource(new Uint8Array(await file.arrayBuffer()));
});

function canvasPoint(event: PointerEvent): Point {
  const rect = overlayCanvas.getBoundingClientRect();
  return {
    x: ((event.clientX - rect.left) / rect.width) * overlayCanvas.width,
    y: ((event.clientY - rect.top) / rect.height) * overlayCanvas.height,
  };
}

overlayCanvas.addEventListener("pointerdown", (event) => {
  if (!editor.hasImage()) return;
  overlayCanvas.setPointerCapture(event.pointerId);
  editor.beginStroke(canvasPoint(event));
  redraw();
});

overlayCanvas.addEventListener("pointermove", (event) => {
  editor.extendStroke(canvasPoint(event));
  drawOverlay();
});

overlayCanvas.addEventListener("pointerup", () => {
  if (editor.endStroke()) redraw();
});

brushInput.addEventListener("input", () => {
  editor.brushSize = Number(brushInput.value);
  syncControls();
});

zoomInput.addEventListener("input", () => {
  canvasStack.style.transform = `scale(${Number(zoomInput.value) / 100})`;
});

undoButton.addEventListener("click", () => {
  if (editor.undo()) redraw();
});

redoButton.addEventListener("click", () => {
  if (editor.redo()) redraw();
});

clearButton.addEventListener("click", () => {
  editor.clearMask();
  redraw();
});

submitButton.addEventListener("click", async () => {
  setStatus("inpainting…");
  syncControls();
  const ok = await editor.submit();
  if (ok && editor.lastResultPng) {
    if (resultUrl) URL.revokeObjectURL(resultUrl);
    resultUrl = URL.createObjectURL(
      new Blob([editor.lastResultPng as BlobPart], { type: "image/png" }),
    );
    resultImage.src = resultUrl;
    resultPanel.hidden = false;
    setStatus("done; compare with the source or continue editing the result");
  } else {
    setStatus("request failed");
  }
  syncControls();
});

continueButton.addEventListener("click", async () => {
  const png = editor.lastResultPng;
  if (png) await installSource(png);
});

document.addEventListener("keydown", (event) => {
  if ((event.ctrlKey || event.metaKey) && event.key === "z") {
    event.preventDefault();
    if (event.shiftKey ? editor.redo() : editor.undo()) redraw();
  }
});

brushInput.value = String(DEFAULT_BRUSH_SIZE);
syncControls();
setStatus("load an image to start");
client
  .health()
  .then((h) => setStatus(`model at step ${h.model_step} ready; load an image to start`))
  .catch(() => setStatus("service unreachable; load an image anyway or start the server"));
