"""HTTP inference service over a frozen checkpoint.

The generator is loaded once, switched to eval, and shared read-only by all
requests; a capacity gate serializes model access beyond the configured
concurrency. Valid pixels in every response are copied from the decoded
request bytes, so the round trip is exact by construction rather than by
numerical luck.
"""

from __future__ import annotations

import dataclasses
import io
import os
import threading

import numpy as np
import torch
import torch.nn.functional as F
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError
from .trainer import config_to_dict, load_checkpoint

# requests allowed to wait for the model beyond the ones running; more than
# this get 429 so the queue stays bounded
WAIT_SLOTS = 8


@dataclasses.dataclass(frozen=True)
class ServiceConfig:
    checkpoint_path: str
    port: int = 8000
    max_concurrent_inferences: int = 2
    max_image_dim: int = 1024

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ConfigurationError(f"port {self.port} out of range")
        if self.max_concurrent_inferences < 1:
            raise ConfigurationError("max_concurrent_inferences must be >= 1")
        if self.max_image_dim < 4:
            raise ConfigurationError("max_image_dim must be >= 4")


class CapacityGate:
    """Bounded admission: up to `capacity` run, up to WAIT_SLOTS more wait."""

    def __init__(self, capacity: int, wait_slots: int | None = None):
        if wait_slots is None:
            wait_slots = WAIT_SLOTS
        self._sem = threading.Semaphore(capacity)
        self._lock = threading.Lock()
        self._admitted = 0
        self._limit = capacity + wait_slots

    def admit(self) -> bool:
        with self._lock:
            if self._admitted >= self._limit:
                return False
            self._admitted += 1
        self._sem.acquire()
        return True

    def release(self):
        self._sem.release()
        with self._lock:
            self._admitted -= 1


def inpaint_u8(
    generator: torch.nn.Module,
    image_u8: np.ndarray,
    mask: np.ndarray,
    raw: bool = False,
) -> np.ndarray:
    """Run the generator on an 8-bit RGB image with a {0,1} mask.

    Returns uint8 (H, W, 3). The composite path copies valid pixels straight
    from `image_u8`. Sizes that are not multiples of 4 are replicate-padded
    for the conv stack and cropped back.
    """
    if image_u8.ndim != 3 or image_u8.shape[2] != 3:
        raise ConfigurationError(f"image must be (H, W, 3), got {image_u8.shape}")
    if mask.shape != image_u8.shape[:2]:
        raise ConfigurationError(
            f"mask shape {mask.shape} does not match image {image_u8.shape[:2]}"
        )
    with torch.no_grad():
        x = torch.from_numpy(
            image_u8.astype(np.float32) / 255.0 * 2.0 - 1.0
        ).permute(2, 0, 1)[None]
        m = torch.from_numpy(mask.astype(np.float32))[None, None]
        h, w = x.shape[2:]
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="replicate")
            m = F.pad(m, (0, pw, 0, ph), mode="replicate")
        x_tilde = x * m
        x_hat = generator(x_tilde, m)
        y = x_hat if raw else (1 - m) * x_hat + m * x_tilde
        y = y[:, :, :h, :w]
    out = np.rint(np.clip((y[0].permute(1, 2, 0).numpy() + 1.0) / 2.0, 0.0, 1.0) * 255.0)
    out = out.astype(np.uint8)
    if not raw:
        valid = mask >= 0.5
        out[valid] = image_u8[valid]
    return out


def _decode_rgb(data: bytes) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    img.load()
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _decode_mask(data: bytes, invert: bool = False) -> np.ndarray:
    img = Image.open(io.BytesIO(data))
    img.load()
    if img.mode != "L":
        raise ValueError(f"mask PNG must be 8-bit grayscale, got mode {img.mode!r}")
    arr = np.asarray(img, dtype=np.uint8)
    m = (arr >= 128).astype(np.float32)
    return 1.0 - m if invert else m


def load_frozen_generator(checkpoint_path: str):
    """(generator in eval mode, step, config echo dict) from a checkpoint."""
    state = load_checkpoint(checkpoint_path)
    gen = state.generator
    gen.eval()
    for p in gen.parameters():
        p.requires_grad_(False)
    return gen, state.step, config_to_dict(state.config)


def create_app(config: ServiceConfig, frontend_dir: str | None = None):
    generator, model_step, config_echo = load_frozen_generator(config.checkpoint_path)
    gate = CapacityGate(config.max_concurrent_inferences)
    app = FastAPI(title="scat-inpaint")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "model_step": model_step,
            "image_size": config_echo["image_size"],
        }

    @app.get("/api/model-info")
    def model_info():
        return config_echo

    @app.post("/api/inpaint")
    def inpaint(
        image: UploadFile | None = File(default=None),
        mask: UploadFile | None = File(default=None),
        raw: str = Form(default="0"),
    ):
        if image is None or mask is None:
            return JSONResponse(
                status_code=400,
                content={"error": "multipart fields 'image' and 'mask' are required"},
            )
        try:
            img_u8 = _decode_rgb(image.file.read())
            mask_arr = _decode_mask(mask.file.read())
        except (UnidentifiedImageError, ValueError, OSError) as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})

        if mask_arr.shape != img_u8.shape[:2]:
            return JSONResponse(
                status_code=422,
                content={
                    "error": f"mask size {mask_arr.shape[::-1]} does not match "
                    f"image size {img_u8.shape[1::-1]}"
                },
            )
        if max(img_u8.shape[:2]) > config.max_image_dim:
            return JSONResponse(
                status_code=422,
                content={
                    "error": f"image exceeds max_image_dim={config.max_image_dim}"
                },
            )

        if not gate.admit():
            return JSONResponse(
                status_code=429,
                content={"error": "server at inference capacity, retry shortly"},
                headers={"Retry-After": "1"},
            )
        try:
            out = inpaint_u8(
                generator, img_u8, mask_arr, raw=raw.lower() in ("1", "true")
            )
        finally:
            gate.release()

        buf = io.BytesIO()
        Image.fromarray(out, mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    if frontend_dir and os.path.isdir(frontend_dir):
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve_forever(config: ServiceConfig, host: str = "127.0.0.1", frontend_dir=None):
    import uvicorn

    app = create_app(config, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=config.port)
