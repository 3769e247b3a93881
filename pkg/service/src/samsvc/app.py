"""FastAPI application implementing the segmentation wire protocol.

POST /segment: body = PNG bytes -> {"width", "height", "masks": [{"rle"}]}.
GET /health: readiness plus the proposal parameters for provenance.

Inference is serialized behind a lock (one model in memory); the health
endpoint never takes the lock. Every response, including errors, is JSON.
"""
from __future__ import annotations

import base64
import io
import threading
from contextlib import asynccontextmanager

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from . import rle
from .config import ServiceConfig
from .model import load_sam_generator


def create_app(cfg: ServiceConfig | None = None, generator_factory=None) -> FastAPI:
    cfg = (cfg or ServiceConfig()).validate()
    factory = generator_factory or (lambda: load_sam_generator(cfg))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.generator = factory()
        yield
        app.state.generator = None

    app = FastAPI(title="samsvc", lifespan=lifespan)
    app.state.generator = None
    app.state.config = cfg
    infer_lock = threading.Lock()

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "model_loaded": app.state.generator is not None,
            "params": cfg.proposal_params(),
        }

    @app.post("/segment")
    async def segment(request: Request):
        generator = app.state.generator
        if generator is None:
            return JSONResponse({"error": "model not loaded"}, status_code=503)
        body = await request.body()
        try:
            with Image.open(io.BytesIO(body)) as im:
                image = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return JSONResponse({"error": f"undecodable image: {exc}"}, status_code=400)
        try:
            with infer_lock:
                masks = generator(image)
        except Exception as exc:  # inference failure surfaces as JSON, not a crash
            return JSONResponse({"error": f"inference failed: {exc}"}, status_code=500)
        h, w = image.shape[:2]
        encoded = []
        for mask in masks:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != (h, w):
                return JSONResponse(
                    {"error": f"model produced a {mask.shape} mask for a {(h, w)} image"},
                    status_code=500,
                )
            encoded.append({"rle": base64.b64encode(rle.encode(mask)).decode("ascii")})
        return {"width": int(w), "height": int(h), "masks": encoded}

    return app
