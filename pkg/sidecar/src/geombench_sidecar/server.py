"""FastAPI app implementing the embedding provider protocol.

GET /v1/models lists the served registry entries; POST /v1/embed takes
base64 PNGs and returns vectors in request order.  In deterministic mode
at most one batch per model runs at a time and all torch nondeterminism
sources are pinned, so repeated requests return identical vectors.
"""

from __future__ import annotations

import base64
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .registry import ModelLoadError, decode_image, default_registry


def create_app(
    registry: dict | None = None,
    models: tuple = (),
    deterministic: bool = True,
    max_batch: int = 32,
) -> FastAPI:
    reg = registry if registry is not None else default_registry()
    if models:
        missing = [m for m in models if m not in reg]
        if missing:
            raise KeyError(f"unknown model tags: {missing}")
        reg = {tag: reg[tag] for tag in models}
    app = FastAPI(title="geombench embedding sidecar")
    locks = {tag: threading.Lock() for tag in reg}

    @app.get("/v1/models")
    def list_models():
        return {
            "models": [entry.describe() | {"deterministic": deterministic}
                       for entry in reg.values()]
        }

    @app.post("/v1/embed")
    async def embed(request: Request):
        body = await request.json()
        tag = body.get("model", "")
        if tag not in reg:
            return JSONResponse(
                {"error": f"unknown model {tag!r}"}, status_code=404
            )
        images_b64 = body.get("images", [])
        if len(images_b64) > max_batch:
            return JSONResponse(
                {"error": f"batch of {len(images_b64)} exceeds limit {max_batch}"},
                status_code=413,
            )
        images = []
        for i, data in enumerate(images_b64):
            try:
                images.append(decode_image(base64.b64decode(data)))
            except Exception as err:
                return JSONResponse(
                    {"error": f"image {i}: {err}"}, status_code=400
                )
        entry = reg[tag]
        try:
            runner = entry.runner(deterministic)
        except ModelLoadError as err:
            return JSONResponse({"error": str(err)}, status_code=503)
        if not images:
            return {"model": tag, "dim": entry.dim, "embeddings": []}
        lock = locks[tag] if deterministic else None
        if lock:
            lock.acquire()
        try:
            vectors = runner(images)
        finally:
            if lock:
                lock.release()
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.shape != (len(images), entry.dim):
            return JSONResponse(
                {"error": f"model produced shape {vectors.shape}, "
                          f"expected ({len(images)}, {entry.dim})"},
                status_code=500,
            )
        if not np.all(np.isfinite(vectors)):
            return JSONResponse(
                {"error": "model produced non-finite values"}, status_code=500
            )
        return {
            "model": tag,
            "dim": entry.dim,
            "embeddings": [[float(x) for x in row] for row in vectors],
        }

    return app
