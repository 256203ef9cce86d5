"""HTTP inference service: on-the-fly task definition against a loaded model.

The service owns one immutable checkpoint loaded at startup (hot-swap =
restart) plus an optional corpus mount for the sample browser. Requests are
stateless; images travel as base64-encoded PNG strings inside JSON bodies.
Malformed payloads map to 400, oversize images to 413, semantic violations
(empty or oversized context, mismatched dimensions) to 422, and a missing
model to 503.
"""

from __future__ import annotations

import hashlib
import logging
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import kernels
from .config import TaskParams
from .corpus import DatasetPool, load_corpus
from .errors import CodecError, ContextError, DataError
from .imaging import decode_image_b64, encode_image_b64, thumbnail_b64
from .network import load_checkpoint, predict
from .palette import Palette, decode_to_classes, encode_labels, extract_context_colors, quantize
from .taskgen import enumerate_tasks

log = logging.getLogger(__name__)

MAX_CONTEXT_DEFAULT = 8
MAX_SIDE_DEFAULT = 512
MAX_PAYLOAD_CHARS = 24_000_000  # ~18 MB of PNG before base64 decoding


class ContextPairPayload(BaseModel):
    input: str
    output: str


class InferRequestPayload(BaseModel):
    context: list[ContextPairPayload]
    query: str
    decode: bool = False
    palette: list[list[float]] | None = None  # entries [id, r, g, b] with 8-bit rgb


def _payload_to_image(payload: str, what: str, max_side: int):
    from fastapi import HTTPException

    if len(payload) > MAX_PAYLOAD_CHARS:
        raise HTTPException(413, f"{what}: payload exceeds the size limit")
    try:
        img = decode_image_b64(payload)
    except (CodecError, DataError, ValueError) as exc:
        raise HTTPException(400, f"{what}: undecodable image payload ({exc})") from exc
    h, w = img.shape[:2]
    if max(h, w) > max_side:
        raise HTTPException(413, f"{what}: image {h}x{w} exceeds the {max_side}px limit")
    return img


def _client_palette(entries: list[list[float]]) -> Palette:
    ids = tuple(int(e[0]) for e in entries)
    colors = quantize(np.asarray([e[1:4] for e in entries], dtype=np.float32) / 255.0)
    return Palette(ids=ids, colors=colors)


def create_app(
    checkpoint: str | Path | None = None,
    corpus_dir: str | Path | None = None,
    max_context: int = MAX_CONTEXT_DEFAULT,
    max_side: int = MAX_SIDE_DEFAULT,
    frontend_dir: str | Path | None = None,
    task_params: TaskParams | None = None,
) -> FastAPI:
    from fastapi import HTTPException

    app = FastAPI(title="retinalizer inference service")
    state: dict = {"model": None, "model_id": None, "pool": None, "tasks": []}
    params = task_params or TaskParams()

    if checkpoint is not None:
        model = load_checkpoint(checkpoint)
        model.eval()
        state["model"] = model
        meta = model.meta or {}
        state["model_id"] = f"{meta.get('run_name', 'model')}@{meta.get('step', '?')}"
        log.info("loaded checkpoint %s (%s)", checkpoint, state["model_id"])
    if corpus_dir is not None:
        state["pool"] = DatasetPool(load_corpus(corpus_dir))
        state["tasks"] = enumerate_tasks(state["pool"], params)
        log.info("mounted corpus with %d tasks", len(state["tasks"]))

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/api/health")
    def health():
        return {
            "status": "ok" if state["model"] is not None else "loading",
            "model_id": state["model_id"],
            "kernel_backend": kernels.BACKEND,
            "tasks_loaded": len(state["tasks"]),
        }

    @app.get("/api/tasks")
    def tasks():
        return {
            "tasks": [
                {
                    "id": t.id,
                    "family": t.family,
                    "variant": t.variant,
                    "dataset": t.dataset,
                    "seen": t.seen,
                    "metric": t.metric,
                }
                for t in state["tasks"]
            ]
        }

    @app.get("/api/samples")
    def samples(dataset: str, split: str = "train", limit: int = 24):
        pool: DatasetPool | None = state["pool"]
        if pool is None:
            raise HTTPException(404, "no corpus mounted")
        if dataset not in pool.by_family:
            raise HTTPException(404, f"unknown dataset {dataset!r}")
        if split not in ("train", "val", "test"):
            raise HTTPException(404, f"unknown split {split!r}")
        out = []
        for ps in pool.samples(dataset, split)[: max(0, limit)]:
            img = pool.image(ps.id)
            entry = {
                "id": ps.id,
                "thumbnail": thumbnail_b64(img),
                "has_fg": ps.record.has_fg,
                "vendor": ps.record.vendor,
                "image": encode_image_b64(img),
            }
            if ps.record.labelmap is not None:
                labels = pool.labels(ps.id)
                entry["labels"] = encode_image_b64(encode_labels(labels, ps.manifest.palette))
            out.append(entry)
        return {"dataset": dataset, "split": split, "samples": out}

    @app.post("/api/infer")
    def infer(req: InferRequestPayload):
        if state["model"] is None:
            raise HTTPException(503, "model not loaded")
        n = len(req.context)
        if n == 0:
            raise HTTPException(422, "context set must contain at least one pair")
        if n > max_context:
            raise HTTPException(422, f"context size {n} exceeds the limit of {max_context}")
        t0 = time.perf_counter()
        query = _payload_to_image(req.query, "query", max_side)
        pairs = []
        for i, pair in enumerate(req.context):
            inp = _payload_to_image(pair.input, f"context[{i}].input", max_side)
            out = _payload_to_image(pair.output, f"context[{i}].output", max_side)
            if inp.shape != query.shape or out.shape != query.shape:
                raise HTTPException(
                    422,
                    f"context[{i}] size {inp.shape[:2]}/{out.shape[:2]} does not match "
                    f"query {query.shape[:2]}",
                )
            pairs.append((inp, out))
        div = 2 ** state["model"].config.levels
        if query.shape[0] % div or query.shape[1] % div:
            raise HTTPException(
                422, f"image sides must be divisible by {div} for this checkpoint"
            )
        # canonical context order: the model is order-invariant only up to
        # float summation noise, so sorting by payload digest makes permuted
        # requests run the exact same forward pass (byte-identical responses)
        order = sorted(
            range(n),
            key=lambda i: hashlib.sha256(
                (req.context[i].input + req.context[i].output).encode()
            ).digest(),
        )
        pairs = [pairs[i] for i in order]
        pred = predict(state["model"], pairs, query)
        body = {
            "prediction": encode_image_b64(np.clip(pred, 0.0, 1.0)),
            "model_id": state["model_id"],
            "latency_ms": round((time.perf_counter() - t0) * 1e3, 2),
        }
        if req.decode:
            try:
                pal = (
                    _client_palette(req.palette)
                    if req.palette
                    else extract_context_colors(pairs, max_classes=params.max_classes)
                )
                decoded = decode_to_classes(pred, pal)
                body["labelmap"] = encode_image_b64(encode_labels(decoded.labels, pal))
                body["palette"] = pal.to_jsonable()
                body["snap_distance_mean"] = decoded.snap_distance_mean
            except (ContextError, CodecError) as exc:
                raise HTTPException(422, f"decode failed: {exc}") from exc
        return body

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
