"""HTTP guidance service: score prediction, health, and embedding endpoints.

Serves an in-process ScoreProvider over the wire protocol so optimization
runs can be pointed at a local mock instead of a trained model. Bodies and
responses carry base64 little-endian row-major float32 payloads,
channel-first for images; malformed input is answered with HTTP 400 and a
JSON error body.
"""
from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .evaluate import EmbeddingProvider, EvalError, StubEmbedding
from .guidance import (
    EMBED_PATH,
    HEALTH_PATH,
    ID_EMBED_DIM,
    PREDICT_PATH,
    GuidanceError,
    GuidanceRequest,
    ScoreProvider,
    WireError,
    decode_array,
    encode_array,
)


class PredictBody(BaseModel):
    shape: list[int]
    z_t: str
    t: int
    dtype: str = "f32"
    space: str = "pixel"
    y_text: str = ""
    y_id: list[float] | None = None
    y_exp: dict = Field(default_factory=lambda: {"index": 0})
    lambda_id: float = 0.0
    lambda_exp: float = 0.0
    cfg_scale: float = 1.0


class EmbedBody(BaseModel):
    shape: list[int]
    image: str
    dtype: str = "f32"


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"error": message})


def make_app(provider: ScoreProvider, model_name: str = "mock",
             embedder: EmbeddingProvider | None = None) -> FastAPI:
    """Wire-protocol server around a score provider and an embedder."""
    app = FastAPI(title="headforge guidance service", docs_url=None,
                  redoc_url=None)
    embedder = embedder if embedder is not None else StubEmbedding()

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return _bad_request(f"invalid request body: {exc.errors()[:3]}")

    @app.get(HEALTH_PATH)
    async def health():
        return {"status": "ok", "model": model_name}

    @app.post(PREDICT_PATH)
    async def predict_noise(body: PredictBody):
        if body.dtype != "f32":
            return _bad_request(f"unsupported dtype {body.dtype!r}")
        if len(body.shape) != 3:
            return _bad_request(f"shape must be [C, H, W], got {body.shape}")
        if "index" in body.y_exp:
            y_exp = int(body.y_exp["index"])
        elif "embedding" in body.y_exp:
            y_exp = np.asarray(body.y_exp["embedding"], dtype=np.float32)
        else:
            return _bad_request("y_exp needs an 'index' or 'embedding' key")
        y_id = (np.asarray(body.y_id, dtype=np.float32) if body.y_id is not None
                else np.zeros(ID_EMBED_DIM, np.float32))
        try:
            chw = decode_array(body.z_t, body.shape)
            request = GuidanceRequest(
                z_t=np.transpose(chw, (1, 2, 0)), t=body.t, y_text=body.y_text,
                y_id=y_id, y_exp=y_exp, lambda_id=body.lambda_id,
                lambda_exp=body.lambda_exp, cfg_scale=body.cfg_scale,
                space=body.space)
            eps = provider.predict_noise(request)
        except (WireError, GuidanceError, ValueError) as exc:
            return _bad_request(str(exc))
        out = np.transpose(np.asarray(eps, np.float32), (2, 0, 1))
        return {"eps_hat": encode_array(out), "shape": list(out.shape)}

    @app.post(EMBED_PATH)
    async def embed(body: EmbedBody):
        if body.dtype != "f32":
            return _bad_request(f"unsupported dtype {body.dtype!r}")
        if len(body.shape) != 3:
            return _bad_request(f"shape must be [H, W, C], got {body.shape}")
        try:
            image = decode_array(body.image, body.shape)
            vec = embedder.embed(image)
        except (WireError, EvalError, ValueError) as exc:
            return _bad_request(str(exc))
        vec = np.asarray(vec, dtype=np.float32)
        return {"embedding": encode_array(vec), "dim": int(vec.shape[0])}

    return app
