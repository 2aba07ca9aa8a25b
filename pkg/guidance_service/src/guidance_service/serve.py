"""Wire-protocol server for a trained noise predictor.

Implements the prediction and health endpoints of the shared protocol:
tensors travel as base64 little-endian row-major float32, channel-first.
Computation stays channel-first throughout, so client-side layout
transposes round-trip bit-exactly. Classifier-free guidance runs
server-side: a scale other than 1 triggers a second, unconditional pass
(empty caption, conditioning weights zero), mixed as
uncond + scale * (cond - uncond).
"""
from __future__ import annotations

import base64
import binascii
import uuid

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .text import TextEncoder
from .training import load_checkpoint
from .unet import Conditioning, ToyUNet

PREDICT_PATH = "/v1/predict_noise"
HEALTH_PATH = "/v1/health"


class ProtocolError(ValueError):
    pass


class PredictBody(BaseModel):
    shape: list[int] = Field(min_length=3, max_length=3)
    dtype: str
    space: str = "pixel"
    z_t: str
    t: int
    y_text: str = ""
    y_id: list[float] = Field(default_factory=list)
    y_exp: dict = Field(default_factory=lambda: {"index": 0})
    lambda_id: float = 0.0
    lambda_exp: float = 0.0
    cfg_scale: float = 1.0


def decode_array(payload: str, shape) -> np.ndarray:
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
    except (binascii.Error, UnicodeEncodeError) as exc:
        raise ProtocolError(f"payload is not valid base64: {exc}") from exc
    count = int(np.prod(shape))
    if len(raw) != count * 4:
        raise ProtocolError(f"payload holds {len(raw)} bytes, shape "
                            f"{list(shape)} needs {count * 4}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def encode_array(arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype="<f4")
    return base64.b64encode(data.tobytes()).decode("ascii")


def load_model(path) -> tuple[ToyUNet, dict]:
    return load_checkpoint(path)


def _resolve_exp(body: PredictBody, model: ToyUNet) -> torch.Tensor:
    y_exp = body.y_exp
    if "index" in y_exp:
        index = int(y_exp["index"])
        if not 0 <= index < model.config.exp_labels:
            raise ProtocolError(f"y_exp index {index} outside "
                                f"[0, {model.config.exp_labels})")
        return torch.tensor([index], dtype=torch.long)
    if "embedding" in y_exp:
        emb = np.asarray(y_exp["embedding"], dtype=np.float32)
        if emb.ndim != 1 or emb.shape[0] != model.config.exp_dim:
            raise ProtocolError(f"y_exp embedding must have dim "
                                f"{model.config.exp_dim}")
        if not np.isfinite(emb).all():
            raise ProtocolError("y_exp embedding must be finite")
        return torch.from_numpy(emb)[None]
    raise ProtocolError("y_exp needs an 'index' or 'embedding' key")


def make_app(model: ToyUNet, meta: dict, model_name: str = "toy-unet") -> FastAPI:
    app = FastAPI()
    encoder = TextEncoder(dim=model.config.ctx_dim)
    model.eval()

    def predict(z_t: torch.Tensor, t: int, body: PredictBody,
                y_exp: torch.Tensor) -> torch.Tensor:
        cond = Conditioning(text=encoder([body.y_text]),
                            y_id=torch.tensor([body.y_id],
                                              dtype=torch.float32),
                            y_exp=y_exp, lambda_id=body.lambda_id,
                            lambda_exp=body.lambda_exp)
        with torch.no_grad():
            eps_cond = model(z_t, torch.tensor([t]), cond)
            if body.cfg_scale == 1.0:
                return eps_cond
            uncond = Conditioning(text=encoder([""]),
                                  y_id=torch.zeros(1, model.config.id_dim),
                                  y_exp=y_exp, lambda_id=0.0, lambda_exp=0.0)
            eps_un = model(z_t, torch.tensor([t]), uncond)
            return eps_un + body.cfg_scale * (eps_cond - eps_un)

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        trace = uuid.uuid4().hex
        return JSONResponse(status_code=500,
                            content={"error": f"internal error [{trace}]",
                                     "trace_id": trace})

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc):
        return JSONResponse(status_code=400,
                            content={"error": f"invalid request: {exc}"})

    @app.get(HEALTH_PATH)
    def health():
        return {"status": "ok", "model": model_name,
                "domain": meta.get("domain", ""),
                "space": meta.get("space", "pixel"),
                "schedule": meta.get("schedule", {}),
                "parameters": model.parameter_report()}

    @app.post(PREDICT_PATH)
    def predict_noise(body: PredictBody):
        try:
            if body.dtype != "f32":
                raise ProtocolError(f"dtype must be f32, got {body.dtype!r}")
            if body.space != meta.get("space", "pixel"):
                raise ProtocolError(f"space {body.space!r} does not match "
                                    f"the served model")
            schedule = meta.get("schedule", {})
            t_max = int(schedule.get("t_max", 1000))
            if not 1 <= body.t <= t_max:
                raise ProtocolError(f"t {body.t} outside [1, {t_max}]")
            if body.shape[0] != model.config.in_channels:
                raise ProtocolError(f"expected {model.config.in_channels} "
                                    f"channels, got shape {body.shape}")
            if any(d < 8 or d % 8 for d in body.shape[1:]):
                raise ProtocolError(f"spatial dims must be multiples of 8, "
                                    f"got shape {body.shape}")
            if len(body.y_id) != model.config.id_dim:
                raise ProtocolError(f"y_id must have {model.config.id_dim} "
                                    f"floats, got {len(body.y_id)}")
            if not np.isfinite(body.y_id).all():
                raise ProtocolError("y_id must be finite")
            chw = decode_array(body.z_t, body.shape)
            if not np.isfinite(chw).all():
                raise ProtocolError("z_t contains non-finite values")
            y_exp = _resolve_exp(body, model)
        except ProtocolError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        z_t = torch.from_numpy(chw)[None]
        eps = predict(z_t, body.t, body, y_exp)[0].numpy()
        return {"eps_hat": encode_array(eps), "shape": list(eps.shape),
                "model": model_name}

    return app
