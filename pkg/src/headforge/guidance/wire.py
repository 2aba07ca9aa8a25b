"""Wire protocol codec and HTTP client for remote noise prediction.

Tensors travel as base64 little-endian row-major float32, channel-first
([C, H, W]); in-process code uses channel-last (H, W, C) images, so the
codec transposes at the boundary. Transposition is index shuffling only,
so round trips are bit-exact.
"""
from __future__ import annotations

import base64
import time

import numpy as np
import requests

PREDICT_PATH = "/v1/predict_noise"
HEALTH_PATH = "/v1/health"
EMBED_PATH = "/v1/embed"


class WireError(RuntimeError):
    pass


class RemoteUnavailable(WireError):
    pass


def encode_array(arr: np.ndarray) -> str:
    data = np.ascontiguousarray(arr, dtype="<f4")
    return base64.b64encode(data.tobytes()).decode("ascii")


def decode_array(payload: str, shape) -> np.ndarray:
    raw = base64.b64decode(payload.encode("ascii"), validate=True)
    count = int(np.prod(shape))
    if len(raw) != count * 4:
        raise WireError(f"payload holds {len(raw)} bytes, shape {list(shape)} needs {count * 4}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def request_to_json(req) -> dict:
    """Serialize a GuidanceRequest; z_t goes out channel-first."""
    chw = np.transpose(np.asarray(req.z_t, dtype=np.float32), (2, 0, 1))
    if isinstance(req.y_exp, (int, np.integer)):
        y_exp = {"index": int(req.y_exp)}
    else:
        y_exp = {"embedding": np.asarray(req.y_exp, dtype=np.float64).tolist()}
    return {
        "shape": list(chw.shape),
        "dtype": "f32",
        "space": req.space,
        "z_t": encode_array(chw),
        "t": int(req.t),
        "y_text": req.y_text,
        "y_id": np.asarray(req.y_id, dtype=np.float64).tolist(),
        "y_exp": y_exp,
        "lambda_id": float(req.lambda_id),
        "lambda_exp": float(req.lambda_exp),
        "cfg_scale": float(req.cfg_scale),
    }


def parse_response(body: dict, expect_hwc_shape) -> np.ndarray:
    """Decode an eps_hat payload back to a channel-last image."""
    if "eps_hat" not in body or "shape" not in body:
        raise WireError(f"malformed response keys: {sorted(body)}")
    chw = decode_array(body["eps_hat"], body["shape"])
    eps = np.transpose(chw, (1, 2, 0))
    if eps.shape != tuple(expect_hwc_shape):
        raise WireError(f"response shape {eps.shape} != request shape {tuple(expect_hwc_shape)}")
    if not np.isfinite(eps).all():
        raise WireError("response contains non-finite values")
    return eps


def remote_predict(endpoint: str, req, retries: int = 3, backoff: float = 0.25,
                   timeout: float = 30.0) -> np.ndarray:
    """POST a prediction request; retry timeouts and 5xx with backoff."""
    url = endpoint.rstrip("/") + PREDICT_PATH
    body = request_to_json(req)
    last = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(url, json=body, timeout=timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last = exc
        else:
            if resp.status_code == 200:
                return parse_response(resp.json(), np.asarray(req.z_t).shape)
            if resp.status_code < 500:
                raise WireError(f"server rejected request: {resp.status_code} {resp.text[:200]}")
            last = WireError(f"server error {resp.status_code}")
        if attempt < retries:
            time.sleep(backoff * 2 ** attempt)
    raise RemoteUnavailable(f"predict failed after {retries + 1} attempts: {last}")


def probe_health(endpoint: str, timeout: float = 5.0) -> dict:
    url = endpoint.rstrip("/") + HEALTH_PATH
    try:
        resp = requests.get(url, timeout=timeout)
    except (requests.Timeout, requests.ConnectionError) as exc:
        raise RemoteUnavailable(f"health probe failed: {exc}") from exc
    if resp.status_code != 200:
        raise RemoteUnavailable(f"health probe returned {resp.status_code}")
    return resp.json()
