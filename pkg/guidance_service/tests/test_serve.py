"""HTTP endpoints: payload codec, validation, parity with direct inference."""
import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from guidance_service import (
    Conditioning,
    NoiseSchedule,
    TextEncoder,
    ToyUNet,
    UNetConfig,
    load_model,
    make_app,
    save_checkpoint,
)
from guidance_service.serve import decode_array, encode_array

TINY = UNetConfig(widths=(16, 32, 64), rank_self=8, rank_cross=16)


@pytest.fixture(scope="module")
def served(tmp_path_factory):
    torch.manual_seed(7)
    path = tmp_path_factory.mktemp("ckpt") / "m.pt"
    save_checkpoint(path, ToyUNet(TINY), "normal", NoiseSchedule())
    model, meta = load_model(path)
    app = make_app(model, meta, model_name="test-unet")
    return model, TestClient(app, raise_server_exceptions=False)


def make_body(**kw):
    rng = np.random.default_rng(11)
    z = rng.standard_normal((3, 16, 16)).astype(np.float32)
    body = {
        "shape": [3, 16, 16], "dtype": "f32", "space": "pixel",
        "z_t": encode_array(z), "t": 500,
        "y_text": "A front view normal map face portrait",
        "y_id": rng.standard_normal(512).astype(np.float32).tolist(),
        "y_exp": {"index": 2}, "lambda_id": 0.4, "lambda_exp": 0.3,
        "cfg_scale": 1.0,
    }
    body.update(kw)
    return body, z


class TestCodec:
    def test_roundtrip_is_bit_exact(self):
        rng = np.random.default_rng(0)
        arr = rng.standard_normal((3, 8, 8)).astype(np.float32)
        assert np.array_equal(decode_array(encode_array(arr), arr.shape), arr)


class TestHealth:
    def test_reports_model_and_schedule(self, served):
        _, client = served
        got = client.get("/v1/health")
        assert got.status_code == 200
        body = got.json()
        assert body["status"] == "ok"
        assert body["model"] == "test-unet"
        assert body["domain"] == "normal"
        assert body["space"] == "pixel"
        assert body["schedule"]["t_max"] == 1000
        assert set(body["parameters"]) == {"base", "adapters", "fraction"}


class TestPredict:
    def reference(self, model, z, body, lambda_id=None, lambda_exp=None,
                  caption=None, y_id=None):
        cond = Conditioning(
            text=TextEncoder()([body["y_text"] if caption is None
                                else caption]),
            y_id=(torch.tensor([body["y_id"]], dtype=torch.float32)
                  if y_id is None else y_id),
            y_exp=torch.tensor([body["y_exp"]["index"]]),
            lambda_id=body["lambda_id"] if lambda_id is None else lambda_id,
            lambda_exp=(body["lambda_exp"] if lambda_exp is None
                        else lambda_exp))
        with torch.no_grad():
            return model(torch.from_numpy(z)[None],
                         torch.tensor([body["t"]]), cond)[0].numpy()

    def test_matches_direct_inference_bitwise(self, served):
        model, client = served
        body, z = make_body()
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 200, got.text
        payload = got.json()
        assert payload["shape"] == [3, 16, 16]
        assert payload["model"] == "test-unet"
        eps = decode_array(payload["eps_hat"], payload["shape"])
        assert np.array_equal(eps, self.reference(model, z, body))

    def test_cfg_scale_three_mixes_two_passes(self, served):
        model, client = served
        body, z = make_body(cfg_scale=3.0)
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 200, got.text
        eps = decode_array(got.json()["eps_hat"], [3, 16, 16])
        cond = self.reference(model, z, body)
        uncond = self.reference(model, z, body, lambda_id=0.0,
                                lambda_exp=0.0, caption="",
                                y_id=torch.zeros(1, 512))
        assert np.array_equal(eps, uncond + 3.0 * (cond - uncond))
        assert not np.array_equal(eps, cond)

    def test_expression_embedding_accepted(self, served):
        _, client = served
        emb = np.linspace(-1.0, 1.0, 32).tolist()
        body, _ = make_body(y_exp={"embedding": emb})
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 200, got.text


BAD_BODIES = [
    ("dtype", {"dtype": "f64"}, "dtype must be f32"),
    ("space", {"space": "latent"}, "space"),
    ("t_low", {"t": 0}, "outside"),
    ("t_high", {"t": 1001}, "outside"),
    ("channels", {"shape": [1, 16, 16]}, "channels"),
    ("dims_mult", {"shape": [3, 12, 16]}, "multiples of 8"),
    ("dims_small", {"shape": [3, 16, 4]}, "multiples of 8"),
    ("y_id_short", {"y_id": [0.0] * 100}, "512"),
    ("y_id_nan", {"y_id": [float("nan")] + [0.0] * 511}, "finite"),
    ("b64", {"z_t": "@@not base64@@"}, "base64"),
    ("bytes", {"z_t": "AAAA"}, "bytes"),
    ("exp_index", {"y_exp": {"index": 23}}, "outside"),
    ("exp_dim", {"y_exp": {"embedding": [0.0] * 7}}, "dim"),
    ("exp_key", {"y_exp": {"label": 1}}, "index"),
]


class TestValidation:
    @pytest.mark.parametrize("name,patch,needle",
                             [(n, p, m) for n, p, m in BAD_BODIES],
                             ids=[n for n, _, _ in BAD_BODIES])
    def test_bad_request_is_400_with_reason(self, served, name, patch,
                                            needle):
        _, client = served
        patch = dict(patch)
        skip_json = patch.pop("skip_json", False)
        body, _ = make_body(**patch)
        if skip_json:
            import json
            text = json.dumps(body).replace('"y_id": [NaN', '"y_id": [NaN')
            got = client.post("/v1/predict_noise", content=text,
                              headers={"content-type": "application/json"})
        else:
            got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 400, got.text
        assert needle in got.json()["error"]

    def test_non_finite_payload_rejected(self, served):
        _, client = served
        z = np.full((3, 16, 16), np.inf, dtype=np.float32)
        body, _ = make_body(z_t=encode_array(z))
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 400
        assert "non-finite" in got.json()["error"]

    def test_missing_field_is_400(self, served):
        _, client = served
        body, _ = make_body()
        del body["z_t"]
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 400
        assert "invalid request" in got.json()["error"]

    def test_internal_error_returns_traceable_500(self, served, monkeypatch):
        model, client = served
        def boom(*a, **kw):
            raise RuntimeError("secret detail")
        monkeypatch.setattr(model, "forward", boom)
        body, _ = make_body()
        got = client.post("/v1/predict_noise", json=body)
        assert got.status_code == 500
        payload = got.json()
        assert payload["trace_id"] in payload["error"]
        assert "secret detail" not in payload["error"]
