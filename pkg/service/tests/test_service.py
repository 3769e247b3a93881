import base64
import io
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from samsvc import ServiceConfig, create_app, rle, stub_generator

GOLDEN = Path(__file__).parent / "golden"


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def response_schema() -> dict:
    path = Path(__file__).parents[1] / "src" / "samsvc" / "schemas" / "segment_response.schema.json"
    return json.loads(path.read_text())


@pytest.fixture()
def app():
    return create_app(ServiceConfig(), generator_factory=lambda: stub_generator())


@pytest.fixture()
def client(app):
    with TestClient(app) as c:
        yield c


class TestHealth:
    def test_transitions_false_to_true_across_load(self, app):
        before = TestClient(app).get("/health")
        assert before.status_code == 200
        assert before.json()["model_loaded"] is False
        with TestClient(app) as client:
            after = client.get("/health")
            assert after.status_code == 200
            assert after.json()["model_loaded"] is True

    def test_idempotent_and_carries_params(self, client):
        a = client.get("/health").json()
        b = client.get("/health").json()
        assert a == b
        assert a["params"]["points_per_side"] == 32


class TestSegment:
    def test_undecodable_body_is_400_json(self, client):
        r = client.post("/segment", content=b"definitely not a png")
        assert r.status_code == 400
        assert "error" in r.json()

    def test_unready_model_is_503_json(self, app):
        r = TestClient(app).post("/segment", content=b"anything")
        assert r.status_code == 503
        assert "error" in r.json()

    def test_inference_failure_is_500_json(self):
        def broken_factory():
            def generate(image):
                raise RuntimeError("boom")

            return generate

        app = create_app(ServiceConfig(), generator_factory=broken_factory)
        with TestClient(app) as client:
            r = client.post("/segment", content=(GOLDEN / "request.png").read_bytes())
            assert r.status_code == 500
            assert "error" in r.json()

    def test_valid_image_yields_schema_valid_response(self, client):
        rng = np.random.default_rng(3)
        img = rng.integers(0, 256, size=(40, 56, 3)).astype(np.uint8)
        r = client.post("/segment", content=png_bytes(img))
        assert r.status_code == 200
        doc = r.json()
        jsonschema.validate(doc, response_schema())
        assert (doc["width"], doc["height"]) == (56, 40)

    def test_every_mask_decodes_to_request_dims(self, client):
        img = np.zeros((33, 47, 3), dtype=np.uint8)
        doc = client.post("/segment", content=png_bytes(img)).json()
        for entry in doc["masks"]:
            mask = rle.decode(base64.b64decode(entry["rle"]))
            assert mask.shape == (33, 47)

    def test_deterministic_for_identical_input(self, client):
        body = (GOLDEN / "request.png").read_bytes()
        a = client.post("/segment", content=body).content
        b = client.post("/segment", content=body).content
        assert a == b

    def test_wrong_schema_never_escapes(self, client):
        # non-PNG but image-like garbage still returns a JSON error object
        r = client.post("/segment", content=b"\x89PNG\r\n\x1a\nbroken")
        assert r.status_code == 400
        assert r.headers["content-type"].startswith("application/json")


class TestRle:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m = rng.random((int(rng.integers(1, 30)), int(rng.integers(1, 30)))) < 0.4
            assert np.array_equal(rle.decode(rle.encode(m)), m)

    def test_decode_rejects_out_of_range(self):
        import struct

        bad = struct.pack("<III", 3, 3, 1) + struct.pack("<II", 7, 5)
        with pytest.raises(ValueError):
            rle.decode(bad)


class TestConfig:
    def test_port_validation(self):
        with pytest.raises(ValueError):
            ServiceConfig(port=0).validate()

    def test_from_env(self, monkeypatch):
        monkeypatch.setenv("SAMSVC_PORT", "9001")
        monkeypatch.setenv("SAMSVC_CHECKPOINT", "/models/x.pth")
        cfg = ServiceConfig.from_env()
        assert cfg.port == 9001 and cfg.checkpoint == "/models/x.pth"

    def test_missing_checkpoint_refuses_to_start(self):
        app = create_app(ServiceConfig(checkpoint="/nonexistent/weights.pth"))
        with pytest.raises(FileNotFoundError):
            with TestClient(app):
                pass

    def test_unconfigured_checkpoint_refuses_to_start(self):
        app = create_app(ServiceConfig())
        with pytest.raises(RuntimeError, match="checkpoint"):
            with TestClient(app):
                pass
