import base64
import io

import numpy as np
import pytest
from fastapi.testclient import TestClient

import scpseg.features as F
from scpseg.pipeline import RunConfig
from scpseg.service import ServiceConfig, create_app


def _png_bytes(size=24, seed=0):
    from PIL import Image

    rng = np.random.Generator(np.random.PCG64([7, seed]))
    arr = np.full((size, size, 3), 60, np.float64)
    arr[:, size // 2 :] += 120.0
    arr[4:10, 4:10] = 200.0
    arr += rng.normal(0, 3, size=arr.shape)
    buf = io.BytesIO()
    Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8), "RGB").save(buf, "PNG")
    return buf.getvalue()


@pytest.fixture()
def client():
    cfg = ServiceConfig(
        size_cap=64,
        seed=0,
        run=RunConfig(
            n_s=60, k=8,
            feature=F.FeatureConfig(smoothing_sigma=1.0, texture_scale=1.0),
        ),
    )
    app = create_app(cfg)
    with TestClient(app) as client:
        yield client


def _create(client, size=24, seed=0):
    res = client.post(
        "/sessions", files={"image": ("img.png", _png_bytes(size, seed), "image/png")}
    )
    return res


def _scribbles(client, sid, add=(), remove=()):
    return client.post(
        f"/sessions/{sid}/scribbles",
        json={
            "add": [{"x": x, "y": y, "label": lab} for x, y, lab in add],
            "remove": [{"x": x, "y": y} for x, y in remove],
        },
    )


class TestSessions:
    def test_create_session(self, client):
        res = _create(client)
        assert res.status_code == 200
        body = res.json()
        assert set(body) == {"session", "width", "height"}
        assert body["width"] == 24 and body["height"] == 24

    def test_image_too_large_413(self, client):
        res = _create(client, size=80)
        assert res.status_code == 413
        assert res.json()["code"] == "image_too_large"

    def test_unsupported_format_415(self, client):
        res = client.post(
            "/sessions", files={"image": ("x.bin", b"garbage-bytes", "text/plain")}
        )
        assert res.status_code == 415

    def test_two_uploads_two_sessions(self, client):
        a = _create(client).json()["session"]
        b = _create(client).json()["session"]
        assert a != b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/deadbeef").status_code == 404
        assert client.post("/sessions/deadbeef/segment", json={}).status_code == 404

    def test_delete(self, client):
        sid = _create(client).json()["session"]
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.get(f"/sessions/{sid}").status_code == 404


class TestScribbles:
    def test_add_increments_revision(self, client):
        sid = _create(client).json()["session"]
        res = _scribbles(
            client, sid,
            add=[(5, 5, "object"), (6, 6, "object"), (7, 7, "object"),
                 (1, 1, "background"), (2, 1, "background"), (22, 22, "background")],
        )
        assert res.status_code == 200
        assert res.json()["revision"] == 1
        state = client.get(f"/sessions/{sid}").json()
        assert state["scribble_count"] == 6
        assert state["revision"] == 1

    def test_removal_is_idempotent_but_bumps_revision(self, client):
        sid = _create(client).json()["session"]
        _scribbles(client, sid, add=[(5, 5, "object")])
        res = _scribbles(client, sid, remove=[(9, 9)])  # not present
        assert res.json()["revision"] == 2
        state = client.get(f"/sessions/{sid}").json()
        assert state["scribble_count"] == 1

    def test_pixel_out_of_range_400(self, client):
        sid = _create(client).json()["session"]
        res = _scribbles(client, sid, add=[(99, 0, "object")])
        assert res.status_code == 400

    def test_scribbles_echoed_in_state(self, client):
        sid = _create(client).json()["session"]
        _scribbles(client, sid, add=[(5, 6, "object")])
        state = client.get(f"/sessions/{sid}").json()
        assert state["scribbles"] == [{"x": 5, "y": 6, "label": "object"}]


class TestCorsAndStatic:
    def test_cors_headers_present(self, client):
        res = client.options(
            "/sessions",
            headers={
                "Origin": "http://localhost:5173",
                "Access-Control-Request-Method": "POST",
            },
        )
        assert res.headers.get("access-control-allow-origin") == "*"

    def test_static_ui_served_when_configured(self, tmp_path):
        (tmp_path / "index.html").write_text("<html><body>ui</body></html>")
        app = create_app(ServiceConfig(ui_dir=str(tmp_path)))
        with TestClient(app) as c:
            res = c.get("/")
            assert res.status_code == 200
            assert "ui" in res.text


class TestSegment:
    def test_zero_scribbles_falls_back_to_plain_ncut(self, client):
        sid = _create(client).json()["session"]
        res = client.post(f"/sessions/{sid}/segment", json={})
        assert res.status_code == 200
        body = res.json()
        assert body["method"] == "ncut"
        assert body["revision"] == 0
        mask = base64.b64decode(body["mask_png_base64"])
        assert mask[:8] == b"\x89PNG\r\n\x1a\n"

    def test_result_tagged_with_current_revision(self, client):
        sid = _create(client).json()["session"]
        _scribbles(
            client, sid,
            add=[(5, 5, "object"), (6, 6, "object"),
                 (1, 1, "background"), (20, 20, "background")],
        )
        res = client.post(f"/sessions/{sid}/segment", json={}).json()
        assert res["revision"] == 1
        assert res["method"] == "ncut_scp"
        state = client.get(f"/sessions/{sid}").json()
        assert state["last_result_revision"] == 1

    def test_repeat_segment_bit_identical(self, client):
        sid = _create(client).json()["session"]
        _scribbles(
            client, sid,
            add=[(5, 5, "object"), (6, 6, "object"),
                 (1, 1, "background"), (20, 20, "background")],
        )
        a = client.post(f"/sessions/{sid}/segment", json={}).json()
        b = client.post(f"/sessions/{sid}/segment", json={}).json()
        assert a["mask_png_base64"] == b["mask_png_base64"]
        assert a["ncut_value"] == b["ncut_value"]

    def test_graph_built_once_across_segments(self, client):
        sid = _create(client).json()["session"]
        client.post(f"/sessions/{sid}/segment", json={})
        _scribbles(client, sid, add=[(5, 5, "object"), (1, 1, "background")])
        client.post(f"/sessions/{sid}/segment", json={})
        state = client.get(f"/sessions/{sid}").json()
        assert state["graph_builds"] == 1

    def test_params_override(self, client):
        sid = _create(client).json()["session"]
        res = client.post(
            f"/sessions/{sid}/segment", json={"params": {"method": "ncut", "k_regions": 2}}
        )
        assert res.status_code == 200
        assert res.json()["method"] == "ncut"

    def test_staleness_workflow(self, client):
        sid = _create(client).json()["session"]
        _scribbles(client, sid, add=[(5, 5, "object"), (1, 1, "background")])
        first = client.post(f"/sessions/{sid}/segment", json={}).json()
        assert first["revision"] == 1
        _scribbles(client, sid, add=[(6, 6, "object")])
        state = client.get(f"/sessions/{sid}").json()
        assert state["revision"] == 2
        assert state["last_result_revision"] == 1  # stale
        fresh = client.post(f"/sessions/{sid}/segment", json={}).json()
        assert fresh["revision"] == 2


class TestParamValidation:
    def test_unknown_param_key_rejected(self, client):
        sid = _create(client).json()["session"]
        res = client.post(
            f"/sessions/{sid}/segment", json={"params": {"bogus_knob": 3}}
        )
        assert res.status_code == 400
        assert "bogus_knob" in res.json()["message"]
