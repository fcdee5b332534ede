import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from glyphscribe.segmentation import SegmentationConfig
from glyphscribe.service import ServiceConfig, create_app
from glyphscribe.synthetic import compose_page
from glyphscribe.transcription import parse_csv


def _png_bytes(array):
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return buf.getvalue()


PAGE_COLUMNS = [["circle", "cross", "bar_h"], ["square", "ring", "zigzag"]]


@pytest.fixture(scope="module")
def page():
    return compose_page(PAGE_COLUMNS, glyph_size=40, seed=21)


@pytest.fixture(scope="module")
def client(model_dir, tmp_path_factory):
    config = ServiceConfig(
        model_dir=str(model_dir),
        segmentation=SegmentationConfig(min_area=30, min_dim=3, max_dim=80),
        max_image_bytes=1024 * 1024,
    )
    app = create_app(config)
    with TestClient(app) as c:
        yield c


def _create(client, page_array, metadata=None):
    response = client.post(
        "/sessions",
        files={"image": ("page.png", _png_bytes(page_array), "image/png")},
        data={"metadata": json.dumps(metadata or {"support": "B1Bo", "spell": "CT-1"})},
    )
    return response


def _full_roi(page_array):
    h, w = page_array.shape
    return [0, 0, w, h]


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_create_session_returns_hex_id(client, page):
    response = _create(client, page[0])
    assert response.status_code == 200
    sid = response.json()["session_id"]
    assert len(sid) == 32 and all(c in "0123456789abcdef" for c in sid)


def test_create_session_ids_distinct(client, page):
    a = _create(client, page[0]).json()["session_id"]
    b = _create(client, page[0]).json()["session_id"]
    assert a != b


def test_create_session_rejects_truncated_bytes(client):
    response = client.post("/sessions",
                           files={"image": ("x.png", b"\x89PNG garbage", "image/png")},
                           data={"metadata": "{}"})
    assert response.status_code == 400
    body = response.json()
    assert body["error"] == "bad_request" and "decode" in body["detail"]


def test_create_session_rejects_oversize(client, rng):
    big = (rng.random((1400, 1400)) * 255).astype(np.uint8)  # noisy PNG > 1 MiB
    response = client.post("/sessions",
                           files={"image": ("big.png", _png_bytes(big), "image/png")},
                           data={"metadata": "{}"})
    assert response.status_code == 413
    assert response.json()["error"] == "payload_too_large"


def test_segment_blank_margin_is_empty(client, page):
    page_array, _ = page
    sid = _create(client, page_array).json()["session_id"]
    w = page_array.shape[1]
    response = client.post(f"/sessions/{sid}/segment", json={"roi": [0, 0, w, 20]})
    assert response.status_code == 200
    assert response.json()["glyphs"] == []


def test_segment_translates_boxes_to_facsimile_space(client, page):
    page_array, truth = page
    sid = _create(client, page_array).json()["session_id"]
    x0, y0 = 20, 10
    h, w = page_array.shape
    roi = [x0, y0, w, h]
    glyphs = client.post(f"/sessions/{sid}/segment", json={"roi": roi}).json()["glyphs"]
    assert len(glyphs) == 6
    by_column_then_y = lambda b: (b[0] // 60, b[1])
    truth_boxes = sorted((b for _, b in truth), key=by_column_then_y)
    got_boxes = sorted((tuple(g["bbox"]) for g in glyphs), key=by_column_then_y)
    for (gx0, gy0, gx1, gy1), (tx0, ty0, tx1, ty1) in zip(got_boxes, truth_boxes):
        assert tx0 - 3 <= gx0 and gx1 <= tx1 + 3
        assert ty0 - 3 <= gy0 and gy1 <= ty1 + 3
        assert 0 <= gx0 < gx1 <= w and 0 <= gy0 < gy1 <= h


def test_segment_zero_area_roi_rejected(client, page):
    sid = _create(client, page[0]).json()["session_id"]
    response = client.post(f"/sessions/{sid}/segment", json={"roi": [10, 10, 10, 50]})
    assert response.status_code == 400


def test_segment_out_of_bounds_roi_suggests_clamp(client, page):
    sid = _create(client, page[0]).json()["session_id"]
    h, w = page[0].shape
    response = client.post(f"/sessions/{sid}/segment", json={"roi": [-5, 0, w + 99, h]})
    assert response.status_code == 400
    detail = response.json()["detail"]
    assert "clamped" in detail and f"[0, 0, {w}, {h}]" in detail


def test_unknown_session_404(client):
    response = client.post("/sessions/deadbeef/segment", json={"roi": [0, 0, 5, 5]})
    assert response.status_code == 404
    assert response.json()["error"] == "not_found"


def test_classify_empty_session(client, page):
    sid = _create(client, page[0]).json()["session_id"]
    response = client.post(f"/sessions/{sid}/classify", json={})
    assert response.status_code == 200
    assert response.json()["predictions"] == []
    assert response.json()["backend"] == "deep_mml"


def _segmented_session(client, page_array):
    sid = _create(client, page_array).json()["session_id"]
    client.post(f"/sessions/{sid}/segment", json={"roi": _full_roi(page_array)})
    return sid


def test_classify_all_backends(client, page):
    sid = _segmented_session(client, page[0])
    for backend in ("deep_mml", "trad_ml", "cnn_end2end"):
        response = client.post(f"/sessions/{sid}/classify", json={"backend": backend})
        assert response.status_code == 200, response.text
        preds = response.json()["predictions"]
        assert len(preds) == 6
        for p in preds:
            assert p["code"] and p["latency_ms"] is not None


def test_classify_idempotent(client, page):
    sid = _segmented_session(client, page[0])
    a = client.post(f"/sessions/{sid}/classify", json={"backend": "deep_mml"}).json()
    b = client.post(f"/sessions/{sid}/classify", json={"backend": "deep_mml"}).json()
    assert [p["code"] for p in a["predictions"]] == [p["code"] for p in b["predictions"]]
    assert [p["confidence"] for p in a["predictions"]] == [p["confidence"] for p in b["predictions"]]


def test_classify_unknown_backend(client, page):
    sid = _segmented_session(client, page[0])
    response = client.post(f"/sessions/{sid}/classify", json={"backend": "oracle"})
    assert response.status_code == 400


def test_missing_model_file_gives_503(page, tmp_path):
    config = ServiceConfig(model_dir=str(tmp_path / "nowhere"))
    with TestClient(create_app(config)) as bare:
        sid = _create(bare, page[0]).json()["session_id"]
        bare.post(f"/sessions/{sid}/segment", json={"roi": [0, 0, 60, 60]})
        response = bare.post(f"/sessions/{sid}/classify", json={"backend": "deep_mml"})
        assert response.status_code == 503
        assert "encoder.npz" in response.json()["detail"]


def test_corrections_and_reclassify_preserves_them(client, page):
    sid = _segmented_session(client, page[0])
    client.post(f"/sessions/{sid}/classify", json={"backend": "deep_mml"})
    glyph_id = client.post(f"/sessions/{sid}/classify", json={}).json()["predictions"][0]["glyph_id"]
    response = client.post(f"/sessions/{sid}/corrections",
                           json={"corrections": [{"glyph_id": glyph_id, "code": "Z9"}]})
    assert response.status_code == 200
    # corrected prediction survives a re-run with another backend
    after = client.post(f"/sessions/{sid}/classify", json={"backend": "cnn_end2end"}).json()
    by_id = {p["glyph_id"]: p for p in after["predictions"]}
    assert by_id[glyph_id]["code"] == "Z9"


def test_corrections_validate_ids_and_codes(client, page):
    sid = _segmented_session(client, page[0])
    client.post(f"/sessions/{sid}/classify", json={})
    response = client.post(f"/sessions/{sid}/corrections",
                           json={"corrections": [{"glyph_id": "g9999", "code": "A1"}]})
    assert response.status_code == 400 and "g9999" in response.json()["detail"]
    glyph_id = client.post(f"/sessions/{sid}/classify", json={}).json()["predictions"][0]["glyph_id"]
    response = client.post(f"/sessions/{sid}/corrections",
                           json={"corrections": [{"glyph_id": glyph_id, "code": "1X"}]})
    assert response.status_code == 400 and "1X" in response.json()["detail"]


def test_export_requires_classification(client, page):
    sid = _segmented_session(client, page[0])
    response = client.get(f"/sessions/{sid}/export.csv")
    assert response.status_code == 400
    assert "classify" in response.json()["detail"]


def test_export_round_trip_and_correction_changes_one_token(client, page):
    page_array, _ = page
    sid = _segmented_session(client, page_array)
    preds = client.post(f"/sessions/{sid}/classify", json={}).json()["predictions"]
    before = parse_csv(client.get(f"/sessions/{sid}/export.csv").content)
    assert before  # valid CSV with records
    statuses = {r.review_status for r in before}
    assert statuses == {"auto"}

    # correct exactly one glyph to a code not present anywhere
    target = preds[0]["glyph_id"]
    client.post(f"/sessions/{sid}/corrections",
                json={"corrections": [{"glyph_id": target, "code": "Z99"}]})
    after = parse_csv(client.get(f"/sessions/{sid}/export.csv").content)
    assert len(after) == len(before)
    changed = [(a, b) for a, b in zip(before, after) if a.mdc != b.mdc]
    assert len(changed) == 1
    assert "Z99" in changed[0][1].mdc
    assert changed[0][1].review_status == "corrected"


def test_full_flow_headless(client, page):
    page_array, truth = page
    response = _create(client, page_array, {"support": "pyramidW", "spell": "PT-23"})
    sid = response.json()["session_id"]
    h, w = page_array.shape
    glyphs = client.post(f"/sessions/{sid}/segment", json={"roi": [0, 0, w, h]}).json()["glyphs"]
    assert len(glyphs) == len(truth)
    preds = client.post(f"/sessions/{sid}/classify", json={}).json()["predictions"]
    assert all(p["code"] for p in preds)
    client.post(f"/sessions/{sid}/corrections",
                json={"corrections": [{"glyph_id": preds[0]["glyph_id"], "code": "A1"}]})
    export = client.get(f"/sessions/{sid}/export.csv")
    assert export.status_code == 200
    records = parse_csv(export.content)
    assert records
    assert all(r.support == "pyramidW" and r.spell == "PT-23" for r in records)
    columns = {r.column_label for r in records}
    assert columns == {"col00", "col01"}


def test_env_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("GLYPHSCRIBE_MODEL_DIR", str(tmp_path))
    monkeypatch.setenv("GLYPHSCRIBE_PORT", "9999")
    config = ServiceConfig().with_env_overrides()
    assert config.model_dir == str(tmp_path)
    assert config.port == 9999


def test_config_file_round_trip(tmp_path):
    doc = {
        "model_dir": "m", "port": 8123,
        "segmentation": {"window": 21, "min_area": 10},
        "geometry": {"stack_gap": 0.3},
        "exclude_codes": ["N"],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    config = ServiceConfig.from_file(path)
    assert config.port == 8123
    assert config.segmentation.window == 21
    assert config.geometry.stack_gap == 0.3
