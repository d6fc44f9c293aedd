"""Worker-side unit tests: endpoint behavior without the orchestrator."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from uvgpt_worker.cli import main
from uvgpt_worker.fixtures import FixtureStore
from uvgpt_worker.masks import encode_bitmap, filled_box_rle
from uvgpt_worker.service import StubInference, build_app, create_app, descriptor_for


@pytest.fixture
def fixture_dir(tmp_path):
    truth = {
        "objects": [
            {"class": "dog", "bbox": [2, 2, 6, 6], "confidence": 0.9},
            {"class": "cat", "bbox": [10, 10, 4, 4], "confidence": 0.2,
             "mask_rle": [0, 256]},
        ]
    }
    (tmp_path / "scene0.truth.json").write_text(json.dumps(truth))
    return tmp_path


@pytest.fixture
def client(fixture_dir):
    return TestClient(build_app(model_kind="stub", fixtures=fixture_dir))


def image(w=16, h=16, stem="scene0"):
    return {"path": f"/data/{stem}.ppm", "width": w, "height": h}


class TestMasks:
    def test_encode_bitmap_leading_foreground(self):
        assert encode_bitmap([1, 1, 1, 1]) == [0, 4]
        assert encode_bitmap([0, 1, 0, 1]) == [1, 1, 1, 1]

    def test_filled_box_rle_clips_to_frame(self):
        rle = filled_box_rle(2, 2, 4, 4, 16, 16)
        assert sum(rle) == 256
        assert sum(rle[1::2]) == 16
        clipped = filled_box_rle(14, 14, 6, 6, 16, 16)
        assert sum(clipped[1::2]) == 4


class TestCapabilities:
    def test_stub_advertises_both_verbs(self, client):
        body = client.get("/v1/capabilities").json()
        assert body["capabilities"] == ["detect", "segment"]
        assert body["vocabulary"]["open"] is True

    def test_detect_worker_lists_fixed_vocabulary(self, fixture_dir):
        descriptor = descriptor_for(
            "detect", "det-worker", FixtureStore(fixture_dir)
        )
        app = create_app(descriptor, StubInference(FixtureStore(fixture_dir)))
        body = TestClient(app).get("/v1/capabilities").json()
        assert body["capabilities"] == ["detect"]
        assert body["vocabulary"] == {"open": False, "classes": ["cat", "dog"]}


class TestDetect:
    def test_filter_and_threshold(self, client):
        body = client.post(
            "/v1/detect",
            json={"image": image(), "classes": ["dog"], "conf_threshold": 0.25},
        ).json()
        assert body == {
            "detections": [
                {"instance_id": 0, "class": "dog", "bbox": [2, 2, 6, 6],
                 "confidence": 0.9}
            ]
        }

    def test_open_pass(self, client):
        body = client.post(
            "/v1/detect", json={"image": image(), "conf_threshold": 0.1}
        ).json()
        assert [d["class"] for d in body["detections"]] == ["dog", "cat"]

    def test_unknown_image_is_empty(self, client):
        body = client.post(
            "/v1/detect", json={"image": image(stem="nowhere")}
        ).json()
        assert body == {"detections": []}

    def test_missing_dimensions_400(self, client):
        resp = client.post("/v1/detect", json={"image": {"path": "x.ppm"}})
        assert resp.status_code == 400


class TestSegment:
    def test_box_fallback_fill(self, client):
        body = client.post(
            "/v1/segment", json={"image": image(), "boxes": [[0, 0, 4, 4]]}
        ).json()
        mask = body["masks"][0]
        assert sum(mask["rle"][1::2]) == 16
        assert mask["instance_id"] == 0

    def test_exact_box_uses_fixture_mask(self, client):
        body = client.post(
            "/v1/segment", json={"image": image(), "boxes": [[10, 10, 4, 4]]}
        ).json()
        assert body["masks"][0]["rle"] == [0, 256]

    def test_prompt_path(self, client):
        body = client.post(
            "/v1/segment", json={"image": image(), "prompt": "dog"}
        ).json()
        assert len(body["masks"]) == 1
        assert sum(body["masks"][0]["rle"][1::2]) == 36

    def test_needs_boxes_or_prompt(self, client):
        resp = client.post("/v1/segment", json={"image": image()})
        assert resp.status_code == 400

    def test_bad_fixture_mask_is_error_body(self, client):
        # the cat fixture mask sums to 256; a 8x8 frame cannot hold it
        resp = client.post(
            "/v1/segment", json={"image": image(8, 8), "boxes": [[10, 10, 4, 4]]}
        )
        assert resp.status_code == 500
        assert resp.json()["error"] == "FixtureError"


class TestRealModes:
    def test_detect_mode_without_weights_fails_at_startup(self, fixture_dir):
        rc = main(["serve", "--model", "detect", "--fixtures", str(fixture_dir)])
        assert rc == 2

    def test_unknown_model_kind_is_usage_error(self, fixture_dir):
        rc = main(["serve", "--model", "nope", "--fixtures", str(fixture_dir)])
        assert rc == 1
