"""Worker HTTP service: capabilities, detect, and segment endpoints.

Stub mode answers from ground-truth fixture files with the exact semantics
the orchestrator's in-process mocks use, so the wire boundary can be
conformance-tested without any model weights. Real-model wrappers plug in
behind the same ``Inference`` interface.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol

from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .fixtures import FixtureStore
from .masks import filled_box_rle


class WeightsUnavailable(RuntimeError):
    """Raised at startup when a real-model mode lacks usable weights."""


class Inference(Protocol):
    def detect(self, fixture_key: str, width: int, height: int,
               classes: list[str], conf_threshold: float) -> list[dict]: ...

    def segment(self, fixture_key: str, width: int, height: int,
                boxes: list[list[int]], prompt: str | None) -> list[dict]: ...


class StubInference:
    """Fixture-driven inference, mirroring the orchestrator mocks:

    - detect filters fixture objects by requested classes (empty = all) and
      confidence threshold; instance ids renumber the matches from zero;
    - segment returns one mask per box in request order, using the fixture
      mask when the box matches an object exactly, else the filled box;
    - a class prompt (no boxes) masks every fixture object of that class.
    """

    def __init__(self, store: FixtureStore):
        self._store = store

    def detect(self, fixture_key, width, height, classes, conf_threshold):
        fixture = self._store.get(fixture_key)
        wanted = set(classes)
        matched = [
            obj
            for obj in fixture.get("objects", [])
            if obj["confidence"] >= conf_threshold
            and (not wanted or obj["class"] in wanted)
        ]
        return [
            {
                "instance_id": i,
                "class": obj["class"],
                "bbox": [int(v) for v in obj["bbox"]],
                "confidence": obj["confidence"],
            }
            for i, obj in enumerate(matched)
        ]

    def segment(self, fixture_key, width, height, boxes, prompt):
        fixture = self._store.get(fixture_key)
        objects = fixture.get("objects", [])
        masks = []
        if boxes:
            by_box = {tuple(int(v) for v in obj["bbox"]): obj for obj in objects}
            for i, box in enumerate(boxes):
                obj = by_box.get(tuple(int(v) for v in box))
                if obj is not None and obj.get("mask_rle") is not None:
                    rle = [int(r) for r in obj["mask_rle"]]
                    if sum(rle) != width * height:
                        raise ValueError(
                            f"fixture mask for {box} does not fit {width}x{height}"
                        )
                else:
                    x, y, w, h = (int(v) for v in box)
                    rle = filled_box_rle(x, y, w, h, width, height)
                masks.append(
                    {"instance_id": i, "width": width, "height": height, "rle": rle}
                )
        else:
            matched = [obj for obj in objects if obj["class"] == prompt]
            for i, obj in enumerate(matched):
                rle = obj.get("mask_rle")
                if rle is None or sum(int(r) for r in rle) != width * height:
                    x, y, w, h = (int(v) for v in obj["bbox"])
                    rle = filled_box_rle(x, y, w, h, width, height)
                masks.append(
                    {
                        "instance_id": i,
                        "width": width,
                        "height": height,
                        "rle": [int(r) for r in rle],
                    }
                )
        return masks


def load_real_inference(model_kind: str, weights: str | None) -> Inference:
    """Seam for real detector/segmenter wrappers (optional extras).

    Weights are never bundled; without a usable weights path this is a
    startup failure by design.
    """
    if not weights or not Path(weights).exists():
        raise WeightsUnavailable(
            f"{model_kind} mode needs --weights pointing at model weights; "
            f"install a model extra and download weights, or run --model stub"
        )
    raise WeightsUnavailable(
        f"no {model_kind} wrapper installed for weights at {weights!r}; "
        f"stub mode covers protocol testing without models"
    )


def descriptor_for(
    model_kind: str,
    name: str,
    store: FixtureStore,
    latency_cost: float = 1.0,
    reliability: float = 0.99,
) -> dict:
    if model_kind == "detect":
        classes = store.known_classes()
        vocabulary = {"open": not classes, "classes": classes}
        capabilities = ["detect"]
    elif model_kind == "segment":
        vocabulary = {"open": True, "classes": []}
        capabilities = ["segment"]
    else:
        vocabulary = {"open": True, "classes": []}
        capabilities = ["detect", "segment"]
    return {
        "name": name,
        "capabilities": capabilities,
        "vocabulary": vocabulary,
        "latency_cost": latency_cost,
        "reliability": reliability,
    }


def _image_key(image: dict) -> str:
    path = image.get("path")
    return Path(path).stem if path else ""


def create_app(descriptor: dict, inference: Inference) -> FastAPI:
    app = FastAPI(title=f"uvgpt worker: {descriptor['name']}")

    @app.get("/v1/capabilities")
    def capabilities():
        return JSONResponse(status_code=200, content=descriptor)

    @app.post("/v1/detect")
    def detect(body: dict = Body(...)):
        image = body.get("image") or {}
        if "width" not in image or "height" not in image:
            return _error(400, "BadRequest", "image needs width and height")
        detections = inference.detect(
            _image_key(image),
            int(image["width"]),
            int(image["height"]),
            list(body.get("classes") or ()),
            float(body.get("conf_threshold", 0.25)),
        )
        return JSONResponse(status_code=200, content={"detections": detections})

    @app.post("/v1/segment")
    def segment(body: dict = Body(...)):
        image = body.get("image") or {}
        if "width" not in image or "height" not in image:
            return _error(400, "BadRequest", "image needs width and height")
        boxes = list(body.get("boxes") or ())
        prompt = body.get("prompt")
        if not boxes and not prompt:
            return _error(400, "BadRequest", "segment needs boxes or a prompt")
        try:
            masks = inference.segment(
                _image_key(image),
                int(image["width"]),
                int(image["height"]),
                boxes,
                prompt,
            )
        except ValueError as exc:
            return _error(500, "FixtureError", str(exc))
        return JSONResponse(status_code=200, content={"masks": masks})

    return app


def _error(status: int, kind: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": kind, "detail": detail})


def build_app(
    model_kind: str = "stub",
    fixtures: str | Path = ".",
    name: str | None = None,
    latency_cost: float = 1.0,
    reliability: float = 0.99,
    weights: str | None = None,
) -> FastAPI:
    store = FixtureStore(fixtures)
    descriptor = descriptor_for(
        model_kind,
        name or f"{model_kind}-worker",
        store,
        latency_cost=latency_cost,
        reliability=reliability,
    )
    if model_kind == "stub":
        inference: Inference = StubInference(store)
    else:
        inference = load_real_inference(model_kind, weights)
    return create_app(descriptor, inference)
