"""Both HTTP surfaces end to end: the generalized prompt API and the
specific labelObjects-style API, served over mock workers.

Run: python3 demos/07_gateway_api.py
"""

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from uvgpt.config import Settings
from uvgpt.gateway import create_app
from uvgpt.pipeline import Orchestrator
from uvgpt.registry import Capability, ModelDescriptor, Registry, Vocabulary
from uvgpt.testing import SceneObject, build_scene, write_scene
from uvgpt.types import BBox
from uvgpt.workers import TruthStore, mock_backends

workdir = Path(tempfile.mkdtemp(prefix="uvgpt-demo-"))

# Two scenes on disk with ground-truth sidecars, like a worker would see.
for stem, objects in {
    "street": [SceneObject("dog", BBox(6, 8, 20, 14), 0.92)],
    "market": [SceneObject("lemon", BBox(10, 10, 12, 12), 0.88),
               SceneObject("lemon", BBox(30, 12, 10, 10), 0.81)],
}.items():
    image, truth = build_scene(64, 44, objects)
    write_scene(workdir, stem, image, truth)

registry = Registry([
    ModelDescriptor("mock-detector", frozenset({Capability.DETECT}),
                    Vocabulary.open_vocab(), 1.0, 0.99),
    ModelDescriptor("mock-segmenter", frozenset({Capability.SEGMENT}),
                    Vocabulary.open_vocab(), 1.0, 0.99),
])
backends = mock_backends(registry, TruthStore(directory=workdir))
orchestrator = Orchestrator(registry, backends, settings=Settings())
client = TestClient(create_app(orchestrator, workdir / "out"))

# Generalized API: prompt + images, options control integration and plan dump
resp = client.post("/v1/process", json={
    "prompt": "Find dogs and lemons in the images and then highlight them only",
    "images": [{"path": str(workdir / "street.ppm")},
               {"path": str(workdir / "market.ppm")}],
    "options": {"dump_plan": True},
})
body = resp.json()
print("POST /v1/process ->", resp.status_code)
for entry in body["results"]:
    dets = [(d["class"], d["bbox"]) for d in entry["result"]["detections"]]
    print(f"   {entry['image']}: {dets} -> {entry['annotated']}")
print("   integrated:", body["integrated"])
print("   plan verbs:", [t["verb"] for t in body["plan"]["tasks"]])
print("   trace:", body["trace"])

# Specific API: labelObjects(<object name>, <image location>) equivalent
resp = client.post("/v1/label", json={
    "object_name": "lemon",
    "image_location": str(workdir / "market.ppm"),
})
print()
print("POST /v1/label ->", resp.status_code)
print(json.dumps(resp.json()["results"][0]["result"]["detections"], indent=2))

# The two surfaces are the same pipeline: identical results either way
via_process = client.post("/v1/process", json={
    "prompt": "find all lemon",
    "images": [{"path": str(workdir / "market.ppm")}],
}).json()["results"][0]["result"]
via_label = resp.json()["results"][0]["result"]
print()
print("label == process('find all lemon'):",
      json.dumps(via_label, sort_keys=True) == json.dumps(via_process, sort_keys=True))
