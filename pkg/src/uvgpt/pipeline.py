"""End-to-end wiring: prompt + images -> parse -> plan -> select -> execute.

The gateway service and the CLI are thin layers over this module; tests use
it directly with in-process mock backends.
"""

from __future__ import annotations

import base64
import dataclasses
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .config import Settings
from .engine import LoadedImage, RetryPolicy, execute
from .errors import UnsupportedFormat
from .parsing import SemanticResolver, default_resolver, parse
from .planning import plan
from .protocol import WorkerBackend, WorkerEndpoint
from .raster import RasterImage, decode_ppm, encode_ppm
from .registry import (
    Assignment,
    Capability,
    ModelDescriptor,
    PlanScore,
    Registry,
    Vocabulary,
    select,
)
from .types import (
    ExecutionTrace,
    ImageRef,
    SceneResult,
    TaskPlan,
    canonical_json,
)

VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}


@dataclass(frozen=True)
class PipelineResult:
    plan: TaskPlan
    assignment: Assignment
    score: PlanScore
    scene: SceneResult
    trace: ExecutionTrace


class Orchestrator:
    """Stateless-per-request pipeline over a shared registry and backends."""

    def __init__(
        self,
        registry: Registry,
        backends: Mapping[str, WorkerBackend],
        resolver: SemanticResolver | None = None,
        settings: Settings | None = None,
    ):
        self.registry = registry
        self.backends = dict(backends)
        self.resolver = resolver or default_resolver()
        self.settings = settings or Settings()

    def prepare(
        self,
        prompt: str,
        images: Sequence[LoadedImage],
        integrate: bool | None = None,
    ) -> TaskPlan:
        intents = parse(prompt, self.resolver)
        return plan(
            intents,
            [im.ref for im in images],
            integrate=self.settings.integrate if integrate is None else integrate,
        )

    def execute_plan(
        self,
        task_plan: TaskPlan,
        images: Sequence[LoadedImage],
        conf_threshold: float | None = None,
    ) -> PipelineResult:
        settings = self.settings
        if conf_threshold is not None:
            settings = dataclasses.replace(settings, conf_threshold=conf_threshold)
        assignment, score = select(task_plan, self.registry, settings.weights)
        scene, trace = execute(
            task_plan,
            assignment,
            self.registry,
            self.backends,
            RetryPolicy(max_attempts=settings.max_attempts),
            images=images,
            resolver=self.resolver,
            settings=settings,
        )
        return PipelineResult(
            plan=task_plan, assignment=assignment, score=score, scene=scene, trace=trace
        )

    def process(
        self,
        prompt: str,
        images: Sequence[LoadedImage],
        integrate: bool | None = None,
        conf_threshold: float | None = None,
    ) -> PipelineResult:
        task_plan = self.prepare(prompt, images, integrate)
        return self.execute_plan(task_plan, images, conf_threshold)

    def label(self, object_name: str, image: LoadedImage) -> PipelineResult:
        """Specific-API shim: identical to processing "find all <name>"."""
        return self.process(f"find all {object_name}", [image])


# ---------------------------------------------------------------------------
# image loading


def raster_to_ref(stem: str, raster: RasterImage) -> LoadedImage:
    return LoadedImage(
        ref=ImageRef(stem, raster.width, raster.height), raster=raster
    )


def load_image_bytes(name: str, data: bytes) -> LoadedImage:
    """Decode PPM natively, PNG via the boundary adapter; reject video."""
    suffix = Path(name).suffix.lower()
    if suffix in VIDEO_SUFFIXES:
        raise UnsupportedFormat(f"video inputs are not supported: {name}")
    if suffix == ".png":
        raster = _decode_png(data)
    else:
        raster = decode_ppm(data)
    return raster_to_ref(Path(name).stem, raster)


def load_image_file(path: str | Path) -> LoadedImage:
    path = Path(path)
    return load_image_bytes(path.name, path.read_bytes())


def _decode_png(data: bytes) -> RasterImage:
    from PIL import Image
    import numpy as np

    with Image.open(io.BytesIO(data)) as img:
        return RasterImage(np.asarray(img.convert("RGB"), dtype=np.uint8))


# ---------------------------------------------------------------------------
# output manifest


def write_outputs(
    result: PipelineResult,
    out_dir_for: Mapping[str, Path] | Path,
    inline: bool = False,
) -> dict:
    """Write `<stem>.annotated.ppm` + `<stem>.result.json` per image and
    return the manifest. ``out_dir_for`` maps image id -> directory, or is a
    single directory for all outputs."""
    manifest: dict = {"results": []}
    scene = result.scene
    for index, image_result in enumerate(scene.images):
        image_id = image_result.image.id
        directory = (
            out_dir_for if isinstance(out_dir_for, Path) else out_dir_for[image_id]
        )
        directory.mkdir(parents=True, exist_ok=True)
        entry: dict = {"image": image_id}
        result_payload = scene.result_dict(index)
        result_path = directory / f"{image_id}.result.json"
        result_path.write_text(canonical_json(result_payload) + "\n", encoding="utf-8")
        entry["result"] = result_payload
        entry["result_path"] = str(result_path)
        if image_result.rendered is not None:
            annotated_path = directory / f"{image_id}.annotated.ppm"
            data = encode_ppm(image_result.rendered)
            annotated_path.write_bytes(data)
            entry["annotated"] = str(annotated_path)
            if inline:
                entry["annotated_b64"] = base64.b64encode(data).decode("ascii")
        manifest["results"].append(entry)

    if scene.integrated is not None:
        directory = (
            out_dir_for
            if isinstance(out_dir_for, Path)
            else next(iter(out_dir_for.values()))
        )
        integrated_path = directory / "integrated.annotated.ppm"
        data = encode_ppm(scene.integrated)
        integrated_path.write_bytes(data)
        manifest["integrated"] = str(integrated_path)
        if inline:
            manifest["integrated_b64"] = base64.b64encode(data).decode("ascii")
    return manifest


# ---------------------------------------------------------------------------
# defaults for fixture-driven runs (CLI without UVGPT_WORKERS)


def default_mock_registry() -> Registry:
    return Registry(
        [
            ModelDescriptor(
                name="mock-detector",
                capabilities=frozenset({Capability.DETECT}),
                vocabulary=Vocabulary.open_vocab(),
                latency_cost=1.0,
                reliability=0.99,
            ),
            ModelDescriptor(
                name="mock-segmenter",
                capabilities=frozenset({Capability.SEGMENT}),
                vocabulary=Vocabulary.open_vocab(),
                latency_cost=1.0,
                reliability=0.99,
            ),
        ]
    )


def load_endpoints(path: str | Path) -> list[WorkerEndpoint]:
    """Endpoint list file: JSON [{"name", "base_url", "timeout_ms"?}]."""
    import json

    entries = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        WorkerEndpoint(
            name=e["name"],
            base_url=e["base_url"],
            timeout_ms=int(e.get("timeout_ms", 5000)),
        )
        for e in entries
    ]
