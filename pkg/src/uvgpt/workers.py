"""Backends: fixture-driven in-process mocks and the HTTP worker client."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable, Mapping

import requests

from .errors import DescriptorMismatch, MaskFrameMismatch, Unreachable, WorkerTimeout
from .masks import box_as_mask
from .protocol import (
    CAPABILITIES_SCHEMA,
    DETECT_RESPONSE_SCHEMA,
    SEGMENT_RESPONSE_SCHEMA,
    DetectRequest,
    DetectResponse,
    SegmentRequest,
    SegmentResponse,
    TruthFixture,
    WorkerEndpoint,
    load_truth,
    validate_message,
)
from .registry import ModelDescriptor, Registry
from .types import Detection, InstanceMask

FAULTY_ENV_VAR = "UVGPT_FAULTY_WORKERS"


class TruthStore:
    """Lazy image-key -> TruthFixture lookup over directories and/or a dict."""

    def __init__(
        self,
        fixtures: Mapping[str, TruthFixture] | None = None,
        directory: str | Path | Iterable[str | Path] | None = None,
    ):
        self._fixtures = dict(fixtures or {})
        if directory is None:
            self._directories: list[Path] = []
        elif isinstance(directory, (str, Path)):
            self._directories = [Path(directory)]
        else:
            self._directories = [Path(d) for d in directory]

    def get(self, key: str) -> TruthFixture:
        if key in self._fixtures:
            return self._fixtures[key]
        for directory in self._directories:
            candidate = directory / f"{key}.truth.json"
            if candidate.exists():
                fixture = load_truth(candidate)
                self._fixtures[key] = fixture
                return fixture
        return TruthFixture()

    def put(self, key: str, fixture: TruthFixture) -> None:
        self._fixtures[key] = fixture


class MockWorker:
    """Deterministic fixture-driven worker; a pure function of
    (fixture, request). ``faulty`` mode returns empty detections, the test
    double for a backend that picks nothing up."""

    def __init__(
        self,
        descriptor: ModelDescriptor,
        truth: TruthStore,
        faulty: bool = False,
    ):
        self._descriptor = descriptor
        self._truth = truth
        self._faulty = faulty

    def capabilities(self) -> ModelDescriptor:
        return self._descriptor

    def detect(self, request: DetectRequest) -> DetectResponse:
        if self._faulty:
            return DetectResponse(detections=())
        fixture = self._truth.get(request.image.key)
        wanted = set(request.classes)
        matched = [
            obj
            for obj in fixture.objects
            if obj.confidence >= request.conf_threshold
            and (not wanted or obj.class_label in wanted)
        ]
        detections = tuple(
            Detection(
                instance_id=i,
                class_label=obj.class_label,
                bbox=obj.bbox,
                confidence=obj.confidence,
            )
            for i, obj in enumerate(matched)
        )
        return DetectResponse(detections=detections)

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        fixture = self._truth.get(request.image.key)
        width, height = request.image.width, request.image.height
        masks: list[InstanceMask] = []
        if request.boxes:
            by_box = {obj.bbox: obj for obj in fixture.objects}
            for i, box in enumerate(request.boxes):
                obj = by_box.get(box)
                if obj is not None and obj.mask_rle is not None:
                    if sum(obj.mask_rle) != width * height:
                        raise MaskFrameMismatch(
                            f"fixture mask for {box} does not fit {width}x{height}"
                        )
                    masks.append(
                        InstanceMask(
                            instance_id=i, width=width, height=height, rle=obj.mask_rle
                        )
                    )
                else:
                    masks.append(box_as_mask(box, width, height, instance_id=i))
        else:
            # class-prompt path for prompt-driven segmenters
            matched = [
                obj for obj in fixture.objects if obj.class_label == request.prompt
            ]
            for i, obj in enumerate(matched):
                if obj.mask_rle is not None and sum(obj.mask_rle) == width * height:
                    masks.append(
                        InstanceMask(
                            instance_id=i, width=width, height=height, rle=obj.mask_rle
                        )
                    )
                else:
                    masks.append(box_as_mask(obj.bbox, width, height, instance_id=i))
        return SegmentResponse(masks=tuple(masks))


class HttpWorkerBackend:
    """Client for a remote worker speaking the JSON-over-HTTP protocol."""

    def __init__(self, endpoint: WorkerEndpoint, session: requests.Session | None = None):
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self._timeout = endpoint.timeout_ms / 1000.0

    def _url(self, suffix: str) -> str:
        return self.endpoint.base_url.rstrip("/") + suffix

    def _request(self, method: str, suffix: str, payload: dict | None = None) -> dict:
        try:
            if method == "GET":
                response = self._session.get(self._url(suffix), timeout=self._timeout)
            else:
                response = self._session.post(
                    self._url(suffix), json=payload, timeout=self._timeout
                )
        except requests.Timeout as exc:
            raise WorkerTimeout(f"{self.endpoint.name}: {suffix} timed out") from exc
        except requests.ConnectionError as exc:
            raise Unreachable(f"{self.endpoint.name}: {exc}") from exc
        if response.status_code != 200:
            raise Unreachable(
                f"{self.endpoint.name}: {suffix} returned HTTP {response.status_code}"
            )
        return response.json()

    def capabilities(self) -> ModelDescriptor:
        payload = self._request("GET", "/v1/capabilities")
        validate_message(payload, CAPABILITIES_SCHEMA, "capabilities")
        return ModelDescriptor.from_dict(payload)

    def detect(self, request: DetectRequest) -> DetectResponse:
        payload = self._request("POST", "/v1/detect", request.to_dict())
        validate_message(payload, DETECT_RESPONSE_SCHEMA, "detect response")
        return DetectResponse.from_dict(payload)

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        payload = self._request("POST", "/v1/segment", request.to_dict())
        validate_message(payload, SEGMENT_RESPONSE_SCHEMA, "segment response")
        return SegmentResponse.from_dict(payload)


def check_capabilities(backend, expected: ModelDescriptor) -> None:
    """Startup check: worker-advertised identity must match the registry.

    Cost fields (latency/reliability) are registry-owned tuning knobs and may
    differ from what the worker self-reports.
    """
    advertised = backend.capabilities()
    if (
        advertised.name != expected.name
        or advertised.capabilities != expected.capabilities
        or advertised.vocabulary != expected.vocabulary
    ):
        raise DescriptorMismatch(
            f"worker {advertised.name!r} advertises "
            f"{sorted(c.value for c in advertised.capabilities)} / "
            f"{advertised.vocabulary.to_dict()}, registry expects "
            f"{sorted(c.value for c in expected.capabilities)} / "
            f"{expected.vocabulary.to_dict()}"
        )


def faulty_names_from_env(environ: Mapping[str, str] | None = None) -> frozenset[str]:
    env = environ if environ is not None else os.environ
    raw = env.get(FAULTY_ENV_VAR, "")
    return frozenset(name.strip() for name in raw.split(",") if name.strip())


def mock_backends(
    registry: Registry,
    truth: TruthStore,
    faulty: Iterable[str] = (),
) -> dict[str, MockWorker]:
    """One in-process mock per registry entry, sharing a truth store."""
    faulty = set(faulty)
    return {
        descriptor.name: MockWorker(descriptor, truth, faulty=descriptor.name in faulty)
        for descriptor in registry
    }
