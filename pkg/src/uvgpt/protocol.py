"""Model-worker boundary: wire message types, JSON schemas, truth fixtures.

Workers speak JSON over HTTP (endpoints in the service module); in-process
mocks implement the same backend interface with the same request/response
types, so tests exercise identical message shapes without sockets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import jsonschema

from .errors import MalformedResponse
from .registry import ModelDescriptor
from .types import BBox, Detection, InstanceMask

DEFAULT_TIMEOUT_MS = 5000


@dataclass(frozen=True)
class WorkerEndpoint:
    """Network address of one worker; name must match a registry entry."""

    name: str
    base_url: str
    timeout_ms: int = DEFAULT_TIMEOUT_MS


@dataclass(frozen=True)
class ImagePayload:
    """Image by reference (path) or inline (base64), plus pixel dimensions."""

    width: int
    height: int
    path: str | None = None
    b64: str | None = None

    def __post_init__(self):
        if self.path is None and self.b64 is None:
            raise ValueError("image payload needs a path or inline bytes")

    @property
    def key(self) -> str:
        """Fixture lookup key: the file stem of the reference."""
        if self.path is not None:
            return Path(self.path).stem
        return ""

    def to_dict(self) -> dict:
        out: dict = {"width": self.width, "height": self.height}
        if self.path is not None:
            out["path"] = self.path
        if self.b64 is not None:
            out["b64"] = self.b64
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "ImagePayload":
        return cls(
            width=int(data["width"]),
            height=int(data["height"]),
            path=data.get("path"),
            b64=data.get("b64"),
        )


@dataclass(frozen=True)
class DetectRequest:
    image: ImagePayload
    classes: tuple[str, ...] = ()  # empty = open-vocabulary pass
    conf_threshold: float = 0.25

    def to_dict(self) -> dict:
        return {
            "image": self.image.to_dict(),
            "classes": list(self.classes),
            "conf_threshold": self.conf_threshold,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "DetectRequest":
        return cls(
            image=ImagePayload.from_dict(data["image"]),
            classes=tuple(data.get("classes", ())),
            conf_threshold=float(data.get("conf_threshold", 0.25)),
        )


@dataclass(frozen=True)
class DetectResponse:
    detections: tuple[Detection, ...]

    def to_dict(self) -> dict:
        return {"detections": [d.to_dict() for d in self.detections]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DetectResponse":
        return cls(
            detections=tuple(Detection.from_dict(d) for d in data["detections"])
        )


@dataclass(frozen=True)
class SegmentRequest:
    image: ImagePayload
    boxes: tuple[BBox, ...] = ()
    prompt: str | None = None

    def __post_init__(self):
        if not self.boxes and not self.prompt:
            raise ValueError("segment request needs boxes or a class prompt")

    def to_dict(self) -> dict:
        out: dict = {
            "image": self.image.to_dict(),
            "boxes": [b.as_list() for b in self.boxes],
        }
        if self.prompt is not None:
            out["prompt"] = self.prompt
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "SegmentRequest":
        return cls(
            image=ImagePayload.from_dict(data["image"]),
            boxes=tuple(BBox.from_list(b) for b in data.get("boxes", ())),
            prompt=data.get("prompt"),
        )


@dataclass(frozen=True)
class SegmentResponse:
    masks: tuple[InstanceMask, ...]

    def to_dict(self) -> dict:
        return {"masks": [m.to_dict() for m in self.masks]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "SegmentResponse":
        return cls(masks=tuple(InstanceMask.from_dict(m) for m in data["masks"]))


# ---------------------------------------------------------------------------
# truth fixtures (deterministic test doubles for expert models)


@dataclass(frozen=True)
class TruthObject:
    class_label: str
    bbox: BBox
    confidence: float
    mask_rle: tuple[int, ...] | None = None

    def to_dict(self) -> dict:
        out = {
            "class": self.class_label,
            "bbox": self.bbox.as_list(),
            "confidence": self.confidence,
        }
        if self.mask_rle is not None:
            out["mask_rle"] = list(self.mask_rle)
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TruthObject":
        mask_rle = data.get("mask_rle")
        return cls(
            class_label=str(data["class"]),
            bbox=BBox.from_list(data["bbox"]),
            confidence=float(data["confidence"]),
            mask_rle=tuple(int(r) for r in mask_rle) if mask_rle is not None else None,
        )


@dataclass(frozen=True)
class TruthFixture:
    """Ground-truth objects for one image, read from `<stem>.truth.json`."""

    objects: tuple[TruthObject, ...] = ()

    def to_dict(self) -> dict:
        return {"objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TruthFixture":
        return cls(objects=tuple(TruthObject.from_dict(o) for o in data["objects"]))


def truth_path_for(image_path: str | Path) -> Path:
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + ".truth.json")


def load_truth(path: str | Path) -> TruthFixture:
    return TruthFixture.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_truth(fixture: TruthFixture, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(fixture.to_dict(), indent=2) + "\n", encoding="utf-8"
    )


# ---------------------------------------------------------------------------
# backend interface


class WorkerBackend(Protocol):
    """What the execution engine needs from any backend, HTTP or in-process."""

    def capabilities(self) -> ModelDescriptor: ...

    def detect(self, request: DetectRequest) -> DetectResponse: ...

    def segment(self, request: SegmentRequest) -> SegmentResponse: ...


# ---------------------------------------------------------------------------
# wire schemas

_IMAGE_SCHEMA = {
    "type": "object",
    "properties": {
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "path": {"type": "string"},
        "b64": {"type": "string"},
    },
    "required": ["width", "height"],
    "anyOf": [{"required": ["path"]}, {"required": ["b64"]}],
}

_BBOX_SCHEMA = {
    "type": "array",
    "items": {"type": "integer"},
    "minItems": 4,
    "maxItems": 4,
}

CAPABILITIES_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "capabilities": {
            "type": "array",
            "items": {"enum": ["detect", "segment", "prompt_segment"]},
            "minItems": 1,
        },
        "vocabulary": {
            "type": "object",
            "properties": {
                "open": {"type": "boolean"},
                "classes": {"type": "array", "items": {"type": "string"}},
            },
            "required": ["open"],
        },
        "latency_cost": {"type": "number", "minimum": 0},
        "reliability": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    },
    "required": ["name", "capabilities", "vocabulary"],
}

DETECT_REQUEST_SCHEMA = {
    "type": "object",
    "properties": {
        "image": _IMAGE_SCHEMA,
        "classes": {"type": "array", "items": {"type": "string"}},
        "conf_threshold": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["image"],
}

DETECT_RESPONSE_SCHEMA = {
    "type": "object",
    "properties": {
        "detections": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "instance_id": {"type": "integer"},
                    "class": {"type": "string"},
                    "bbox": _BBOX_SCHEMA,
                    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                },
                "required": ["instance_id", "class", "bbox", "confidence"],
            },
        }
    },
    "required": ["detections"],
}

SEGMENT_REQUEST_SCHEMA = {
    "type": "object",
    "properties": {
        "image": _IMAGE_SCHEMA,
        "boxes": {"type": "array", "items": _BBOX_SCHEMA},
        "prompt": {"type": "string"},
    },
    "required": ["image"],
}

SEGMENT_RESPONSE_SCHEMA = {
    "type": "object",
    "properties": {
        "masks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "instance_id": {"type": "integer"},
                    "width": {"type": "integer", "minimum": 1},
                    "height": {"type": "integer", "minimum": 1},
                    "rle": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                },
                "required": ["instance_id", "width", "height", "rle"],
            },
        }
    },
    "required": ["masks"],
}


def validate_message(payload: Mapping, schema: Mapping, context: str = "") -> None:
    """Schema-check a wire message; raises MalformedResponse on violation."""
    try:
        jsonschema.validate(payload, schema)
    except jsonschema.ValidationError as exc:
        raise MalformedResponse(f"{context or 'message'}: {exc.message}") from exc
