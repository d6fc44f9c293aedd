"""Core domain types: instructions, intents, tasks, detections, masks, results.

Everything here is an immutable value; instances are safe to share across
threads and to key dictionaries with (except the few that carry tuples of
other values, which stay unhashable on purpose).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import EmptyMask, LengthMismatch

# Words that already end in "s" in singular form; never strip their tail.
SINGULAR_S_WORDS = {"glass", "grass", "bus", "dress"}


def singularize(word: str) -> str:
    """Naive singular form: strip one trailing 's' unless the word keeps it."""
    w = word.lower()
    if w.endswith("s") and w not in SINGULAR_S_WORDS and len(w) > 1:
        return w[:-1]
    return w


def normalize_class_label(phrase: str) -> str:
    """Lowercase a class phrase and singularize its head (last) word."""
    words = phrase.strip().lower().split()
    if not words:
        return ""
    words[-1] = singularize(words[-1])
    return " ".join(words)


def canonical_json(data) -> str:
    """Deterministic JSON text: sorted keys, compact separators."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# images and instructions


@dataclass(frozen=True)
class ImageRef:
    """Opaque image identifier plus its pixel dimensions."""

    id: str
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive: {self}")


@dataclass(frozen=True)
class Instruction:
    """Raw prompt text plus the images it applies to."""

    text: str
    images: tuple[ImageRef, ...] = ()

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("instruction text is empty")


# ---------------------------------------------------------------------------
# targets and intents


class TargetKind(Enum):
    NAMED = "named"
    CATEGORY = "category"
    ANOMALY = "anomaly"
    MAIN_OBJECT = "main_object"


@dataclass(frozen=True)
class TargetSpec:
    """What an intent refers to: a class, an ontology category, the scene
    anomaly, or the dominant object."""

    kind: TargetKind
    class_name: str | None = None

    def __post_init__(self):
        if self.kind in (TargetKind.NAMED, TargetKind.CATEGORY):
            if not self.class_name:
                raise ValueError(f"{self.kind.value} target requires a class name")
            if self.class_name != self.class_name.lower():
                raise ValueError("target class must be lowercase")
        elif self.class_name is not None:
            raise ValueError(f"{self.kind.value} target carries no class name")

    @classmethod
    def named(cls, class_name: str) -> "TargetSpec":
        return cls(TargetKind.NAMED, normalize_class_label(class_name))

    @classmethod
    def category(cls, name: str) -> "TargetSpec":
        return cls(TargetKind.CATEGORY, normalize_class_label(name))

    @classmethod
    def anomaly(cls) -> "TargetSpec":
        return cls(TargetKind.ANOMALY)

    @classmethod
    def main_object(cls) -> "TargetSpec":
        return cls(TargetKind.MAIN_OBJECT)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.class_name is not None:
            out["class"] = self.class_name
        return out

    @classmethod
    def from_dict(cls, data: Mapping) -> "TargetSpec":
        return cls(TargetKind(data["kind"]), data.get("class"))

    def __str__(self) -> str:
        return self.class_name if self.class_name else self.kind.value


class ActionKind(Enum):
    DETECT = "detect"
    SEGMENT = "segment"


class Quantifier(Enum):
    ALL = "all"
    FIRST = "first"


class Constraint(Enum):
    DISTINCT_MODELS = "distinct_models"


@dataclass(frozen=True)
class Intent:
    """One normalized (action, target, quantifier) unit from the prompt.

    ``render`` asks for a visual overlay; ``draw_boxes`` keeps detection
    boxes in that overlay (a trailing "only" after a highlight verb turns
    them off). ``conditional`` intents skip silently when the target is
    absent from the scene.
    """

    action: ActionKind
    target: TargetSpec
    quantifier: Quantifier = Quantifier.FIRST
    render: bool = True
    draw_boxes: bool = True
    conditional: bool = False
    constraints: frozenset[Constraint] = frozenset()

    def to_dict(self) -> dict:
        return {
            "action": self.action.value,
            "target": self.target.to_dict(),
            "quantifier": self.quantifier.value,
            "render": self.render,
            "draw_boxes": self.draw_boxes,
            "conditional": self.conditional,
            "constraints": sorted(c.value for c in self.constraints),
        }


@dataclass(frozen=True)
class IntentSet:
    """Ordered intents parsed from one prompt, with the original text."""

    intents: tuple[Intent, ...]
    raw: str

    def __post_init__(self):
        if not self.intents:
            raise ValueError("intent set is empty")

    def targets(self) -> list[TargetSpec]:
        seen: list[TargetSpec] = []
        for intent in self.intents:
            if intent.target not in seen:
                seen.append(intent.target)
        return seen


# ---------------------------------------------------------------------------
# task plans


class TaskVerb(Enum):
    DETECT = "detect"
    SEGMENT = "segment"
    RENDER = "render"
    INTEGRATE = "integrate"


@dataclass(frozen=True)
class VisionTask:
    """One atomic operation in a plan. ``depends_on`` ids are always smaller
    than ``id`` so id order is a topological order."""

    id: int
    verb: TaskVerb
    target: TargetSpec | None = None
    image: int | None = None
    depends_on: frozenset[int] = frozenset()
    quantifier: Quantifier = Quantifier.FIRST
    conditional: bool = False
    constraints: frozenset[Constraint] = frozenset()

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "verb": self.verb.value,
            "target": self.target.to_dict() if self.target else None,
            "image": self.image,
            "depends_on": sorted(self.depends_on),
            "quantifier": self.quantifier.value,
            "conditional": self.conditional,
            "constraints": sorted(c.value for c in self.constraints),
        }


@dataclass(frozen=True)
class TaskPlan:
    """Dependency-ordered tasks compiled from an intent set."""

    tasks: tuple[VisionTask, ...]
    source: IntentSet

    def to_dict(self) -> dict:
        return {"tasks": [t.to_dict() for t in self.tasks]}

    def task(self, task_id: int) -> VisionTask:
        return self.tasks[task_id]


# ---------------------------------------------------------------------------
# detections and masks


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left origin, integer pixels. Covers the pixel
    set x..x+w-1 × y..y+h-1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive extent: {self}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, values: Sequence[int]) -> "BBox":
        x, y, w, h = values
        return cls(int(x), int(y), int(w), int(h))

    def clamped(self, width: int, height: int) -> "BBox | None":
        """Clip to an image frame; None when nothing remains."""
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.x + self.w, width)
        y1 = min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class Detection:
    """A labeled box with confidence for one object instance."""

    instance_id: int
    class_label: str
    bbox: BBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "class": self.class_label,
            "bbox": self.bbox.as_list(),
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Detection":
        return cls(
            instance_id=int(data["instance_id"]),
            class_label=str(data["class"]),
            bbox=BBox.from_list(data["bbox"]),
            confidence=float(data["confidence"]),
        )


@dataclass(frozen=True)
class InstanceMask:
    """Binary pixel mask stored as row-major run lengths.

    Runs alternate background/foreground starting with background; only the
    first run may be zero (mask begins with a foreground pixel).
    """

    instance_id: int
    width: int
    height: int
    rle: tuple[int, ...]

    def __post_init__(self):
        if sum(self.rle) != self.width * self.height:
            raise LengthMismatch(
                f"runs sum to {sum(self.rle)}, frame is {self.width}x{self.height}"
            )
        if any(r < 0 for r in self.rle):
            raise ValueError("negative run length")
        if any(r == 0 for r in self.rle[1:]):
            raise ValueError("zero-length run after the first")
        if self.foreground_pixels() < 1:
            raise EmptyMask("mask has no foreground pixels")

    def foreground_pixels(self) -> int:
        return sum(self.rle[1::2])

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "width": self.width,
            "height": self.height,
            "rle": list(self.rle),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "InstanceMask":
        return cls(
            instance_id=int(data["instance_id"]),
            width=int(data["width"]),
            height=int(data["height"]),
            rle=tuple(int(r) for r in data["rle"]),
        )


# ---------------------------------------------------------------------------
# results and traces


@dataclass(frozen=True)
class ImageResult:
    """Verified outputs for one input image."""

    image: ImageRef
    detections: tuple[Detection, ...] = ()
    masks: tuple[InstanceMask, ...] = ()
    rendered: "object | None" = None  # RasterImage; kept loose to avoid a cycle
    rendered_ref: str | None = None

    def __post_init__(self):
        known = {d.instance_id for d in self.detections}
        for mask in self.masks:
            if mask.instance_id not in known:
                raise ValueError(
                    f"mask instance {mask.instance_id} has no matching detection"
                )

    def to_dict(self) -> dict:
        return {
            "image": self.image.id,
            "detections": [d.to_dict() for d in self.detections],
            "masks": [m.to_dict() for m in self.masks],
            "not_found": [],  # populated at scene level; kept for file schema
        }


@dataclass(frozen=True)
class SceneResult:
    """Per-image verified outputs plus conditional targets that were absent."""

    images: tuple[ImageResult, ...]
    not_found: tuple[TargetSpec, ...] = ()
    integrated: "object | None" = None
    integrated_ref: str | None = None

    def result_dict(self, image_index: int) -> dict:
        out = self.images[image_index].to_dict()
        out["not_found"] = [t.to_dict() for t in self.not_found]
        return out

    def to_dict(self) -> dict:
        return {
            "images": [self.result_dict(i) for i in range(len(self.images))],
            "not_found": [t.to_dict() for t in self.not_found],
            "integrated": self.integrated_ref,
        }

    def canonical(self) -> str:
        return canonical_json(self.to_dict())


class Verdict(Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_FOUND_OK = "not_found_ok"


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    passed: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of post-execution checks for one task attempt."""

    checks: tuple[VerificationCheck, ...]
    verdict: Verdict

    def __post_init__(self):
        all_pass = all(c.passed for c in self.checks)
        if self.verdict is Verdict.PASS and not all_pass:
            raise ValueError("PASS verdict with failing checks")

    @property
    def ok(self) -> bool:
        return self.verdict in (Verdict.PASS, Verdict.NOT_FOUND_OK)

    def failed_names(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "checks": [c.to_dict() for c in self.checks],
        }


@dataclass(frozen=True)
class TraceStep:
    task_id: int
    model_name: str
    attempt: int
    verification: VerificationReport
    elapsed_ms: float

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "model": self.model_name,
            "attempt": self.attempt,
            "verification": self.verification.to_dict(),
            "elapsed_ms": self.elapsed_ms,
        }


@dataclass(frozen=True)
class ExecutionTrace:
    """Audit of every worker/compositor attempt made while executing a plan.

    ``settings`` records the selector weights and verification thresholds the
    run used, so a trace is reproducible on its own.
    """

    steps: tuple[TraceStep, ...] = ()
    settings: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        by_task: dict[int, list[int]] = {}
        for step in self.steps:
            by_task.setdefault(step.task_id, []).append(step.attempt)
        for task_id, attempts in by_task.items():
            if attempts != list(range(1, len(attempts) + 1)):
                raise ValueError(f"non-contiguous attempts for task {task_id}: {attempts}")

    def for_task(self, task_id: int) -> list[TraceStep]:
        return [s for s in self.steps if s.task_id == task_id]

    def to_jsonl(self) -> str:
        return "".join(canonical_json(s.to_dict()) + "\n" for s in self.steps)


def iter_dense_ids(tasks: Iterable[VisionTask]) -> bool:
    """True when task ids are exactly 0..n-1 in list order."""
    return all(t.id == i for i, t in enumerate(tasks))
