"""Model backend registry and the per-task assignment selector.

The selector minimizes mismatch + regularizer over assignments: per-task
cost covers capability/vocabulary fit plus weighted latency and
unreliability, and the regularizer charges a constant per planned task.
Tasks are independent in the objective, so the argmin is per-task; the one
cross-task coupling is the distinct-models constraint, solved by
constrained re-selection within a detect/segment chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import DuplicateName, Infeasible, InvalidDescriptor, NoCapableModel
from .types import Constraint, TargetKind, TaskPlan, TaskVerb, VisionTask

COMPOSITOR = "compositor"  # built-in executor for render/integrate tasks

VOCAB_MISS_PENALTY = 1.0


class Capability(Enum):
    DETECT = "detect"
    SEGMENT = "segment"
    PROMPT_SEGMENT = "prompt_segment"


@dataclass(frozen=True)
class Vocabulary:
    """Open vocabulary, or a fixed non-empty class list."""

    open: bool
    classes: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.open and not self.classes:
            raise InvalidDescriptor("fixed vocabulary must be non-empty")

    @classmethod
    def open_vocab(cls) -> "Vocabulary":
        return cls(open=True)

    @classmethod
    def fixed(cls, classes: Iterable[str]) -> "Vocabulary":
        return cls(open=False, classes=frozenset(classes))

    def covers(self, class_name: str) -> bool:
        return self.open or class_name in self.classes

    def to_dict(self) -> dict:
        return {"open": self.open, "classes": sorted(self.classes)}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Vocabulary":
        return cls(open=bool(data["open"]), classes=frozenset(data.get("classes", ())))


@dataclass(frozen=True)
class ModelDescriptor:
    """Capabilities and cost profile of one registered backend."""

    name: str
    capabilities: frozenset[Capability]
    vocabulary: Vocabulary
    latency_cost: float = 0.0
    reliability: float = 1.0

    def __post_init__(self):
        if not self.name:
            raise InvalidDescriptor("descriptor requires a name")
        if not self.capabilities:
            raise InvalidDescriptor(f"{self.name}: no capabilities")
        if self.latency_cost < 0:
            raise InvalidDescriptor(f"{self.name}: negative latency_cost")
        if not 0.0 < self.reliability <= 1.0:
            raise InvalidDescriptor(f"{self.name}: reliability outside (0, 1]")

    def covers_verb(self, verb: TaskVerb) -> bool:
        if verb is TaskVerb.DETECT:
            return Capability.DETECT in self.capabilities
        if verb is TaskVerb.SEGMENT:
            return bool(
                self.capabilities & {Capability.SEGMENT, Capability.PROMPT_SEGMENT}
            )
        return False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "capabilities": sorted(c.value for c in self.capabilities),
            "vocabulary": self.vocabulary.to_dict(),
            "latency_cost": self.latency_cost,
            "reliability": self.reliability,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelDescriptor":
        return cls(
            name=str(data["name"]),
            capabilities=frozenset(Capability(c) for c in data["capabilities"]),
            vocabulary=Vocabulary.from_dict(data["vocabulary"]),
            latency_cost=float(data.get("latency_cost", 0.0)),
            reliability=float(data.get("reliability", 1.0)),
        )


@dataclass(frozen=True)
class SelectorWeights:
    """Objective weights; arbitrary configuration, recorded in every trace."""

    lmbda: float = 0.1  # regularizer per planned task
    mu: float = 0.01  # latency weight
    nu: float = 0.05  # unreliability weight

    def to_dict(self) -> dict:
        return {"lambda": self.lmbda, "mu": self.mu, "nu": self.nu}


DEFAULT_WEIGHTS = SelectorWeights()


class Registry:
    """Read-mostly collection of model descriptors, keyed by unique name."""

    def __init__(self, descriptors: Iterable[ModelDescriptor] = ()):
        self._models: dict[str, ModelDescriptor] = {}
        for d in descriptors:
            self.register(d)

    def register(self, descriptor: ModelDescriptor) -> None:
        if descriptor.name in self._models:
            raise DuplicateName(f"model {descriptor.name!r} already registered")
        self._models[descriptor.name] = descriptor

    def get(self, name: str) -> ModelDescriptor:
        return self._models[name]

    def names(self) -> list[str]:
        return sorted(self._models)

    def __len__(self) -> int:
        return len(self._models)

    def __iter__(self) -> Iterator[ModelDescriptor]:
        return iter(self._models.values())

    def __contains__(self, name: str) -> bool:
        return name in self._models

    def candidates(
        self, task: VisionTask, weights: SelectorWeights = DEFAULT_WEIGHTS
    ) -> list[ModelDescriptor]:
        """Capability-covering models, cheapest first, name as tie-break."""
        if task.verb in (TaskVerb.RENDER, TaskVerb.INTEGRATE):
            raise ValueError(f"{task.verb.value} tasks run on the built-in compositor")
        if not self._models:
            raise NoCapableModel("registry is empty")
        found = [d for d in self._models.values() if d.covers_verb(task.verb)]
        if not found:
            raise NoCapableModel(f"no model covers {task.verb.value}")
        return sorted(found, key=lambda d: (task_cost(task, d, weights), d.name))


def task_cost(
    task: VisionTask, model: ModelDescriptor, weights: SelectorWeights = DEFAULT_WEIGHTS
) -> float:
    """Per-task assignment cost; +inf when the model cannot serve the task."""
    if not model.covers_verb(task.verb):
        return math.inf
    target = task.target
    if target is not None and target.kind is TargetKind.NAMED:
        if model.vocabulary.covers(target.class_name):
            base = 0.0
        elif (
            task.verb is TaskVerb.SEGMENT
            and Capability.PROMPT_SEGMENT in model.capabilities
        ):
            base = VOCAB_MISS_PENALTY  # open path via text prompt
        else:
            return math.inf
    elif target is not None and target.kind is TargetKind.CATEGORY:
        # category expands to many classes; fixed-vocabulary models may
        # cover only part of the expansion
        base = 0.0 if model.vocabulary.open else VOCAB_MISS_PENALTY
    elif target is not None:
        # anomaly / main-object need an open scene scan
        base = 0.0 if model.vocabulary.open else VOCAB_MISS_PENALTY
    else:
        base = 0.0
    return base + weights.mu * model.latency_cost + weights.nu * (1.0 - model.reliability)


@dataclass(frozen=True)
class Assignment:
    """task id -> model name (render/integrate map to the compositor)."""

    by_task: Mapping[int, str]

    def model_for(self, task_id: int) -> str:
        return self.by_task[task_id]

    def to_dict(self) -> dict:
        return {str(k): v for k, v in sorted(self.by_task.items())}


@dataclass(frozen=True)
class PlanScore:
    mismatch: float
    regularizer: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.mismatch + self.regularizer)

    def to_dict(self) -> dict:
        return {
            "mismatch": self.mismatch,
            "regularizer": self.regularizer,
            "total": self.total,
        }


def _chain_pairs(plan: TaskPlan) -> list[tuple[VisionTask, VisionTask]]:
    """(detect, segment) pairs joined by the segment's dependency."""
    by_id = {t.id: t for t in plan.tasks}
    pairs = []
    for task in plan.tasks:
        if task.verb is TaskVerb.SEGMENT:
            for dep in task.depends_on:
                parent = by_id[dep]
                if parent.verb is TaskVerb.DETECT and parent.target == task.target:
                    pairs.append((parent, task))
    return pairs


def select(
    plan: TaskPlan,
    registry: Registry,
    weights: SelectorWeights = DEFAULT_WEIGHTS,
) -> tuple[Assignment, PlanScore]:
    """Assign a model to every task, minimizing the additive plan score."""
    chosen: dict[int, str] = {}
    ranked: dict[int, list[tuple[float, str]]] = {}

    for task in plan.tasks:
        if task.verb in (TaskVerb.RENDER, TaskVerb.INTEGRATE):
            chosen[task.id] = COMPOSITOR
            continue
        options = [
            (task_cost(task, model, weights), model.name)
            for model in registry.candidates(task, weights)
        ]
        options = sorted(o for o in options if math.isfinite(o[0]))
        if not options:
            raise Infeasible(
                f"task {task.id} ({task.verb.value} {task.target}) has no "
                f"finite-cost model"
            )
        ranked[task.id] = options
        chosen[task.id] = options[0][1]

    for detect, segment in _chain_pairs(plan):
        if Constraint.DISTINCT_MODELS not in segment.constraints:
            continue
        if chosen[detect.id] != chosen[segment.id]:
            continue
        seg_alts = [name for _, name in ranked[segment.id] if name != chosen[detect.id]]
        if seg_alts:
            chosen[segment.id] = seg_alts[0]
            continue
        det_alts = [name for _, name in ranked[detect.id] if name != chosen[segment.id]]
        if det_alts:
            chosen[detect.id] = det_alts[0]
            continue
        raise Infeasible(
            f"distinct-models chain over {segment.target} has fewer than two "
            f"capable models"
        )

    mismatch = sum(
        task_cost(task, registry.get(chosen[task.id]), weights)
        for task in plan.tasks
        if chosen[task.id] != COMPOSITOR
    )
    score = PlanScore(mismatch=mismatch, regularizer=weights.lmbda * len(plan.tasks))
    assignment = Assignment(by_task=dict(chosen))
    validate_assignment(plan, assignment, registry)
    return assignment, score


def validate_assignment(plan: TaskPlan, assignment: Assignment, registry: Registry) -> None:
    """Re-check the capability postcondition for every assigned task."""
    for task in plan.tasks:
        name = assignment.model_for(task.id)
        if task.verb in (TaskVerb.RENDER, TaskVerb.INTEGRATE):
            if name != COMPOSITOR:
                raise Infeasible(f"task {task.id} must run on the compositor")
            continue
        if name == COMPOSITOR or not registry.get(name).covers_verb(task.verb):
            raise Infeasible(f"model {name!r} cannot serve task {task.id}")


# ---------------------------------------------------------------------------
# registry file loading (UVGPT_REGISTRY)


def load_registry(path: str | Path) -> Registry:
    """Registry file: JSON list of descriptor objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise InvalidDescriptor("registry file must hold a JSON list")
    return Registry(ModelDescriptor.from_dict(entry) for entry in data)


def dump_registry(registry: Registry, path: str | Path) -> None:
    entries = [registry.get(name).to_dict() for name in registry.names()]
    Path(path).write_text(json.dumps(entries, indent=2) + "\n", encoding="utf-8")
