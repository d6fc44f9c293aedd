"""Exception hierarchy shared across the library."""

from __future__ import annotations


class UvgptError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------------------
# mask / geometry


class SizeMismatch(UvgptError):
    """Bitmap length does not match the declared width*height."""


class EmptyMask(UvgptError):
    """Mask has no foreground pixels."""


class LengthMismatch(UvgptError):
    """Run lengths do not sum to width*height."""


class FrameMismatch(UvgptError):
    """Two rasters/masks do not share the same pixel frame."""


# ---------------------------------------------------------------------------
# parsing


class ParseError(UvgptError):
    pass


class EmptyInstruction(ParseError):
    """Instruction text is empty after trimming."""


class NoActionFound(ParseError):
    """No clause contained a recognizable action verb."""


class UnresolvedPronoun(ParseError):
    """A pronoun appeared before any target was introduced."""


# ---------------------------------------------------------------------------
# planning


class PlanError(UvgptError):
    pass


class NoImages(PlanError):
    """Planning requires at least one image."""


class InvalidIntentSet(PlanError):
    pass


class CyclicPlan(PlanError):
    """Task graph contains a dependency cycle."""


class OrphanSegment(PlanError):
    """Segment task lacks a same-target, same-image detect dependency."""


class DanglingDependency(PlanError):
    """Task depends on an id that is not in the plan."""


class InvalidTaskGraph(PlanError):
    """Render/Integrate dependency typing is violated."""


# ---------------------------------------------------------------------------
# registry / selection


class RegistryError(UvgptError):
    pass


class DuplicateName(RegistryError):
    pass


class InvalidDescriptor(RegistryError):
    pass


class NoCapableModel(RegistryError):
    """No registered model covers the task verb."""


class Infeasible(RegistryError):
    """No finite-cost assignment exists for the plan."""


# ---------------------------------------------------------------------------
# worker protocol


class WorkerError(UvgptError):
    pass


class Unreachable(WorkerError):
    """Worker endpoint could not be contacted."""


class WorkerTimeout(WorkerError):
    """Worker did not answer within the endpoint timeout."""


class MalformedResponse(WorkerError):
    """Worker response failed schema validation."""


class DescriptorMismatch(WorkerError):
    """Worker-advertised capabilities disagree with the registry entry."""


class MaskFrameMismatch(WorkerError):
    """Worker returned a mask whose frame differs from the image."""


# ---------------------------------------------------------------------------
# execution


class ExecutionError(UvgptError):
    """Raised when a plan cannot be completed; carries the trace if known."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class AllAttemptsFailed(ExecutionError):
    def __init__(self, task_id: int, trace=None):
        super().__init__(f"task {task_id}: all attempts failed verification", trace)
        self.task_id = task_id


class BackendUnreachable(ExecutionError):
    def __init__(self, model: str, cause: str, trace=None):
        super().__init__(f"backend {model!r} unreachable: {cause}", trace)
        self.model = model
        self.cause = cause


class TargetNotFound(ExecutionError):
    def __init__(self, target, trace=None):
        super().__init__(f"target not found in scene: {target}", trace)
        self.target = target


class NoAnomaly(ExecutionError):
    """Scene has a single detected class; no minority class exists."""


class EmptyScene(ExecutionError):
    """Open-vocabulary pass produced zero detections."""


# ---------------------------------------------------------------------------
# raster


class RasterError(UvgptError):
    pass


class UnsupportedFormat(RasterError):
    pass


class TruncatedData(RasterError):
    pass


class EmptyList(RasterError):
    """Integrate called with no images."""
