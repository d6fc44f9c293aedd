"""uvgpt: turn natural-language vision instructions into executed, verified,
and composited detection/segmentation results."""

from .errors import (
    AllAttemptsFailed,
    BackendUnreachable,
    CyclicPlan,
    DanglingDependency,
    DescriptorMismatch,
    DuplicateName,
    EmptyInstruction,
    EmptyMask,
    FrameMismatch,
    Infeasible,
    LengthMismatch,
    NoActionFound,
    NoCapableModel,
    NoImages,
    OrphanSegment,
    SizeMismatch,
    TargetNotFound,
    UnresolvedPronoun,
    UvgptError,
)
from .types import (
    ActionKind,
    BBox,
    Constraint,
    Detection,
    ExecutionTrace,
    ImageRef,
    InstanceMask,
    Instruction,
    Intent,
    IntentSet,
    Quantifier,
    SceneResult,
    TargetKind,
    TargetSpec,
    TaskPlan,
    TaskVerb,
    Verdict,
    VerificationReport,
    VisionTask,
)

__version__ = "0.1.0"
