"""Execute a task plan: dispatch to workers, resolve deferred targets,
verify outputs, retry with alternate models, and assemble the scene result
plus a complete attempt trace.

Scene-level instance ids are assigned by a pure aggregation over completed
task states in task-id order, so results are identical whether independent
tasks ran sequentially or concurrently.
"""

from __future__ import annotations

import dataclasses
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

from .config import Settings
from .errors import (
    AllAttemptsFailed,
    BackendUnreachable,
    EmptyScene,
    MalformedResponse,
    MaskFrameMismatch,
    NoAnomaly,
    TargetNotFound,
    Unreachable,
    WorkerTimeout,
)
from .masks import mask_iou
from .planning import TargetProfile, target_profiles, validate_plan
from .protocol import (
    DetectRequest,
    ImagePayload,
    SegmentRequest,
    WorkerBackend,
)
from .parsing import SemanticResolver, default_resolver
from .raster import RasterImage, blend_mask, draw_box, integrate, palette_color
from .registry import (
    COMPOSITOR,
    Assignment,
    Capability,
    Registry,
    task_cost,
)
from .types import (
    BBox,
    Detection,
    ExecutionTrace,
    ImageRef,
    ImageResult,
    InstanceMask,
    SceneResult,
    TargetKind,
    TargetSpec,
    TaskPlan,
    TaskVerb,
    TraceStep,
    Quantifier,
    Verdict,
    VerificationCheck,
    VerificationReport,
    VisionTask,
)

_TRANSPORT_ERRORS = (Unreachable, WorkerTimeout, MalformedResponse, MaskFrameMismatch)


@dataclass(frozen=True)
class RetryPolicy:
    """Alternates are tried in ascending selector-score order; a model is
    attempted at most once per task."""

    max_attempts: int = 2

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class LoadedImage:
    ref: ImageRef
    raster: RasterImage


@dataclass(frozen=True)
class VerifyContext:
    """Everything verify() needs beyond the worker output itself."""

    image: ImageRef
    conf_threshold: float
    iou_threshold: float
    resolved: tuple[Detection, ...] = ()
    raw_boxes: tuple[BBox, ...] = ()
    conditioning: tuple[BBox, ...] = ()
    resolution_note: str = ""


@dataclass
class _TaskState:
    task: VisionTask
    skipped: bool = False
    detections: tuple[Detection, ...] = ()
    conditioning: tuple[Detection, ...] = ()
    masks: tuple[InstanceMask, ...] = ()
    rendered: RasterImage | None = None
    not_found: TargetSpec | None = None
    exhausted_note: str | None = None  # absence tolerated per-image, judged scene-wide


# ---------------------------------------------------------------------------
# deferred target resolution


def resolve_target(
    target: TargetSpec,
    detections: Sequence[Detection],
    resolver: SemanticResolver | None = None,
) -> tuple[Detection, ...]:
    """Pick the instances a target refers to from an open detection pass.

    Anomaly is the strictly minority class (ties go to the lexicographically
    smallest class); main-object is the largest box (ties: confidence, then
    instance id); categories expand through the resolver's ontology.
    """
    if target.kind is TargetKind.NAMED:
        return tuple(d for d in detections if d.class_label == target.class_name)

    if target.kind is TargetKind.CATEGORY:
        resolver = resolver or default_resolver()
        members = resolver.expand(target.class_name)
        return tuple(d for d in detections if d.class_label in members)

    if not detections:
        raise EmptyScene("open pass produced zero detections")

    if target.kind is TargetKind.MAIN_OBJECT:
        best = max(
            detections,
            key=lambda d: (d.bbox.area, d.confidence, -d.instance_id),
        )
        return (best,)

    # anomaly: strictly minority class
    counts: dict[str, int] = {}
    for d in detections:
        counts[d.class_label] = counts.get(d.class_label, 0) + 1
    if len(counts) < 2:
        raise NoAnomaly("scene holds a single class; no minority exists")
    minority = min(counts.items(), key=lambda kv: (kv[1], kv[0]))[0]
    return tuple(d for d in detections if d.class_label == minority)


def _apply_quantifier(
    detections: tuple[Detection, ...], quantifier: Quantifier
) -> tuple[Detection, ...]:
    if quantifier is Quantifier.FIRST and len(detections) > 1:
        best = max(detections, key=lambda d: (d.confidence, -d.instance_id))
        return (best,)
    return detections


# ---------------------------------------------------------------------------
# verification


def verify(task: VisionTask, output, context: VerifyContext) -> VerificationReport:
    """Post-execution checks; failures are reported, never raised."""
    checks: list[VerificationCheck] = []

    if task.verb is TaskVerb.DETECT:
        covered = len(context.resolved) > 0
        detail = context.resolution_note or (
            f"{len(context.resolved)} instance(s) for {task.target}"
        )
        checks.append(VerificationCheck("coverage", covered, detail))
        low = [d for d in context.resolved if d.confidence < context.conf_threshold]
        checks.append(
            VerificationCheck(
                "confidence",
                not low,
                f"{len(low)} below {context.conf_threshold}" if low else "all above threshold",
            )
        )
        oob = [
            b
            for b in context.raw_boxes
            if b.clamped(context.image.width, context.image.height) is None
        ]
        checks.append(
            VerificationCheck(
                "bounds",
                not oob,
                f"{len(oob)} box(es) outside frame" if oob else "boxes inside frame",
            )
        )
        if not covered and task.conditional:
            return VerificationReport(
                checks=tuple(checks), verdict=Verdict.NOT_FOUND_OK
            )
    elif task.verb is TaskVerb.SEGMENT:
        masks: tuple[InstanceMask, ...] = output
        count_ok = len(masks) == len(context.conditioning)
        checks.append(
            VerificationCheck(
                "mask-count",
                count_ok,
                f"{len(masks)} mask(s) for {len(context.conditioning)} box(es)",
            )
        )
        if count_ok:
            worst = 1.0
            for mask, box in zip(masks, context.conditioning):
                worst = min(worst, mask_iou(mask, box))
            checks.append(
                VerificationCheck(
                    "mask-box-iou",
                    worst >= context.iou_threshold,
                    f"min IoU {worst:.3f} vs threshold {context.iou_threshold}",
                )
            )
        checks.append(
            VerificationCheck(
                "non-empty-mask",
                all(m.foreground_pixels() >= 1 for m in masks),
                "foreground present",
            )
        )
    else:
        checks.append(VerificationCheck("compositor", True, "deterministic composite"))

    verdict = Verdict.PASS if all(c.passed for c in checks) else Verdict.FAIL
    return VerificationReport(checks=tuple(checks), verdict=verdict)


def _transport_failure_report(task: VisionTask, exc: Exception) -> VerificationReport:
    check = VerificationCheck("transport", False, f"{type(exc).__name__}: {exc}")
    return VerificationReport(checks=(check,), verdict=Verdict.FAIL)


# ---------------------------------------------------------------------------
# the executor


class _Execution:
    def __init__(
        self,
        plan: TaskPlan,
        assignment: Assignment,
        registry: Registry,
        backends: Mapping[str, WorkerBackend],
        policy: RetryPolicy,
        images: Sequence[LoadedImage],
        resolver: SemanticResolver,
        settings: Settings,
    ):
        self.plan = plan
        self.assignment = assignment
        self.registry = registry
        self.backends = backends
        self.policy = policy
        self.images = list(images)
        self.resolver = resolver
        self.settings = settings
        self.states: dict[int, _TaskState] = {}
        self.steps: list[TraceStep] = []
        self.profiles: dict[TargetSpec, TargetProfile] = {
            p.target: p for p in target_profiles(plan.source)
        }
        self._lock = threading.Lock()

    # -- helpers

    def _image(self, index: int) -> LoadedImage:
        return self.images[index]

    def _payload(self, loaded: LoadedImage) -> ImagePayload:
        return ImagePayload(
            width=loaded.ref.width, height=loaded.ref.height, path=loaded.ref.id
        )

    def _record(self, step: TraceStep) -> None:
        with self._lock:
            self.steps.append(step)

    def _trace(self) -> ExecutionTrace:
        with self._lock:
            ordered = tuple(sorted(self.steps, key=lambda s: (s.task_id, s.attempt)))
        return ExecutionTrace(steps=ordered, settings=self.settings.to_dict())

    def _attempt_sequence(self, task: VisionTask) -> list[str]:
        assigned = self.assignment.model_for(task.id)
        ranked = [
            d.name
            for d in self.registry.candidates(task, self.settings.weights)
            if task_cost(task, d, self.settings.weights) != float("inf")
            and d.name != assigned
        ]
        return [assigned] + ranked

    # -- task execution

    def run_task(self, task: VisionTask) -> None:
        if task.verb is TaskVerb.DETECT:
            self._run_detect(task)
        elif task.verb is TaskVerb.SEGMENT:
            self._run_segment(task)
        elif task.verb is TaskVerb.RENDER:
            self._run_compositor(task, self._render)
        else:
            self._run_compositor(task, self._integrate)

    def _run_compositor(self, task: VisionTask, action) -> None:
        start = time.perf_counter()
        state = _TaskState(task=task)
        action(task, state)
        self.states[task.id] = state
        report = verify(task, None, VerifyContext(
            image=self._image(task.image).ref if task.image is not None else self.images[0].ref,
            conf_threshold=self.settings.conf_threshold,
            iou_threshold=self.settings.mask_iou_threshold,
        ))
        self._record(
            TraceStep(
                task_id=task.id,
                model_name=COMPOSITOR,
                attempt=1,
                verification=report,
                elapsed_ms=(time.perf_counter() - start) * 1000.0,
            )
        )

    def _run_detect(self, task: VisionTask) -> None:
        loaded = self._image(task.image)
        classes: tuple[str, ...] = ()
        if task.target.kind is TargetKind.NAMED:
            classes = (task.target.class_name,)
        request = DetectRequest(
            image=self._payload(loaded),
            classes=classes,
            conf_threshold=self.settings.conf_threshold,
        )

        state = _TaskState(task=task)
        last_report: VerificationReport | None = None
        last_transport: Exception | None = None
        all_transport = True

        for attempt, model_name in enumerate(
            self._attempt_sequence(task)[: self.policy.max_attempts], start=1
        ):
            backend = self._backend(model_name)
            start = time.perf_counter()
            try:
                response = backend.detect(request)
            except _TRANSPORT_ERRORS as exc:
                last_transport = exc
                self._record_attempt(task, model_name, attempt,
                                     _transport_failure_report(task, exc), start)
                continue
            all_transport = False

            raw_boxes = tuple(d.bbox for d in response.detections)
            clamped = _clamp_detections(response.detections, loaded.ref)
            note = ""
            try:
                resolved = resolve_target(task.target, clamped, self.resolver)
            except (EmptyScene, NoAnomaly) as exc:
                resolved = ()
                note = f"{type(exc).__name__}: {exc}"
            resolved = _apply_quantifier(resolved, task.quantifier)

            context = VerifyContext(
                image=loaded.ref,
                conf_threshold=self.settings.conf_threshold,
                iou_threshold=self.settings.mask_iou_threshold,
                resolved=resolved,
                raw_boxes=raw_boxes,
                resolution_note=note,
            )
            report = verify(task, response.detections, context)
            self._record_attempt(task, model_name, attempt, report, start)
            last_report = report

            if report.verdict is Verdict.PASS:
                state.detections = resolved
                self.states[task.id] = state
                return
            if report.verdict is Verdict.NOT_FOUND_OK:
                state.skipped = True
                state.not_found = task.target
                self.states[task.id] = state
                return

        # absence in ONE image of a multi-image fan-out is tolerated here;
        # finalize raises only when the target is absent from every image
        if (
            last_report is not None
            and "coverage" in last_report.failed_names()
            and self._multi_image()
        ):
            note = next(
                (c.detail for c in last_report.checks if c.name == "coverage"), ""
            )
            state.skipped = True
            state.exhausted_note = note or "absent"
            self.states[task.id] = state
            return

        self._raise_exhausted(task, last_report, last_transport, all_transport)

    def _run_segment(self, task: VisionTask) -> None:
        detect_state = self._detect_dependency_state(task)
        if detect_state.skipped or not detect_state.detections:
            state = _TaskState(task=task, skipped=True)
            self.states[task.id] = state
            return

        loaded = self._image(task.image)
        conditioning = detect_state.detections
        boxes = tuple(d.bbox for d in conditioning)

        state = _TaskState(task=task, conditioning=conditioning)
        last_report: VerificationReport | None = None
        last_transport: Exception | None = None
        all_transport = True

        for attempt, model_name in enumerate(
            self._attempt_sequence(task)[: self.policy.max_attempts], start=1
        ):
            backend = self._backend(model_name)
            start = time.perf_counter()
            try:
                masks = self._dispatch_segment(task, model_name, backend, loaded, conditioning)
            except _TRANSPORT_ERRORS as exc:
                last_transport = exc
                self._record_attempt(task, model_name, attempt,
                                     _transport_failure_report(task, exc), start)
                continue
            all_transport = False

            context = VerifyContext(
                image=loaded.ref,
                conf_threshold=self.settings.conf_threshold,
                iou_threshold=self.settings.mask_iou_threshold,
                conditioning=boxes,
            )
            report = verify(task, masks, context)
            self._record_attempt(task, model_name, attempt, report, start)
            last_report = report

            if report.verdict is Verdict.PASS:
                state.masks = masks
                self.states[task.id] = state
                return

        self._raise_exhausted(task, last_report, last_transport, all_transport)

    def _dispatch_segment(
        self,
        task: VisionTask,
        model_name: str,
        backend: WorkerBackend,
        loaded: LoadedImage,
        conditioning: tuple[Detection, ...],
    ) -> tuple[InstanceMask, ...]:
        descriptor = self.registry.get(model_name)
        payload = self._payload(loaded)
        prompt_only = (
            Capability.SEGMENT not in descriptor.capabilities
            and Capability.PROMPT_SEGMENT in descriptor.capabilities
        )
        if not prompt_only:
            request = SegmentRequest(
                image=payload, boxes=tuple(d.bbox for d in conditioning)
            )
            masks = backend.segment(request).masks
        else:
            # prompt-driven worker: one call per distinct class, masks joined
            # back in detection order per class
            masks_by_class: dict[str, list[InstanceMask]] = {}
            for class_name in dict.fromkeys(d.class_label for d in conditioning):
                response = backend.segment(
                    SegmentRequest(image=payload, prompt=class_name)
                )
                masks_by_class[class_name] = list(response.masks)
            joined: list[InstanceMask] = []
            for det in conditioning:
                bucket = masks_by_class.get(det.class_label, [])
                joined.append(bucket.pop(0) if bucket else None)
            masks = tuple(m for m in joined if m is not None)
        for mask in masks:
            if (mask.width, mask.height) != (loaded.ref.width, loaded.ref.height):
                raise MaskFrameMismatch(
                    f"mask frame {mask.width}x{mask.height} vs image "
                    f"{loaded.ref.width}x{loaded.ref.height}"
                )
        return masks

    # -- compositor tasks

    def _render(self, task: VisionTask, state: _TaskState) -> None:
        loaded = self._image(task.image)
        detections, masks, _ = self._aggregate_image(task.image)
        canvas = loaded.raster
        styles = self._styles_by_scene_id(task.image, detections)

        for det in detections:  # ascending scene instance id
            mask = masks.get(det.instance_id)
            style = styles[det.instance_id]
            if mask is not None and style.draw_masks:
                canvas = blend_mask(
                    canvas, mask, palette_color(det.instance_id),
                    alpha=self.settings.blend_alpha,
                )
        for det in detections:
            if styles[det.instance_id].draw_boxes:
                canvas = draw_box(
                    canvas, det.bbox, palette_color(det.instance_id),
                    stroke=self.settings.box_stroke,
                )
        state.rendered = canvas

    def _integrate(self, task: VisionTask, state: _TaskState) -> None:
        renders = sorted(
            (self.states[d] for d in task.depends_on),
            key=lambda s: s.task.image,
        )
        state.rendered = integrate([s.rendered for s in renders])

    def _styles_by_scene_id(self, image_index, detections) -> dict[int, TargetProfile]:
        """Map each scene instance to the profile of the target that produced it."""
        styles: dict[int, TargetProfile] = {}
        default = TargetProfile(
            target=TargetSpec.named("unknown"), quantifier=Quantifier.ALL,
            needs_segment=False, conditional=False, constraints=frozenset(),
            draw_boxes=True, draw_masks=False,
        )
        keyed = {}
        for task in self.plan.tasks:
            if task.verb is not TaskVerb.DETECT or task.image != image_index:
                continue
            st = self.states.get(task.id)
            if st is None or st.skipped:
                continue
            profile = self.profiles.get(task.target)
            for det in st.detections:
                keyed[(det.class_label, det.bbox)] = profile
        for det in detections:
            styles[det.instance_id] = keyed.get((det.class_label, det.bbox)) or default
        return styles

    def _aggregate_image(self, image_index: int):
        """Deterministic scene-id assignment over task states, in id order."""
        ids: dict[tuple[str, BBox], int] = {}
        detections: list[Detection] = []
        masks: dict[int, InstanceMask] = {}
        for task in self.plan.tasks:
            if task.image != image_index:
                continue
            st = self.states.get(task.id)
            if st is None or st.skipped:
                continue
            if task.verb is TaskVerb.DETECT:
                for det in st.detections:
                    key = (det.class_label, det.bbox)
                    if key not in ids:
                        scene_id = len(ids)
                        ids[key] = scene_id
                        detections.append(
                            dataclasses.replace(det, instance_id=scene_id)
                        )
            elif task.verb is TaskVerb.SEGMENT:
                for det, mask in zip(st.conditioning, st.masks):
                    key = (det.class_label, det.bbox)
                    scene_id = ids.get(key)
                    if scene_id is not None and scene_id not in masks:
                        masks[scene_id] = dataclasses.replace(
                            mask, instance_id=scene_id
                        )
        return tuple(detections), masks, ids

    # -- plumbing

    def _backend(self, model_name: str) -> WorkerBackend:
        backend = self.backends.get(model_name)
        if backend is None:
            raise BackendUnreachable(model_name, "no backend configured", self._trace())
        return backend

    def _multi_image(self) -> bool:
        return len({t.image for t in self.plan.tasks if t.image is not None}) > 1

    def _detect_dependency_state(self, task: VisionTask) -> _TaskState:
        for dep in sorted(task.depends_on):
            st = self.states[dep]
            if st.task.verb is TaskVerb.DETECT and st.task.target == task.target:
                return st
        raise AllAttemptsFailed(task.id, self._trace())

    def _record_attempt(self, task, model_name, attempt, report, start) -> None:
        self._record(
            TraceStep(
                task_id=task.id,
                model_name=model_name,
                attempt=attempt,
                verification=report,
                elapsed_ms=(time.perf_counter() - start) * 1000.0,
            )
        )

    def _raise_if_absent_everywhere(self) -> None:
        """A non-conditional target found in no image at all is an error."""
        by_target: dict[TargetSpec, list[_TaskState]] = {}
        for task in self.plan.tasks:
            if task.verb is TaskVerb.DETECT and not task.conditional:
                st = self.states.get(task.id)
                if st is not None:
                    by_target.setdefault(task.target, []).append(st)
        for target, states in by_target.items():
            if all(st.skipped and st.exhausted_note is not None for st in states):
                note = states[-1].exhausted_note or ""
                if note.startswith("NoAnomaly"):
                    raise NoAnomaly(note, self._trace())
                raise TargetNotFound(target, self._trace())

    def _raise_exhausted(self, task, last_report, last_transport, all_transport) -> None:
        trace = self._trace()
        if all_transport and last_transport is not None:
            raise BackendUnreachable(
                self.assignment.model_for(task.id), str(last_transport), trace
            )
        if last_report is not None and task.verb is TaskVerb.DETECT:
            failed = set(last_report.failed_names())
            if "coverage" in failed:
                note = next(
                    (c.detail for c in last_report.checks if c.name == "coverage"), ""
                )
                if note.startswith("NoAnomaly"):
                    raise NoAnomaly(note, trace)
                raise TargetNotFound(task.target, trace)
        raise AllAttemptsFailed(task.id, trace)

    # -- scheduling

    def run(self) -> tuple[SceneResult, ExecutionTrace]:
        if self.settings.max_workers > 1:
            self._run_concurrent()
        else:
            for task in self.plan.tasks:
                self.run_task(task)
        return self._finalize()

    def _run_concurrent(self) -> None:
        pending = {t.id: set(t.depends_on) for t in self.plan.tasks}
        dependents: dict[int, list[int]] = {t.id: [] for t in self.plan.tasks}
        for t in self.plan.tasks:
            for dep in t.depends_on:
                dependents[dep].append(t.id)
        ready = [tid for tid, deps in pending.items() if not deps]
        errors: list[Exception] = []
        lock = threading.Lock()

        with ThreadPoolExecutor(max_workers=self.settings.max_workers) as pool:
            futures = {}

            def submit(tid: int):
                futures[tid] = pool.submit(self.run_task, self.plan.task(tid))

            for tid in ready:
                submit(tid)
            remaining = set(pending)
            while futures:
                done_ids = []
                for tid, future in list(futures.items()):
                    if future.done():
                        done_ids.append(tid)
                        del futures[tid]
                        exc = future.exception()
                        if exc is not None:
                            with lock:
                                errors.append(exc)
                if errors:
                    for future in futures.values():
                        future.cancel()
                    raise errors[0]
                for tid in done_ids:
                    remaining.discard(tid)
                    for follower in dependents[tid]:
                        pending[follower].discard(tid)
                        if follower in remaining and not pending[follower] and all(
                            f != follower for f in futures
                        ):
                            submit(follower)
                if not done_ids:
                    time.sleep(0.001)

    def _finalize(self) -> tuple[SceneResult, ExecutionTrace]:
        self._raise_if_absent_everywhere()
        image_indices = sorted(
            {t.image for t in self.plan.tasks if t.image is not None}
        )
        results = []
        for index in image_indices:
            detections, masks, _ = self._aggregate_image(index)
            rendered = None
            rendered_ref = None
            for task in self.plan.tasks:
                if task.verb is TaskVerb.RENDER and task.image == index:
                    rendered = self.states[task.id].rendered
                    rendered_ref = f"{self._image(index).ref.id}.annotated"
            results.append(
                ImageResult(
                    image=self._image(index).ref,
                    detections=detections,
                    masks=tuple(masks[k] for k in sorted(masks)),
                    rendered=rendered,
                    rendered_ref=rendered_ref,
                )
            )

        not_found: list[TargetSpec] = []
        for task in self.plan.tasks:
            st = self.states.get(task.id)
            if st is not None and st.not_found is not None:
                if st.not_found not in not_found:
                    not_found.append(st.not_found)

        integrated = None
        integrated_ref = None
        for task in self.plan.tasks:
            if task.verb is TaskVerb.INTEGRATE:
                integrated = self.states[task.id].rendered
                integrated_ref = "integrated.annotated"

        scene = SceneResult(
            images=tuple(results),
            not_found=tuple(not_found),
            integrated=integrated,
            integrated_ref=integrated_ref,
        )
        return scene, self._trace()


def _clamp_detections(
    detections: Sequence[Detection], ref: ImageRef
) -> tuple[Detection, ...]:
    out = []
    for det in detections:
        clamped = det.bbox.clamped(ref.width, ref.height)
        if clamped is None:
            continue
        out.append(dataclasses.replace(det, bbox=clamped))
    return tuple(out)


def execute(
    plan: TaskPlan,
    assignment: Assignment,
    registry: Registry,
    backends: Mapping[str, WorkerBackend],
    policy: RetryPolicy | None = None,
    *,
    images: Sequence[LoadedImage],
    resolver: SemanticResolver | None = None,
    settings: Settings | None = None,
) -> tuple[SceneResult, ExecutionTrace]:
    """Run a validated plan under an assignment; returns the verified scene
    and the full attempt/verification trace."""
    settings = settings or Settings()
    policy = policy or RetryPolicy(max_attempts=settings.max_attempts)
    resolver = resolver or default_resolver()
    validate_plan(plan)
    if not plan.tasks:
        return (
            SceneResult(images=(), not_found=()),
            ExecutionTrace(steps=(), settings=settings.to_dict()),
        )
    execution = _Execution(
        plan, assignment, registry, backends, policy, images, resolver, settings
    )
    return execution.run()
