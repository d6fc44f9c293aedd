"""Compile intents plus images into a validated task DAG.

Every target gets one detect task per image (synthesized when the prompt
only asked for masks), segmentation hangs off the detect that located the
same target, each image gets a render step over its leaf tasks, and a final
integrate step joins multiple images into one output.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    CyclicPlan,
    DanglingDependency,
    InvalidIntentSet,
    InvalidTaskGraph,
    NoImages,
    OrphanSegment,
)
from .types import (
    ActionKind,
    Constraint,
    ImageRef,
    IntentSet,
    Quantifier,
    TargetSpec,
    TaskPlan,
    TaskVerb,
    VisionTask,
)


@dataclass(frozen=True)
class TargetProfile:
    """Per-target summary of what the intents ask for.

    Conditional and constraint flags are target-wide: one conditional intent
    makes the whole chain skip-safe (the detect feeding a conditional mask
    must not hard-fail on absence).
    """

    target: TargetSpec
    quantifier: Quantifier
    needs_segment: bool
    conditional: bool
    constraints: frozenset[Constraint]
    draw_boxes: bool
    draw_masks: bool


def target_profiles(intents: IntentSet) -> list[TargetProfile]:
    """Collapse intents into one profile per distinct target, in prompt order."""
    order: list[TargetSpec] = intents.targets()
    profiles = []
    for target in order:
        group = [i for i in intents.intents if i.target == target]
        segments = [i for i in group if i.action is ActionKind.SEGMENT]
        draw_masks = any(i.render for i in segments)
        if segments:
            draw_boxes = all(i.draw_boxes for i in segments)
        else:
            draw_boxes = any(i.render for i in group)
        profiles.append(
            TargetProfile(
                target=target,
                quantifier=group[0].quantifier,
                needs_segment=bool(segments),
                conditional=any(i.conditional for i in group),
                constraints=frozenset().union(*(i.constraints for i in group)),
                draw_boxes=draw_boxes,
                draw_masks=draw_masks,
            )
        )
    return profiles


def plan(
    intents: IntentSet,
    images: list[ImageRef] | tuple[ImageRef, ...],
    integrate: bool = True,
) -> TaskPlan:
    """Emit the task DAG for the intents over the given images."""
    if not isinstance(intents, IntentSet) or not intents.intents:
        raise InvalidIntentSet(f"not a usable intent set: {intents!r}")
    if not images:
        raise NoImages("planning requires at least one image")

    profiles = target_profiles(intents)
    tasks: list[VisionTask] = []
    render_ids: list[int] = []

    for image_index in range(len(images)):
        detect_ids: dict[TargetSpec, int] = {}
        leaf_ids: list[int] = []
        for profile in profiles:
            task_id = len(tasks)
            tasks.append(
                VisionTask(
                    id=task_id,
                    verb=TaskVerb.DETECT,
                    target=profile.target,
                    image=image_index,
                    quantifier=profile.quantifier,
                    conditional=profile.conditional,
                    constraints=profile.constraints,
                )
            )
            detect_ids[profile.target] = task_id
            leaf_ids.append(task_id)
        for profile in profiles:
            if not profile.needs_segment:
                continue
            task_id = len(tasks)
            tasks.append(
                VisionTask(
                    id=task_id,
                    verb=TaskVerb.SEGMENT,
                    target=profile.target,
                    image=image_index,
                    depends_on=frozenset({detect_ids[profile.target]}),
                    quantifier=profile.quantifier,
                    conditional=profile.conditional,
                    constraints=profile.constraints,
                )
            )
            leaf_ids.append(task_id)
        render_id = len(tasks)
        tasks.append(
            VisionTask(
                id=render_id,
                verb=TaskVerb.RENDER,
                image=image_index,
                depends_on=frozenset(leaf_ids),
            )
        )
        render_ids.append(render_id)

    if len(images) > 1 and integrate:
        tasks.append(
            VisionTask(
                id=len(tasks),
                verb=TaskVerb.INTEGRATE,
                depends_on=frozenset(render_ids),
            )
        )

    result = TaskPlan(tasks=tuple(tasks), source=intents)
    validate_plan(result)
    return result


def validate_plan(task_plan: TaskPlan) -> None:
    """Assert the task-graph invariants; raises a PlanError subclass."""
    tasks = task_plan.tasks
    ids = [t.id for t in tasks]
    if ids != list(range(len(tasks))):
        raise InvalidTaskGraph(f"task ids not dense 0..n-1: {ids}")

    by_id = {t.id: t for t in tasks}
    for task in tasks:
        for dep in task.depends_on:
            if dep not in by_id:
                raise DanglingDependency(f"task {task.id} depends on missing {dep}")

    _reject_cycles(tasks)

    for task in tasks:
        for dep in task.depends_on:
            if dep >= task.id:
                raise InvalidTaskGraph(
                    f"task {task.id} depends on later task {dep} (non-topological ids)"
                )
        if task.verb is TaskVerb.DETECT:
            if task.target is None or task.image is None:
                raise InvalidTaskGraph(f"detect task {task.id} lacks target/image")
        elif task.verb is TaskVerb.SEGMENT:
            if task.target is None or task.image is None:
                raise OrphanSegment(f"segment task {task.id} lacks target/image")
            detect_deps = [
                by_id[d]
                for d in task.depends_on
                if by_id[d].verb is TaskVerb.DETECT
            ]
            matching = [
                d
                for d in detect_deps
                if d.target == task.target and d.image == task.image
            ]
            if len(detect_deps) != 1 or len(matching) != 1:
                raise OrphanSegment(
                    f"segment task {task.id} needs exactly one same-target, "
                    f"same-image detect dependency"
                )
        elif task.verb is TaskVerb.RENDER:
            if task.image is None:
                raise InvalidTaskGraph(f"render task {task.id} lacks an image")
            deps = [by_id[d] for d in task.depends_on]
            if not deps or any(
                d.verb not in (TaskVerb.DETECT, TaskVerb.SEGMENT) or d.image != task.image
                for d in deps
            ):
                raise InvalidTaskGraph(
                    f"render task {task.id} must depend on >=1 same-image leaf tasks"
                )
        elif task.verb is TaskVerb.INTEGRATE:
            if task.image is not None or task.target is not None:
                raise InvalidTaskGraph(f"integrate task {task.id} binds image/target")
            deps = [by_id[d] for d in task.depends_on]
            if not deps or any(d.verb is not TaskVerb.RENDER for d in deps):
                raise InvalidTaskGraph(
                    f"integrate task {task.id} must depend on >=1 render tasks"
                )


def _reject_cycles(tasks) -> None:
    # Kahn's algorithm over the dependency edges; leftovers mean a cycle.
    remaining = {t.id: set(t.depends_on) for t in tasks}
    ready = [tid for tid, deps in remaining.items() if not deps]
    seen = 0
    dependents: dict[int, list[int]] = {t.id: [] for t in tasks}
    for t in tasks:
        for dep in t.depends_on:
            if dep in dependents:
                dependents[dep].append(t.id)
    while ready:
        tid = ready.pop()
        seen += 1
        for follower in dependents[tid]:
            remaining[follower].discard(tid)
            if not remaining[follower]:
                ready.append(follower)
    if seen != len(tasks):
        raise CyclicPlan("task graph contains a dependency cycle")
