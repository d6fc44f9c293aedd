"""Registry and selector tests, including the brute-force enumeration oracle."""

from __future__ import annotations

import itertools
import math
import random

import pytest

from uvgpt.errors import DuplicateName, Infeasible, InvalidDescriptor, NoCapableModel
from uvgpt.planning import plan
from uvgpt.registry import (
    COMPOSITOR,
    Capability,
    ModelDescriptor,
    Registry,
    SelectorWeights,
    Vocabulary,
    select,
    task_cost,
    validate_assignment,
)
from uvgpt.types import (
    ActionKind,
    Constraint,
    ImageRef,
    Intent,
    IntentSet,
    TargetSpec,
    TaskVerb,
)

DET = Capability.DETECT
SEG = Capability.SEGMENT
PSEG = Capability.PROMPT_SEGMENT


def model(name, caps, vocab=None, latency=0.0, reliability=1.0):
    return ModelDescriptor(
        name=name,
        capabilities=frozenset(caps),
        vocabulary=vocab or Vocabulary.open_vocab(),
        latency_cost=latency,
        reliability=reliability,
    )


def mini_plan(spec, constraints=frozenset()):
    """spec: list of (class_name, needs_segment) over a single image."""
    intents = []
    for class_name, needs_segment in spec:
        target = TargetSpec.named(class_name)
        intents.append(Intent(ActionKind.DETECT, target, constraints=constraints))
        if needs_segment:
            intents.append(Intent(ActionKind.SEGMENT, target, constraints=constraints))
    intent_set = IntentSet(intents=tuple(intents), raw="synthetic")
    return plan(intent_set, [ImageRef("img0", 32, 32)])


def modeled_tasks(p):
    return [t for t in p.tasks if t.verb in (TaskVerb.DETECT, TaskVerb.SEGMENT)]


class TestRegistry:
    def test_register_and_duplicate(self):
        reg = Registry()
        reg.register(model("yolo-mock", {DET}, Vocabulary.fixed({"dog"})))
        with pytest.raises(DuplicateName):
            reg.register(model("yolo-mock", {DET}, Vocabulary.fixed({"dog"})))

    def test_fixed_vocabulary_must_be_non_empty(self):
        with pytest.raises(InvalidDescriptor):
            Vocabulary.fixed([])

    def test_candidates_filter_matches_set_oracle(self):
        reg = Registry(
            [
                model("a-detect", {DET}),
                model("b-both", {DET, SEG}),
                model("c-segment", {SEG}),
            ]
        )
        p = mini_plan([("dog", True)])
        detect_task = next(t for t in p.tasks if t.verb is TaskVerb.DETECT)
        segment_task = next(t for t in p.tasks if t.verb is TaskVerb.SEGMENT)
        # independent set-filter oracle
        expected_detect = {d.name for d in reg if DET in d.capabilities}
        expected_segment = {d.name for d in reg if d.capabilities & {SEG, PSEG}}
        assert {d.name for d in reg.candidates(detect_task)} == expected_detect
        assert {d.name for d in reg.candidates(segment_task)} == expected_segment

    def test_candidates_prefers_verb_specialists(self):
        reg = Registry(
            [
                model("yolo-mock", {DET}, Vocabulary.fixed({"dog", "cat"})),
                model("sam-mock", {SEG}),
            ]
        )
        p = mini_plan([("dog", True)])
        detect_task, segment_task = modeled_tasks(p)
        assert [d.name for d in reg.candidates(detect_task)] == ["yolo-mock"]
        assert [d.name for d in reg.candidates(segment_task)] == ["sam-mock"]

    def test_no_capable_model(self):
        reg = Registry([model("sam-mock", {SEG})])
        p = mini_plan([("dog", False)])
        with pytest.raises(NoCapableModel):
            reg.candidates(modeled_tasks(p)[0])

    def test_descriptor_round_trip(self):
        d = model("m", {DET, PSEG}, Vocabulary.fixed({"dog", "cat"}), 2.5, 0.9)
        assert ModelDescriptor.from_dict(d.to_dict()) == d


class TestTaskCost:
    def test_vocabulary_miss_penalty_requires_prompt_path(self):
        p = mini_plan([("unicorn", True)])
        detect_task, segment_task = modeled_tasks(p)
        fixed = Vocabulary.fixed({"dog"})
        assert task_cost(detect_task, model("d", {DET}, fixed)) == math.inf
        assert task_cost(segment_task, model("s", {SEG}, fixed)) == math.inf
        assert task_cost(segment_task, model("ps", {SEG, PSEG}, fixed)) == 1.0
        assert task_cost(detect_task, model("open", {DET})) == 0.0

    def test_open_scan_targets_penalize_fixed_vocab(self):
        intents = IntentSet(
            intents=(Intent(ActionKind.DETECT, TargetSpec.anomaly()),),
            raw="anomaly scan",
        )
        p = plan(intents, [ImageRef("img0", 8, 8)])
        task = p.tasks[0]
        assert task_cost(task, model("open", {DET})) == 0.0
        assert task_cost(task, model("fixed", {DET}, Vocabulary.fixed({"dog"}))) == 1.0


class TestSelect:
    def test_unique_argmin_zero_mismatch(self):
        reg = Registry([model("yolo-mock", {DET}), model("sam-mock", {SEG})])
        p = mini_plan([("dog", True)])
        assignment, score = select(p, reg)
        detect_task, segment_task = modeled_tasks(p)
        assert assignment.model_for(detect_task.id) == "yolo-mock"
        assert assignment.model_for(segment_task.id) == "sam-mock"
        assert score.mismatch == 0.0
        assert score.total == score.regularizer

    def test_render_gets_compositor(self):
        reg = Registry([model("m", {DET, SEG})])
        p = mini_plan([("dog", True)])
        assignment, _ = select(p, reg)
        render_task = next(t for t in p.tasks if t.verb is TaskVerb.RENDER)
        assert assignment.model_for(render_task.id) == COMPOSITOR

    def test_distinct_models_blocks_double_duty(self):
        reg = Registry(
            [
                model("yolo-mock", {DET}, latency=2.0),
                model("sam-mock", {SEG}, latency=2.0),
                model("allinone-mock", {DET, SEG}, latency=0.0),
            ]
        )
        p = mini_plan([("bird", True)], constraints=frozenset({Constraint.DISTINCT_MODELS}))
        assignment, _ = select(p, reg)
        detect_task, segment_task = modeled_tasks(p)
        names = {assignment.model_for(detect_task.id), assignment.model_for(segment_task.id)}
        assert len(names) == 2
        assert assignment.model_for(detect_task.id) == "allinone-mock"

    def test_distinct_models_infeasible_with_single_model(self):
        reg = Registry([model("allinone-mock", {DET, SEG})])
        p = mini_plan([("bird", True)], constraints=frozenset({Constraint.DISTINCT_MODELS}))
        with pytest.raises(Infeasible):
            select(p, reg)

    def test_infeasible_when_no_finite_cost(self):
        reg = Registry([model("narrow", {DET}, Vocabulary.fixed({"cat"}))])
        p = mini_plan([("dog", False)])
        with pytest.raises(Infeasible):
            select(p, reg)

    def test_insertion_order_invariance(self):
        models = [
            model("b", {DET, SEG}, latency=1.0),
            model("a", {DET}, latency=1.0),
            model("c", {SEG}, latency=0.5),
        ]
        p = mini_plan([("dog", True), ("cat", False)])
        outcomes = []
        for order in itertools.permutations(models):
            assignment, score = select(p, Registry(order))
            outcomes.append((assignment.to_dict(), score.total))
        assert all(o == outcomes[0] for o in outcomes)

    def test_latency_scaling_preserves_argmin(self):
        # equal base terms and equal reliability: scaling latency is monotone
        p = mini_plan([("dog", True)])
        for scale in (1.0, 3.0, 250.0):
            reg = Registry(
                [
                    model("fast", {DET, SEG}, latency=1.0 * scale),
                    model("slow", {DET, SEG}, latency=4.0 * scale),
                ]
            )
            assignment, _ = select(p, reg)
            assert set(assignment.to_dict().values()) == {"fast", COMPOSITOR}

    def test_total_decomposition_exact(self):
        reg = Registry([model("m", {DET, SEG}, latency=1.7, reliability=0.83)])
        p = mini_plan([("dog", True)])
        weights = SelectorWeights(lmbda=0.25)
        _, score = select(p, reg, weights)
        assert score.total == score.mismatch + score.regularizer
        assert score.regularizer == 0.25 * len(p.tasks)

    def test_validator_rejects_incapable_assignment(self):
        reg = Registry([model("d", {DET}), model("s", {SEG})])
        p = mini_plan([("dog", True)])
        assignment, _ = select(p, reg)
        bad = dict(assignment.by_task)
        detect_task, segment_task = modeled_tasks(p)
        bad[segment_task.id] = "d"
        from uvgpt.registry import Assignment

        with pytest.raises(Infeasible):
            validate_assignment(p, Assignment(by_task=bad), reg)


class TestBruteForceOracle:
    CLASSES = ["dog", "cat", "lemon", "frog"]

    def random_registry(self, rng) -> Registry:
        n = rng.randint(1, 4)
        descriptors = []
        for i in range(n):
            caps = rng.choice(
                [{DET}, {SEG}, {DET, SEG}, {SEG, PSEG}, {DET, SEG, PSEG}]
            )
            vocab = (
                Vocabulary.open_vocab()
                if rng.random() < 0.6
                else Vocabulary.fixed(
                    rng.sample(self.CLASSES, rng.randint(1, len(self.CLASSES)))
                )
            )
            descriptors.append(
                model(
                    f"m{i}",
                    caps,
                    vocab,
                    latency=round(rng.uniform(0, 3), 2),
                    reliability=round(rng.uniform(0.5, 1.0), 2),
                )
            )
        return Registry(descriptors)

    def random_plan(self, rng):
        n_targets = rng.randint(1, 2)
        spec = [
            (rng.choice(self.CLASSES), rng.random() < 0.7) for _ in range(n_targets)
        ]
        spec = list({s[0]: s for s in spec}.values())  # unique classes
        return mini_plan(spec)

    def brute_force_total(self, p, reg, weights) -> float | None:
        tasks = modeled_tasks(p)
        per_task = []
        for task in tasks:
            costs = [
                (task_cost(task, d, weights), d.name)
                for d in reg
                if d.covers_verb(task.verb)
            ]
            costs = [c for c in costs if math.isfinite(c[0])]
            if not costs:
                return None
            per_task.append(costs)
        best = min(
            sum(c for c, _ in combo)
            for combo in itertools.product(*per_task)
        )
        return best + weights.lmbda * len(p.tasks)

    def test_select_matches_enumeration(self):
        rng = random.Random(97)
        weights = SelectorWeights()
        checked = 0
        for _ in range(150):
            reg = self.random_registry(rng)
            p = self.random_plan(rng)
            expected = self.brute_force_total(p, reg, weights)
            try:
                _, score = select(p, reg, weights)
            except (Infeasible, NoCapableModel):
                assert expected is None
                continue
            assert expected is not None
            assert score.total == pytest.approx(expected, abs=1e-12)
            checked += 1
        assert checked > 60
