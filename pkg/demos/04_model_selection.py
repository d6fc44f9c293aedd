"""Capability-based model routing: the additive mismatch + regularizer score.

Run: python3 demos/04_model_selection.py
"""

from uvgpt.parsing import parse
from uvgpt.planning import plan
from uvgpt.registry import (
    Capability,
    ModelDescriptor,
    Registry,
    SelectorWeights,
    Vocabulary,
    select,
    task_cost,
)
from uvgpt.types import ImageRef

# Three backends: a fast fixed-vocabulary detector, a slower open-set
# detector, and an open segmenter. Costs are abstract units.
registry = Registry([
    ModelDescriptor(
        name="yolo-mock",
        capabilities=frozenset({Capability.DETECT}),
        vocabulary=Vocabulary.fixed({"dog", "cat", "bird", "guitar"}),
        latency_cost=0.5,
        reliability=0.98,
    ),
    ModelDescriptor(
        name="dino-mock",
        capabilities=frozenset({Capability.DETECT}),
        vocabulary=Vocabulary.open_vocab(),
        latency_cost=2.0,
        reliability=0.95,
    ),
    ModelDescriptor(
        name="sam-mock",
        capabilities=frozenset({Capability.SEGMENT}),
        vocabulary=Vocabulary.open_vocab(),
        latency_cost=1.0,
        reliability=0.97,
    ),
])

weights = SelectorWeights()  # lambda=0.1, mu=0.01, nu=0.05
image = [ImageRef("img", 640, 480)]


def show(prompt):
    p = plan(parse(prompt), image)
    assignment, score = select(p, registry, weights)
    print(f"{prompt!r}")
    for task in p.tasks:
        name = assignment.model_for(task.id)
        cost = ""
        if name != "compositor":
            cost = f"  cost={task_cost(task, registry.get(name), weights):.4f}"
        print(f"   {task.verb.value:9s} -> {name}{cost}")
    print(f"   score: mismatch={score.mismatch:.4f} "
          f"regularizer={score.regularizer:.2f} total={score.total:.4f}")
    print()


# In-vocabulary classes route to the cheap fixed detector
show("find the dog and segment it")

# Out-of-vocabulary classes pay infinity on the fixed detector, so the
# open-set one wins despite higher latency
show("find the waterfall and segment it")

# Open scans (anomaly / main object) penalize fixed vocabularies
show("mask out the main object in the image")

# The distinct-models constraint forces detect and segment onto different
# backends even when one cheap model covers both verbs
registry.register(ModelDescriptor(
    name="allinone-mock",
    capabilities=frozenset({Capability.DETECT, Capability.SEGMENT}),
    vocabulary=Vocabulary.open_vocab(),
    latency_cost=0.0,
    reliability=1.0,
))
show("Detect and segment the bird using more than one foundation models.")
