"""Verified execution with retry: a faulty backend fails verification and
the engine falls back to the next capable model.

Run: python3 demos/05_execution_and_retry.py
"""

from uvgpt.config import Settings
from uvgpt.engine import LoadedImage
from uvgpt.pipeline import Orchestrator
from uvgpt.registry import Capability, ModelDescriptor, Registry, Vocabulary
from uvgpt.testing import SceneObject, build_scene
from uvgpt.types import BBox, ImageRef
from uvgpt.workers import TruthStore, mock_backends

# A synthetic yard scene: one dog, ground truth in a sidecar fixture.
image, truth = build_scene(64, 48, [SceneObject("dog", BBox(8, 10, 22, 16), 0.9)])
loaded = LoadedImage(ref=ImageRef("yard", 64, 48), raster=image)
truth_store = TruthStore({"yard": truth})


def descriptor(name, caps, latency):
    return ModelDescriptor(
        name=name,
        capabilities=frozenset(caps),
        vocabulary=Vocabulary.open_vocab(),
        latency_cost=latency,
    )


# The faulty detector is cheapest, so the selector ranks it first; its empty
# detections fail the coverage check and trigger the retry path.
registry = Registry([
    descriptor("aaa-faulty", {Capability.DETECT}, latency=0.0),
    descriptor("yolo-mock", {Capability.DETECT}, latency=1.0),
    descriptor("sam-mock", {Capability.SEGMENT}, latency=1.0),
])
backends = mock_backends(registry, truth_store, faulty=("aaa-faulty",))

orchestrator = Orchestrator(registry, backends, settings=Settings())
result = orchestrator.process("find the dog and segment it", [loaded])

print("trace (task, model, attempt, verdict):")
for step in result.trace.steps:
    failed = ",".join(step.verification.failed_names()) or "-"
    print(f"   task {step.task_id}  {step.model_name:12s} attempt {step.attempt}  "
          f"{step.verification.verdict.value:12s} failed_checks={failed}")

scene = result.scene.images[0]
print()
print("detections:", [(d.class_label, d.bbox.as_list(), d.confidence)
                      for d in scene.detections])
print("masks:", [(m.instance_id, m.foreground_pixels()) for m in scene.masks])

# Conditional prompts never error on absence; the miss is recorded instead.
quiet = orchestrator.process("Can you see a bird? Please mask it if so.", [loaded])
print()
print("conditional miss ->", [str(t) for t in quiet.scene.not_found])
