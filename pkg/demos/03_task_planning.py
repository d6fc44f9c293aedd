"""Compiling intents into a dependency-ordered task DAG.

Run: python3 demos/03_task_planning.py
"""

import json

from uvgpt.parsing import parse
from uvgpt.planning import plan, validate_plan
from uvgpt.types import ImageRef

# The canonical two-image request: every target fans out per image, each
# segment hangs off the detect that located the same target, every image
# gets a render step, and a final integrate joins the outputs.
intents = parse("Find dogs and lemons in the images and then highlight them only")
images = [ImageRef("street", 640, 480), ImageRef("market", 640, 480)]

task_plan = plan(intents, images)
validate_plan(task_plan)

for task in task_plan.tasks:
    deps = sorted(task.depends_on) or "-"
    target = str(task.target) if task.target else "-"
    image = task.image if task.image is not None else "-"
    print(f"task {task.id:2d}  {task.verb.value:9s} target={target:8s} "
          f"image={image}  deps={deps}")

print()
print("tasks:", len(task_plan.tasks), " (8 leaves + 2 render + 1 integrate)")

# Segment-only prompts get their detect synthesized
solo = plan(parse("highlight all frogs by masking them"), [ImageRef("pond", 320, 240)])
print("segment-only prompt compiles to:",
      [t.verb.value for t in solo.tasks])

# The serialized form used by the CLI --dump-plan flag
print()
print(json.dumps(solo.to_dict(), indent=2))
