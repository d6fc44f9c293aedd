"""From prompt text to normalized intents: the language-only stage.

Run: python3 demos/02_instruction_parsing.py
"""

from uvgpt.parsing import default_resolver, parse, tokenize

PROMPTS = [
    "find the guitar and segment it",
    "find the yellow flower and segment it",
    "find an animal and mask it",
    "detect frog and then highlight it with masking",
    "highlight all frogs by masking them",
    "mask out the main object in the image",
    "Can you see a bird? Please mask it if so.",
    "Detect and segment the bird using more than one foundation models.",
    "Mask any building in the image.",
    "identify any anomaly object and segment it if have",
    "find any anomaly object and detect/segment it",
    "find a different animal and segment it",
    "Find dogs and lemons in the images and then highlight them only",
]

# Tokenization is lowercase words with sentence punctuation stripped.
print("tokens:", tokenize("Can you see a bird? Please mask it if so."))
print()

# Each prompt becomes an ordered list of (action, target, quantifier)
# intents. Pronouns are already bound; categories come from the resolver's
# ontology; unknown nouns pass through as open-vocabulary classes.
for prompt in PROMPTS:
    intents = parse(prompt)
    print(f"{prompt!r}")
    for intent in intents.intents:
        flags = []
        if intent.conditional:
            flags.append("conditional")
        if not intent.draw_boxes:
            flags.append("boxes-off")
        flags.extend(c.value for c in intent.constraints)
        suffix = f"  [{', '.join(flags)}]" if flags else ""
        print(
            f"   {intent.action.value:7s} {str(intent.target):15s} "
            f"{intent.quantifier.value}{suffix}"
        )
    print()

# The resolver is pluggable: the default is a small table
resolver = default_resolver()
print("animal expands to:", sorted(resolver.expand("animal")))
print("unknown noun:", resolver.resolve("quux"))
