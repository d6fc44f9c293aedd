"""Grammar-based parse of a prompt into an ordered intent set.

The grammar is deterministic: clauses split on connectives and sentence
punctuation, verbs come from a fixed lexicon, and anything the lexicon does
not know is delegated to a pluggable semantic resolver (table-driven by
default, LLM-backed behind the same interface). Parsing never looks at
images.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol

from .errors import EmptyInstruction, NoActionFound, UnresolvedPronoun
from .types import (
    ActionKind,
    Constraint,
    Intent,
    IntentSet,
    Quantifier,
    TargetKind,
    TargetSpec,
    normalize_class_label,
    singularize,
)

# ---------------------------------------------------------------------------
# lexicon

DETECT_VERBS = {"find", "detect", "locate", "identify", "see", "spot"}
SEGMENT_VERBS = {"segment", "mask", "highlight", "cut"}  # "cut" pairs with "out"

_VERB_VARIANTS = {}
for _base in DETECT_VERBS | SEGMENT_VERBS:
    _VERB_VARIANTS[_base] = _base
for _base, _forms in {
    "find": ("finds", "finding", "found"),
    "detect": ("detects", "detecting", "detected"),
    "locate": ("locates", "locating", "located"),
    "identify": ("identifies", "identifying", "identified"),
    "see": ("sees", "seeing"),
    "spot": ("spots", "spotting", "spotted"),
    "segment": ("segments", "segmenting", "segmented"),
    "mask": ("masks", "masking", "masked"),
    "highlight": ("highlights", "highlighting", "highlighted"),
    "cut": ("cuts", "cutting"),
}.items():
    for _form in _forms:
        _VERB_VARIANTS[_form] = _base

FIRST_DETERMINERS = {"a", "an", "the", "any"}
ALL_QUANTIFIER = "all"
PRONOUNS = {"it", "them"}
ANOMALY_MARKERS = {"anomaly", "different"}
MAIN_MARKER = "main"

# Function words that never belong to a target phrase.
NOISE_WORDS = {
    "in", "on", "of", "at", "to", "for", "from", "into",
    "me", "my", "i", "we", "us", "you", "your",
    "can", "could", "would", "will", "please", "do", "does",
    "is", "are", "there", "this", "that", "these", "those",
    "by", "with", "if", "so", "have", "has", "out", "only",
    "image", "images", "picture", "pictures", "photo", "photos",
    "scene", "scenes", "object", "objects",
    "using", "use", "more", "than", "one", "foundation", "model", "models",
    "its", "their", "some", "every",
}

CONDITIONAL_BIGRAMS = {("if", "so"), ("if", "have")}

_SENTENCE_PUNCT = ".?!;"
_CLAUSE_PUNCT = ","

_TOKEN_RE = re.compile(r'"([^"]*)"|([A-Za-z0-9][A-Za-z0-9\'\-]*)|([.?!;,])')


def _lex(text: str) -> list[tuple[str, str]]:
    """(kind, value) stream: 'word' tokens plus sentence/clause 'punct' marks.

    Double-quoted spans survive as a single word token; slashes act as
    separators ("detect/segment" is two verbs, not one word).
    """
    prepared = text.replace("/", " ")
    out: list[tuple[str, str]] = []
    for match in _TOKEN_RE.finditer(prepared):
        quoted, word, punct = match.groups()
        if quoted is not None:
            inner = " ".join(quoted.lower().split())
            if inner:
                out.append(("word", inner))
        elif word is not None:
            out.append(("word", word.lower()))
        else:
            out.append(("punct", punct))
    return out


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens with `.,?!` punctuation stripped."""
    if not text or not text.strip():
        raise EmptyInstruction("instruction text is empty")
    tokens = [value for kind, value in _lex(text) if kind == "word"]
    if not tokens:
        raise EmptyInstruction("instruction has no words")
    return tokens


# ---------------------------------------------------------------------------
# semantic resolution


class SemanticResolver(Protocol):
    """Maps free-form target phrases to target specs.

    Implementations must be deterministic for a fixed configuration and safe
    for concurrent resolve calls.
    """

    def resolve(self, phrase: str) -> TargetSpec | None: ...

    def expand(self, category: str) -> frozenset[str]: ...


DEFAULT_ONTOLOGY: Mapping[str, frozenset[str]] = {
    "animal": frozenset(
        {"dog", "cat", "frog", "bird", "sheep", "horse", "cow",
         "elephant", "zebra", "giraffe", "bear"}
    ),
    "building": frozenset({"tower", "house", "bridge-tower"}),
}


@dataclass(frozen=True)
class TableResolver:
    """Ontology-table resolver; unknown phrases pass through as named classes."""

    ontology: Mapping[str, frozenset[str]] = field(
        default_factory=lambda: dict(DEFAULT_ONTOLOGY)
    )

    def resolve(self, phrase: str) -> TargetSpec:
        name = normalize_class_label(phrase)
        if name in self.ontology:
            return TargetSpec.category(name)
        return TargetSpec.named(name)

    def expand(self, category: str) -> frozenset[str]:
        return frozenset(self.ontology.get(normalize_class_label(category), ()))


def default_resolver() -> TableResolver:
    return TableResolver()


class HttpSemanticResolver:
    """Resolver backed by a remote service speaking the plug-in contract:
    request {"phrase": str}, response {"kind", "class"?, "members"?}.

    ``transport`` posts a JSON payload to the URL and returns the decoded
    response; injectable for testing.
    """

    def __init__(self, url: str, transport: Callable[[str, dict], dict] | None = None):
        self.url = url
        self._transport = transport or _requests_post_json
        self._members: dict[str, frozenset[str]] = {}

    def resolve(self, phrase: str) -> TargetSpec | None:
        payload = self._transport(self.url, {"phrase": normalize_class_label(phrase)})
        kind = payload.get("kind")
        if kind is None:
            return None
        spec = TargetSpec(TargetKind(kind), payload.get("class"))
        if spec.kind is TargetKind.CATEGORY and "members" in payload:
            self._members[spec.class_name] = frozenset(payload["members"])
        return spec

    def expand(self, category: str) -> frozenset[str]:
        name = normalize_class_label(category)
        if name not in self._members:
            self.resolve(name)
        return self._members.get(name, frozenset())


def _requests_post_json(url: str, payload: dict) -> dict:
    import requests

    response = requests.post(url, json=payload, timeout=10)
    response.raise_for_status()
    return response.json()


# ---------------------------------------------------------------------------
# parsing


@dataclass
class _Draft:
    action: ActionKind
    target: TargetSpec
    quantifier: Quantifier
    render: bool = True
    draw_boxes: bool = True
    conditional: bool = False
    constraints: set[Constraint] = field(default_factory=set)

    def freeze(self) -> Intent:
        return Intent(
            action=self.action,
            target=self.target,
            quantifier=self.quantifier,
            render=self.render,
            draw_boxes=self.draw_boxes,
            conditional=self.conditional,
            constraints=frozenset(self.constraints),
        )


@dataclass
class _ClauseReading:
    actions: list[ActionKind] = field(default_factory=list)
    targets: list[tuple[TargetSpec, Quantifier]] = field(default_factory=list)
    pronoun_plural: bool = False
    pronoun_single: bool = False
    conditional: bool = False
    boxes_off: bool = False


def _verb_base(token: str) -> str | None:
    return _VERB_VARIANTS.get(token)


def _is_keyword(token: str) -> bool:
    return (
        token in _VERB_VARIANTS
        or token in FIRST_DETERMINERS
        or token == ALL_QUANTIFIER
        or token in PRONOUNS
        or token in NOISE_WORDS
        or token in ANOMALY_MARKERS
        or token == MAIN_MARKER
    )


def _split_clauses(tokens: Iterable[tuple[str, str]]) -> list[list[list[str]]]:
    """Group the lex stream into sentences of clauses."""
    sentences: list[list[list[str]]] = []
    clause: list[str] = []
    sentence: list[list[str]] = []

    def close_clause():
        nonlocal clause
        if clause:
            sentence.append(clause)
            clause = []

    def close_sentence():
        nonlocal sentence
        close_clause()
        if sentence:
            sentences.append(sentence)
            sentence = []

    for kind, value in tokens:
        if kind == "punct":
            if value in _SENTENCE_PUNCT:
                close_sentence()
            elif value == _CLAUSE_PUNCT:
                close_clause()
        elif value in ("and", "then"):
            close_clause()
        else:
            clause.append(value)
    close_sentence()
    return sentences


def _read_clause(
    tokens: list[str],
    resolver: SemanticResolver,
) -> _ClauseReading:
    reading = _ClauseReading()
    pending_quant: Quantifier | None = None
    phrase: list[str] = []
    absorb_phrase = False
    segment_verb_seen = False

    def close_phrase():
        nonlocal phrase, pending_quant, absorb_phrase
        if phrase:
            if absorb_phrase:
                absorb_phrase = False
            else:
                raw = " ".join(phrase)
                plural = singularize(phrase[-1]) != phrase[-1]
                quant = pending_quant or (Quantifier.ALL if plural else Quantifier.FIRST)
                spec = resolver.resolve(raw) or TargetSpec.named(raw)
                reading.targets.append((spec, quant))
            pending_quant = None
            phrase = []

    for i, token in enumerate(tokens):
        base = _verb_base(token)
        if base is not None:
            close_phrase()
            action = ActionKind.DETECT if base in DETECT_VERBS else ActionKind.SEGMENT
            if action is ActionKind.SEGMENT:
                segment_verb_seen = True
            if action not in reading.actions:
                reading.actions.append(action)
        elif token == ALL_QUANTIFIER:
            close_phrase()
            pending_quant = Quantifier.ALL
        elif token in FIRST_DETERMINERS:
            close_phrase()
            pending_quant = Quantifier.FIRST
        elif token in PRONOUNS:
            close_phrase()
            if token == "it":
                reading.pronoun_single = True
            else:
                reading.pronoun_plural = True
        elif token in ANOMALY_MARKERS:
            close_phrase()
            reading.targets.append(
                (TargetSpec.anomaly(), pending_quant or Quantifier.FIRST)
            )
            pending_quant = None
            absorb_phrase = True  # swallow the head noun ("object", "animal")
        elif token == MAIN_MARKER:
            close_phrase()
            reading.targets.append(
                (TargetSpec.main_object(), pending_quant or Quantifier.FIRST)
            )
            pending_quant = None
            absorb_phrase = True
        elif token == "only":
            close_phrase()
            if segment_verb_seen:
                reading.boxes_off = True
        elif token in NOISE_WORDS:
            close_phrase()
            if i + 1 < len(tokens) and (token, tokens[i + 1]) in CONDITIONAL_BIGRAMS:
                reading.conditional = True
        else:
            phrase.append(token)
    close_phrase()
    return reading


def _has_distinct_models_phrase(tokens: list[str]) -> bool:
    for i in range(len(tokens) - 2):
        if tokens[i : i + 3] == ["more", "than", "one"]:
            tail = tokens[i + 3 : i + 6]
            if any(t in ("foundation", "model", "models") for t in tail):
                return True
    return False


def parse(text: str, resolver: SemanticResolver | None = None) -> IntentSet:
    """Parse a prompt into intents. Pure in (text, resolver configuration)."""
    resolver = resolver or default_resolver()
    sentences = _split_clauses(_lex(text))
    if not any(sentences):
        raise EmptyInstruction("instruction text is empty")

    drafts: list[_Draft] = []
    index: dict[tuple[ActionKind, TargetSpec], _Draft] = {}
    antecedents: list[tuple[TargetSpec, Quantifier]] = []
    inherited_actions: list[ActionKind] = []

    def upsert(
        action: ActionKind,
        target: TargetSpec,
        quant: Quantifier,
        reading: _ClauseReading,
    ) -> _Draft:
        key = (action, target)
        draft = index.get(key)
        if draft is None:
            draft = _Draft(action=action, target=target, quantifier=quant)
            drafts.append(draft)
            index[key] = draft
        draft.conditional = draft.conditional or reading.conditional
        if action is ActionKind.SEGMENT and reading.boxes_off:
            draft.draw_boxes = False
        return draft

    for sentence in sentences:
        flat = [t for clause in sentence for t in clause]
        distinct = _has_distinct_models_phrase(flat)
        sentence_drafts: list[_Draft] = []
        pending_actions: list[ActionKind] = []

        for clause in sentence:
            reading = _read_clause(clause, resolver)

            # pronouns see prior targets plus the ones this clause introduced
            scope = list(antecedents)
            for pair in reading.targets:
                if pair[0] not in (t for t, _ in scope):
                    scope.append(pair)

            targets = list(reading.targets)
            if reading.pronoun_single:
                if not scope:
                    raise UnresolvedPronoun(f"pronoun with no antecedent in {text!r}")
                last = scope[-1]
                if last[0] not in (t for t, _ in targets):
                    targets.append(last)
            if reading.pronoun_plural:
                if not scope:
                    raise UnresolvedPronoun(f"pronoun with no antecedent in {text!r}")
                for ante in scope:
                    if ante[0] not in (t for t, _ in targets):
                        targets.append(ante)

            if reading.actions and not targets:
                pending_actions.extend(
                    a for a in reading.actions if a not in pending_actions
                )
                continue
            if not targets:
                continue

            actions = list(pending_actions)
            for a in reading.actions:
                if a not in actions:
                    actions.append(a)
            pending_actions = []
            if not actions:
                actions = list(inherited_actions)
            if actions:
                inherited_actions = list(actions)

            for target, quant in reading.targets:
                if target not in (t for t, _ in antecedents):
                    antecedents.append((target, quant))

            for action in actions:
                for target, quant in targets:
                    draft = upsert(action, target, quant, reading)
                    if draft not in sentence_drafts:
                        sentence_drafts.append(draft)

        if distinct:
            for draft in sentence_drafts:
                draft.constraints.add(Constraint.DISTINCT_MODELS)

    if not drafts:
        raise NoActionFound(f"no action verb in {text!r}")
    return IntentSet(intents=tuple(d.freeze() for d in drafts), raw=text)
