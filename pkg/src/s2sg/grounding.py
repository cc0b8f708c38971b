"""Ground script sentences to slide objects.

A grounder takes one serialized slide plus its script sentences and returns a
:class:`~s2sg.model.GroundingResult`. Two are provided: :class:`LlmGrounder`,
which prompts a chat model, and :class:`LexicalGrounder`, a deterministic
token-overlap baseline used offline and as a test oracle.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Protocol

from .errors import AllSlidesFailed, CredentialError, ParseError, RepairExhausted
from .interchange import FULL, FormatVariant, SlideDocument, SlideFailure, serialize_slide
from .llm import LlmRequest, prompt_hash
from .model import GroundingResult, ScriptSentence, SlideUnit

log = logging.getLogger(__name__)

EVAL = "eval"
CONDUCT = "conduct"

TITLE_ALLOWED = "- The slide title may be selected when the sentence is about the slide's overall topic."
TITLE_EXCLUDED = "- Slide titles are not candidates; never select them."


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("s2sg.prompts").joinpath(f"{name}.txt").read_text(encoding="utf-8").rstrip("\n")


def default_rules() -> str:
    return load_template("rules")


@dataclass(frozen=True)
class GroundingConfig:
    temperature: float = 0.0
    model_name: str = ""
    variant: FormatVariant = FULL
    exclude_titles: bool = False
    max_repair_attempts: int = 1
    rules: str | None = None
    avatar_visible: bool = True

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_repair_attempts < 0:
            raise ValueError("max_repair_attempts must be >= 0")

    def rule_text(self) -> str:
        base = self.rules if self.rules is not None else default_rules()
        return base.rstrip("\n") + "\n" + (TITLE_EXCLUDED if self.exclude_titles else TITLE_ALLOWED)


@dataclass(frozen=True)
class PromptBundle:
    mode: str
    instruction: str
    rules: str
    slide_payload: str
    sentence_list: str

    @property
    def system_text(self) -> str:
        return self.instruction

    @property
    def user_text(self) -> str:
        return (
            load_template("input")
            .replace("{slide_payload}", self.slide_payload)
            .replace("{sentences}", self.sentence_list)
        )

    @property
    def text(self) -> str:
        return self.system_text + "\n\n" + self.user_text

    @property
    def prompt_hash(self) -> str:
        return prompt_hash(self.system_text, self.user_text)

    def request(self, config: GroundingConfig, user_suffix: str = "") -> LlmRequest:
        return LlmRequest(
            model_name=config.model_name,
            system_text=self.system_text,
            user_text=self.user_text + user_suffix,
            temperature=config.temperature,
            response_format_hint="json",
        )


def build_prompt(
    doc: SlideDocument,
    sentences: Sequence[ScriptSentence],
    mode: str = EVAL,
    config: GroundingConfig | None = None,
    clip_lengths: Sequence[float] | None = None,
) -> PromptBundle:
    if mode not in (EVAL, CONDUCT):
        raise ValueError(f"mode must be {EVAL!r} or {CONDUCT!r}")
    config = config or GroundingConfig()
    rules = config.rule_text()
    instruction = load_template(mode).replace("{rules}", rules)
    if mode == CONDUCT:
        commands = load_template("commands")
        if config.avatar_visible:
            commands += "\n" + load_template("avatar")
        instruction = instruction.replace("{commands}", commands)
    lines = []
    for s in sentences:
        if mode == CONDUCT and clip_lengths is not None:
            lines.append(f"{s.index} (clip {clip_lengths[s.index]:.2f} s): {s.text}")
        else:
            lines.append(f"{s.index}: {s.text}")
    return PromptBundle(mode, instruction, rules, doc.text, "\n".join(lines))


# ---------------------------------------------------------------------------
# reply parsing

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json(reply: str) -> Any:
    """Decode the JSON value in a model reply, tolerating code fences and chatter."""
    candidates = [reply.strip()]
    candidates += [m.strip() for m in _FENCE.findall(reply)]
    for opener, closer in (("{", "}"), ("[", "]")):
        start, end = reply.find(opener), reply.rfind(closer)
        if 0 <= start < end:
            candidates.append(reply[start : end + 1])
    first_error = None
    for text in candidates:
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            first_error = first_error or exc
    if first_error is None:
        raise ParseError("empty reply")
    raise ParseError(f"reply is not JSON: {first_error.msg}", first_error.lineno, first_error.colno)


def _as_index(key: Any) -> int | None:
    if isinstance(key, bool):
        return None
    if isinstance(key, int):
        return key
    if isinstance(key, str):
        text = key.strip().lstrip("#")
        if text.lstrip("-").isdigit():
            return int(text)
    return None


def sentence_table(data: Any) -> dict[Any, Any]:
    """Normalize the reply shapes we accept into ``{raw index: value}``."""
    if isinstance(data, Mapping):
        for wrapper in ("groundings", "sentences", "results"):
            if wrapper in data:
                return sentence_table(data[wrapper])
        if data and any(_as_index(k) is not None for k in data):
            return dict(data)
        if not data:
            return {}
        raise ParseError(f"reply object has no sentence indices (keys: {sorted(map(str, data))[:5]})")
    if isinstance(data, list):
        if all(isinstance(x, Mapping) and ("index" in x or "sentence_index" in x) for x in data):
            return {x.get("index", x.get("sentence_index")): x for x in data}
        return dict(enumerate(data))
    raise ParseError(f"reply must be a JSON object or list, got {type(data).__name__}")


def parse_grounding_reply(
    reply: str,
    valid_ids: Sequence[str],
    n_sentences: int,
    object_order: Sequence[str] | None = None,
) -> GroundingResult:
    """Turn a model reply into a GroundingResult covering sentences 0..n-1.

    Duplicate ids keep their first occurrence; ids outside ``valid_ids`` and
    out-of-range indices are dropped and noted in ``warnings``.
    """
    table = sentence_table(extract_json(reply))
    valid = set(valid_ids)
    warnings: list[str] = []
    rows: dict[int, dict[str, None]] = {}
    for key, value in table.items():
        index = _as_index(key)
        if index is None or not 0 <= index < n_sentences:
            warnings.append(f"ignored entry for unknown sentence {key!r}")
            continue
        if isinstance(value, Mapping):
            value = value.get("shape_ids", value.get("ids", []))
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            warnings.append(f"sentence {index}: expected a list of ids, got {type(value).__name__}")
            continue
        row = rows.setdefault(index, {})
        for sid in value:
            if not isinstance(sid, str):
                warnings.append(f"sentence {index}: ignored non-string id {sid!r}")
            elif sid not in valid:
                warnings.append(f"sentence {index}: dropped unknown id {sid}")
            else:
                row.setdefault(sid, None)
    order = tuple(object_order if object_order is not None else valid_ids)
    result = GroundingResult.from_mapping(order, rows, n_sentences)
    for w in warnings:
        log.warning(w)
    return GroundingResult(result.object_order, result.groundings, tuple(warnings))


# ---------------------------------------------------------------------------
# lexical baseline


def tokens(text: str) -> set[str]:
    out = set()
    for raw in text.split():
        start, end = 0, len(raw)
        while start < end and unicodedata.category(raw[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(raw[end - 1]).startswith("P"):
            end -= 1
        if start < end:
            out.add(raw[start:end].lower())
    return out


def lexical_score(sentence: str, obj: str) -> float:
    obj_tokens = tokens(obj)
    if not obj_tokens:
        return 0.0
    return len(tokens(sentence) & obj_tokens) / len(obj_tokens)


def _lexical(
    objects: Sequence[tuple[str, str]],
    sentences: Sequence[ScriptSentence],
    theta: float,
    object_order: Sequence[str],
) -> GroundingResult:
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be within [0, 1], got {theta}")
    object_tokens = [(sid, tokens(text)) for sid, text in objects]
    rows = []
    for s in sentences:
        words = tokens(s.text)
        rows.append(
            tuple(
                sid
                for sid, toks in object_tokens
                if toks and len(words & toks) / len(toks) >= theta
            )
        )
    return GroundingResult(tuple(object_order), tuple(rows))


def lexical_ground(
    unit: SlideUnit, sentences: Sequence[ScriptSentence] | None = None, theta: float = 0.5
) -> GroundingResult:
    sentences = unit.sentences if sentences is None else sentences
    objects = [(e.shape_id, e.content) for e in unit.elements()]
    return _lexical(objects, sentences, theta, unit.object_order())


class Grounder(Protocol):
    single_flight: bool

    def ground(self, doc: SlideDocument, sentences: Sequence[ScriptSentence]) -> GroundingResult: ...


@dataclass(frozen=True)
class LexicalGrounder:
    theta: float = 0.5
    single_flight = False

    def ground(self, doc: SlideDocument, sentences: Sequence[ScriptSentence]) -> GroundingResult:
        objects = [(e["shape_id"], e["content"]) for e in doc.elements()]
        return _lexical(objects, sentences, self.theta, doc.shape_ids())


def repair_suffix(error: Exception) -> str:
    return (
        f"\n\nYour previous reply could not be used: {error}. "
        "Reply again with JSON only, exactly in the requested output format."
    )


class LlmGrounder:
    """Grounds a slide by prompting a responder (live client or scripted)."""

    def __init__(self, responder, config: GroundingConfig | None = None):
        self.responder = responder
        self.config = config or GroundingConfig()
        self.single_flight = getattr(responder, "single_flight", False)

    def ground(self, doc: SlideDocument, sentences: Sequence[ScriptSentence]) -> GroundingResult:
        bundle = build_prompt(doc, sentences, EVAL, self.config)
        valid = doc.shape_ids()
        suffix = ""
        error: Exception | None = None
        for attempt in range(self.config.max_repair_attempts + 1):
            reply = self.responder.complete(bundle.request(self.config, suffix))
            try:
                return parse_grounding_reply(reply.text, valid, len(sentences))
            except ParseError as exc:
                error = exc
                log.warning("slide %s: unparseable reply (attempt %d): %s", doc.slide_number, attempt + 1, exc)
                suffix = repair_suffix(exc)
        raise RepairExhausted(
            f"slide {doc.slide_number}: no parseable reply after "
            f"{self.config.max_repair_attempts + 1} attempts ({error})",
            GroundingResult.empty(valid, len(sentences)),
        )


# ---------------------------------------------------------------------------
# orchestration


def ground_slide(unit: SlideUnit, grounder: Grounder, config: GroundingConfig | None = None) -> GroundingResult:
    config = config or GroundingConfig()
    target = unit.without_titles() if config.exclude_titles else unit
    doc = serialize_slide(target, config.variant)
    result = grounder.ground(doc, unit.sentences)
    return result.with_object_order(unit.object_order())


@dataclass
class DeckGrounding:
    results: dict[int, GroundingResult] = field(default_factory=dict)
    failures: list[SlideFailure] = field(default_factory=list)

    @property
    def failed_slides(self) -> set[int]:
        return {f.slide_number for f in self.failures}


def ground_deck(
    units: Sequence[SlideUnit],
    grounder: Grounder,
    config: GroundingConfig | None = None,
    max_workers: int = 4,
) -> DeckGrounding:
    """Ground every slide independently; one slide's failure spares the rest.

    Slides whose replies stayed malformed get an all-empty result plus a
    failure record; any other per-slide exception gets only the record.
    Credential errors are not per-slide and propagate.
    """
    config = config or GroundingConfig()
    workers = 1 if getattr(grounder, "single_flight", False) else max(1, max_workers)

    def run(unit: SlideUnit):
        try:
            return unit, ground_slide(unit, grounder, config), None
        except CredentialError:
            raise
        except RepairExhausted as exc:
            return unit, exc.fallback.with_object_order(unit.object_order()), exc
        except Exception as exc:  # noqa: BLE001 - isolate per-slide failures
            log.error("slide %d failed: %s", unit.slide_number, exc)
            return unit, None, exc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(run, units))

    out = DeckGrounding()
    for unit, result, exc in sorted(outcomes, key=lambda o: o[0].slide_number):
        if result is not None:
            out.results[unit.slide_number] = result
        if exc is not None:
            out.failures.append(SlideFailure(unit.slide_number, f"{type(exc).__name__}: {exc}"))
    if units and len(out.failures) == len(units):
        raise AllSlidesFailed(f"all {len(units)} slides failed to ground", out.failures)
    return out
