"""One-shot prompt construction, completion backends, and key parsing.

The prompt shows the sub-question instructions, one worked demonstration
(input answer plus its keys as a JSON object), and the test answer with an
unterminated output cue. Completions are served from a record/replay fixture
store keyed by the SHA-256 of the exact prompt bytes, with an optional HTTP
backend for live runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import requests

from ._http import post_json
from .corpus import Question, StudentAnswer
from .errors import (
    ConfigError,
    ExtractionParseError,
    FixtureMissError,
    PromptError,
)

logger = logging.getLogger(__name__)

API_KEY_ENV = "KEYSCORE_LLM_API_KEY"

ANSWER_FIELD = "student's answer"


@dataclass(frozen=True)
class DemonstrationExample:
    """One worked example: a sample answer and its keys per sub-question."""

    input_answer: str
    output_keys: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        spans = [s for spans in self.output_keys.values() for s in spans]
        if not any(s.strip() for s in spans):
            raise PromptError("demonstration example must contain at least one non-empty span")


@dataclass(frozen=True)
class CompletionParams:
    model_id: str
    max_tokens: int = 256
    temperature: float = 0.0

    def __post_init__(self):
        if self.temperature != 0.0:
            raise ConfigError("pipeline runs require temperature 0.0")


@dataclass(frozen=True)
class JustificationKey:
    answer_id: str
    sub_question_label: str
    span_text: str


@dataclass(frozen=True)
class ExtractionResult:
    """Parsed keys per sub-question label; `error` is set on parse failure."""

    answer_id: str
    keys: Mapping[str, tuple[str, ...]]
    raw_completion: str
    error: str | None = None

    def iter_keys(self, label_order: Sequence[str]) -> list[JustificationKey]:
        out = []
        for label in label_order:
            for span in self.keys.get(label, ()):
                out.append(JustificationKey(self.answer_id, label, span))
        return out

    @property
    def key_count(self) -> int:
        return sum(len(spans) for spans in self.keys.values())


def default_instruction(question: Question) -> str:
    """Instruction text derived from the question's sub-question sentences."""
    if not question.sub_questions:
        raise PromptError(f"question {question.question_id} has no sub-questions")
    return "\n".join(f"({sq.label}) {sq.instruction_text}" for sq in question.sub_questions)


def build_prompt(
    question: Question,
    demo: DemonstrationExample,
    answer: StudentAnswer,
    instruction: str | None = None,
) -> str:
    """Render the one-shot extraction prompt. Byte-deterministic."""
    labels = question.labels
    unknown = sorted(set(demo.output_keys) - set(labels))
    if unknown:
        raise PromptError(
            f"demonstration references unknown sub-question label(s) {unknown} "
            f"for question {question.question_id}"
        )
    if instruction is None:
        instruction = default_instruction(question)
    if not instruction.strip():
        raise PromptError("instruction text must be non-empty")
    demo_input = json.dumps({ANSWER_FIELD: demo.input_answer}, ensure_ascii=False)
    demo_output = json.dumps(
        {label: list(demo.output_keys.get(label, ())) for label in labels},
        ensure_ascii=False,
    )
    test_input = json.dumps({ANSWER_FIELD: answer.text}, ensure_ascii=False)
    return (
        f"{instruction}\n\n"
        f"Input: {demo_input}\n"
        f"Output: {demo_output}\n\n"
        f"Input: {test_input}\n"
        f"Output:"
    )


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class PromptTemplate:
    """Per-question operator configuration: instruction plus demonstration."""

    instruction: str
    demo: DemonstrationExample


def load_template(path: str | Path) -> PromptTemplate:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("instruction", "demo_input", "demo_output"):
        if key not in obj:
            raise ConfigError(f"{path}: template missing {key!r}")
    output_keys = {}
    for label, spans in obj["demo_output"].items():
        if isinstance(spans, str):
            spans = [spans]
        if not isinstance(spans, list) or not all(isinstance(s, str) for s in spans):
            raise ConfigError(f"{path}: demo_output[{label!r}] must be a string or string list")
        output_keys[label] = tuple(spans)
    return PromptTemplate(
        instruction=obj["instruction"],
        demo=DemonstrationExample(input_answer=obj["demo_input"], output_keys=output_keys),
    )


class CompletionClient(Protocol):
    def complete(self, prompt: str, params: CompletionParams) -> str: ...


class ReplayStore:
    """JSONL fixture store mapping prompt digests to completions.

    Reads are lock-free after load; appends are serialized and flushed line
    by line so concurrent recorders never interleave partial lines.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            with open(self.path, "r", encoding="utf-8") as fh:
                for lineno, raw in enumerate(fh, start=1):
                    line = raw.strip()
                    if not line:
                        continue
                    try:
                        obj = json.loads(line)
                        self._entries[obj["prompt_sha256"]] = obj["completion"]
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ConfigError(
                            f"{self.path}: line {lineno}: malformed fixture: {exc}"
                        ) from None

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, prompt: str) -> str | None:
        return self._entries.get(prompt_digest(prompt))

    def record(self, prompt: str, completion: str, model_id: str) -> None:
        digest = prompt_digest(prompt)
        line = json.dumps(
            {"prompt_sha256": digest, "completion": completion, "model_id": model_id},
            ensure_ascii=False,
        )
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._entries[digest] = completion


class ReplayClient:
    """Replay-only backend: a fixture miss is an error, never a network call."""

    def __init__(self, store: ReplayStore):
        self.store = store

    def complete(self, prompt: str, params: CompletionParams) -> str:
        _check_prompt(prompt)
        completion = self.store.lookup(prompt)
        if completion is None:
            raise FixtureMissError(prompt_digest(prompt))
        return completion


class HTTPCompletionClient:
    """Text-completion backend over HTTP POST; temperature is forced to 0."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        retries: int = 2,
        api_key_env: str = API_KEY_ENV,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url
        self.timeout = timeout
        self.retries = retries
        self.api_key_env = api_key_env
        self._session = session or requests.Session()

    def complete(self, prompt: str, params: CompletionParams) -> str:
        _check_prompt(prompt)
        payload = {
            "model": params.model_id,
            "prompt": prompt,
            "temperature": 0,
            "max_tokens": params.max_tokens,
        }
        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = post_json(
            self._session, self.base_url, payload, self.timeout, self.retries, headers
        )
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ExtractionParseError(
                f"completion response from {self.base_url} missing text field"
            )
        return body["text"]


class RecordingClient:
    """Serve from fixtures when possible; otherwise call the live backend and
    persist the completion so later runs replay it."""

    def __init__(self, store: ReplayStore, live: CompletionClient):
        self.store = store
        self.live = live

    def complete(self, prompt: str, params: CompletionParams) -> str:
        _check_prompt(prompt)
        completion = self.store.lookup(prompt)
        if completion is not None:
            return completion
        completion = self.live.complete(prompt, params)
        self.store.record(prompt, completion, params.model_id)
        return completion


def _check_prompt(prompt: str) -> None:
    if not prompt:
        raise PromptError("prompt must be non-empty")


def parse_extraction(raw: str, question: Question, answer_id: str = "") -> ExtractionResult:
    """Parse a completion into per-label key lists.

    The first JSON object found in the text is used; surrounding prose is
    ignored. String values become singleton lists, missing labels empty
    lists, and values of any other shape are a parse error.
    """
    obj = _first_json_object(raw)
    keys: dict[str, tuple[str, ...]] = {}
    for label in question.labels:
        value = obj.get(label)
        if value is None:
            keys[label] = ()
        elif isinstance(value, str):
            keys[label] = tuple(s for s in [value.strip()] if s)
        elif isinstance(value, list) and all(isinstance(item, str) for item in value):
            keys[label] = tuple(s for s in (item.strip() for item in value) if s)
        else:
            raise ExtractionParseError(
                f"label {label!r} has a value of unsupported shape: {value!r}", raw=raw
            )
    return ExtractionResult(answer_id=answer_id, keys=keys, raw_completion=raw)


def _first_json_object(raw: str) -> dict:
    decoder = json.JSONDecoder()
    idx = raw.find("{")
    while idx != -1:
        try:
            value, _ = decoder.raw_decode(raw, idx)
        except json.JSONDecodeError:
            idx = raw.find("{", idx + 1)
            continue
        if isinstance(value, dict):
            return value
        idx = raw.find("{", idx + 1)
    raise ExtractionParseError("no JSON object found in completion", raw=raw)


def extract_keys(
    question: Question,
    demo: DemonstrationExample,
    answer: StudentAnswer,
    client: CompletionClient,
    params: CompletionParams,
    instruction: str | None = None,
) -> ExtractionResult:
    """Prompt, complete, and parse one answer.

    Transport errors propagate; a parse failure degrades to all-empty key
    lists with the failure recorded, so one bad completion cannot abort a
    batch.
    """
    prompt = build_prompt(question, demo, answer, instruction=instruction)
    raw = client.complete(prompt, params)
    try:
        return parse_extraction(raw, question, answer.answer_id)
    except ExtractionParseError as exc:
        logger.warning("extraction parse failed for answer %s: %s", answer.answer_id, exc)
        return ExtractionResult(
            answer_id=answer.answer_id,
            keys={label: () for label in question.labels},
            raw_completion=raw,
            error=str(exc),
        )


def extract_batch(
    question: Question,
    demo: DemonstrationExample,
    answers: Sequence[StudentAnswer],
    client: CompletionClient,
    params: CompletionParams,
    instruction: str | None = None,
    max_in_flight: int = 4,
) -> tuple[list[ExtractionResult], int]:
    """Extract a batch concurrently (bounded in-flight requests).

    Returns results in input order plus the count of parse failures.
    """
    if max_in_flight < 1:
        raise ConfigError("max_in_flight must be >= 1")
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        results = list(
            pool.map(
                lambda a: extract_keys(question, demo, a, client, params, instruction),
                answers,
            )
        )
    failures = sum(1 for r in results if r.error is not None)
    if failures:
        logger.warning(
            "extraction batch for question %s: %d of %d completions failed to parse",
            question.question_id,
            failures,
            len(results),
        )
    return results, failures


@dataclass
class Extractor:
    """Per-question templates bound to a completion backend, for grading."""

    client: CompletionClient
    params: CompletionParams
    templates: Mapping[str, PromptTemplate] = field(default_factory=dict)

    def template_for(self, question: Question) -> PromptTemplate:
        template = self.templates.get(question.question_id)
        if template is None:
            raise PromptError(f"no prompt template configured for question {question.question_id}")
        return template

    def extract(self, question: Question, answer: StudentAnswer) -> ExtractionResult:
        template = self.template_for(question)
        return extract_keys(
            question, template.demo, answer, self.client, self.params,
            instruction=template.instruction,
        )
