"""ASAP-SAS corpus ingestion, seeded splits, and manual annotation loading.

The corpus is a tab-separated file with columns Id, EssaySet, Score1, Score2,
EssayText. Splits are stratified per question and fully determined by
(answers, ratios, seed); the augmentation subset is the per-question slice of
train answers that receives manual justification-key annotations.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Literal, Mapping, Sequence

from .errors import AnnotationError, CorpusError, CorpusParseError, SplitError

logger = logging.getLogger(__name__)

Split = Literal["train", "dev", "test"]

SPLITS: tuple[Split, ...] = ("train", "dev", "test")

TSV_COLUMNS = ("Id", "EssaySet", "Score1", "Score2", "EssayText")


@dataclass(frozen=True)
class SubQuestion:
    """One labeled sub-question of a prompt item."""

    label: str
    instruction_text: str

    def __post_init__(self):
        if not self.label:
            raise CorpusError("sub-question label must be non-empty")
        if not self.instruction_text:
            raise CorpusError(f"sub-question {self.label!r} has empty instruction text")


@dataclass(frozen=True)
class Question:
    """A prompt item. Stubs loaded from the corpus carry only id and max_score;
    sub-questions and rubric answers come from the question definition file."""

    question_id: str
    full_text: str = ""
    sub_questions: tuple[SubQuestion, ...] = ()
    max_score: int = 3
    rubric_correct_answers: tuple[str, ...] = ()

    def __post_init__(self):
        if self.max_score < 1:
            raise CorpusError(f"question {self.question_id}: max_score must be >= 1")
        labels = [sq.label for sq in self.sub_questions]
        if len(labels) != len(set(labels)):
            raise CorpusError(f"question {self.question_id}: duplicate sub-question labels")
        if any(not text.strip() for text in self.rubric_correct_answers):
            raise CorpusError(f"question {self.question_id}: empty rubric answer")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sq.label for sq in self.sub_questions)


@dataclass(frozen=True)
class StudentAnswer:
    answer_id: str
    question_id: str
    text: str
    human_score: int | None = None
    split: Split | None = None
    in_augmentation_set: bool = False

    def __post_init__(self):
        if self.in_augmentation_set and self.split != "train":
            raise CorpusError(
                f"answer {self.answer_id}: augmentation-set answers must be in the train split"
            )


@dataclass(frozen=True)
class AnnotationKey:
    """One manually marked justification key with its binary analytic score."""

    sub_question_label: str
    span_text: str
    analytic_score: int
    matched_correct_answer: str | None = None

    def __post_init__(self):
        if self.analytic_score not in (0, 1):
            raise AnnotationError(f"analytic_score must be 0 or 1, got {self.analytic_score}")
        if not self.span_text.strip():
            raise AnnotationError(f"empty span for sub-question {self.sub_question_label!r}")
        if self.analytic_score == 1 and not (self.matched_correct_answer or "").strip():
            raise AnnotationError(
                f"key {self.span_text!r} scored 1 without a matched correct answer"
            )


@dataclass(frozen=True)
class AnnotationRecord:
    answer_id: str
    keys: tuple[AnnotationKey, ...]


def load_corpus(
    path: str | Path, question_ids: Iterable[str]
) -> tuple[list[StudentAnswer], list[Question]]:
    """Read the corpus TSV, keeping rows whose EssaySet is in `question_ids`.

    Returns the answers (human_score taken from Score1) and one question stub
    per selected question that produced at least one answer.

    Raises CorpusParseError (with the line number) on a malformed row and
    CorpusError when the file yields no answers at all.
    """
    wanted = {str(q) for q in question_ids}
    answers: list[StudentAnswer] = []
    seen_questions: set[str] = set()
    with open(path, "r", encoding="utf-8-sig") as fh:
        header = fh.readline().rstrip("\r\n")
        if tuple(header.split("\t")) != TSV_COLUMNS:
            raise CorpusParseError(
                f"line 1: expected header {' '.join(TSV_COLUMNS)!r}, got {header!r}", line=1
            )
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != len(TSV_COLUMNS):
                raise CorpusParseError(
                    f"line {lineno}: expected {len(TSV_COLUMNS)} columns, got {len(parts)}",
                    line=lineno,
                )
            answer_id, essay_set, score1_raw, score2_raw, text = parts
            if essay_set not in wanted:
                continue
            score1 = _parse_score(score1_raw, "Score1", lineno)
            if score2_raw.strip():
                _parse_score(score2_raw, "Score2", lineno)  # validated, not retained
            if not 0 <= score1 <= 3:
                raise CorpusParseError(
                    f"line {lineno}: Score1 {score1} outside [0, 3]", line=lineno
                )
            answers.append(
                StudentAnswer(
                    answer_id=answer_id,
                    question_id=essay_set,
                    text=text,
                    human_score=score1,
                )
            )
            seen_questions.add(essay_set)
    if not answers:
        raise CorpusError("empty result set: no rows matched the requested question ids")
    stubs = [Question(question_id=qid) for qid in sorted(seen_questions)]
    return answers, stubs


def _parse_score(raw: str, column: str, lineno: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise CorpusParseError(
            f"line {lineno}: non-integer {column} value {raw!r}", line=lineno
        ) from None


def split_corpus(
    answers: Sequence[StudentAnswer],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> dict[str, Split]:
    """Assign every answer to train/dev/test, stratified per question.

    Per question, |train| = round(r_train * n) and so on, with rounding
    remainders folded into train. Deterministic for fixed (answers, ratios,
    seed) regardless of input order.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got {sum(ratios)}")
    by_question: dict[str, list[str]] = {}
    for answer in answers:
        by_question.setdefault(answer.question_id, []).append(answer.answer_id)
    assignments: dict[str, Split] = {}
    for qid in sorted(by_question):
        ids = sorted(by_question[qid])
        n = len(ids)
        if n < 10:
            raise SplitError(f"question {qid} has {n} answers; need at least 10 to split")
        rng = random.Random(f"{seed}:{qid}")
        rng.shuffle(ids)
        n_train = _round_half_up(ratios[0] * n)
        n_dev = _round_half_up(ratios[1] * n)
        n_test = _round_half_up(ratios[2] * n)
        n_train += n - (n_train + n_dev + n_test)
        if n_train < 0:
            raise SplitError(f"question {qid}: ratios leave no room for a train split")
        for answer_id in ids[:n_train]:
            assignments[answer_id] = "train"
        for answer_id in ids[n_train : n_train + n_dev]:
            assignments[answer_id] = "dev"
        for answer_id in ids[n_train + n_dev :]:
            assignments[answer_id] = "test"
    return assignments


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def select_augmentation_set(
    train_answers: Sequence[StudentAnswer], per_question: int = 16, seed: int = 0
) -> list[str]:
    """Pick the per-question answers to annotate for reference augmentation.

    Answers with human score 3 are taken first; remaining slots are filled
    round-robin across the score-2, score-1, and score-0 groups (unscored
    answers last). Deterministic for a fixed seed.
    """
    by_question: dict[str, list[StudentAnswer]] = {}
    for answer in train_answers:
        by_question.setdefault(answer.question_id, []).append(answer)
    selected: list[str] = []
    for qid in sorted(by_question):
        pool = by_question[qid]
        if len(pool) < per_question:
            raise SplitError(
                f"question {qid} has {len(pool)} train answers; "
                f"cannot select {per_question} for augmentation"
            )
        rng = random.Random(f"{seed}:aug:{qid}")
        groups: dict[int | None, list[str]] = {3: [], 2: [], 1: [], 0: [], None: []}
        for answer in sorted(pool, key=lambda a: a.answer_id):
            groups[answer.human_score if answer.human_score in (0, 1, 2, 3) else None].append(
                answer.answer_id
            )
        for ids in groups.values():
            rng.shuffle(ids)
        chosen = groups[3][:per_question]
        slots = per_question - len(chosen)
        queues = [groups[2], groups[1], groups[0]]
        while slots > 0 and any(queues):
            for queue in queues:
                if slots > 0 and queue:
                    chosen.append(queue.pop(0))
                    slots -= 1
        if slots > 0:
            chosen.extend(groups[None][:slots])
        selected.extend(sorted(chosen))
    return selected


@dataclass(frozen=True)
class SplitManifest:
    """Persisted split assignments plus the augmentation-set answer ids."""

    seed: int
    assignments: Mapping[str, Split]
    augmentation: tuple[str, ...] = ()

    def __post_init__(self):
        for answer_id in self.augmentation:
            if self.assignments.get(answer_id) != "train":
                raise SplitError(
                    f"augmentation answer {answer_id} is not assigned to the train split"
                )


def save_manifest(manifest: SplitManifest, path: str | Path) -> None:
    payload = {
        "seed": manifest.seed,
        "assignments": dict(sorted(manifest.assignments.items())),
        "augmentation": sorted(manifest.augmentation),
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> SplitManifest:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    assignments = obj.get("assignments")
    if not isinstance(assignments, dict):
        raise SplitError(f"{path}: manifest missing assignments map")
    for answer_id, split in assignments.items():
        if split not in SPLITS:
            raise SplitError(f"{path}: invalid split {split!r} for answer {answer_id}")
    return SplitManifest(
        seed=int(obj.get("seed", 0)),
        assignments=assignments,
        augmentation=tuple(obj.get("augmentation", ())),
    )


def apply_manifest(
    answers: Sequence[StudentAnswer], manifest: SplitManifest
) -> list[StudentAnswer]:
    """Return answers with split and augmentation flags set from the manifest."""
    augmentation = set(manifest.augmentation)
    applied = []
    for answer in answers:
        split = manifest.assignments.get(answer.answer_id)
        if split is None:
            raise SplitError(f"answer {answer.answer_id} missing from the split manifest")
        applied.append(
            replace(answer, split=split, in_augmentation_set=answer.answer_id in augmentation)
        )
    return applied


def load_annotations(
    path: str | Path,
    augmentation_ids: Iterable[str] | None = None,
    answers: Sequence[StudentAnswer] | None = None,
) -> list[AnnotationRecord]:
    """Load justification-key annotations from JSONL.

    When `augmentation_ids` is given, every record's answer_id must be in it;
    when `answers` is given, every span must occur in its answer's text after
    whitespace normalization.
    """
    allowed = {str(a) for a in augmentation_ids} if augmentation_ids is not None else None
    text_by_id = {a.answer_id: a.text for a in answers} if answers is not None else None
    records: list[AnnotationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"line {lineno}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("answer_id"), str):
                raise AnnotationError(f"line {lineno}: record must carry a string answer_id")
            answer_id = obj["answer_id"]
            if allowed is not None and answer_id not in allowed:
                raise AnnotationError(
                    f"line {lineno}: answer {answer_id} is not in the augmentation set"
                )
            raw_keys = obj.get("keys")
            if not isinstance(raw_keys, list):
                raise AnnotationError(f"line {lineno}: record must carry a keys list")
            keys = []
            for entry in raw_keys:
                try:
                    key = AnnotationKey(
                        sub_question_label=entry["sub"],
                        span_text=entry["span"],
                        analytic_score=entry["score"],
                        matched_correct_answer=entry.get("matched"),
                    )
                except (KeyError, TypeError) as exc:
                    raise AnnotationError(f"line {lineno}: malformed key entry: {exc}") from None
                except AnnotationError as exc:
                    raise AnnotationError(f"line {lineno}: {exc}") from None
                if text_by_id is not None:
                    answer_text = text_by_id.get(answer_id)
                    if answer_text is None:
                        raise AnnotationError(f"line {lineno}: unknown answer {answer_id}")
                    if _squash(key.span_text) not in _squash(answer_text):
                        raise AnnotationError(
                            f"line {lineno}: span {key.span_text!r} does not occur in "
                            f"answer {answer_id}"
                        )
                keys.append(key)
            records.append(AnnotationRecord(answer_id=answer_id, keys=tuple(keys)))
    if not records:
        logger.warning("no annotation records found in %s", path)
    return records


def _squash(text: str) -> str:
    return " ".join(text.split())


def score_distribution(
    answers: Sequence[StudentAnswer], max_score: int = 3
) -> dict[int, float]:
    """Percentage of answers at each human score 0..max_score (sums to 100)."""
    counts = {score: 0 for score in range(max_score + 1)}
    for answer in answers:
        if answer.human_score is None:
            raise CorpusError(f"answer {answer.answer_id} has no human score")
        if answer.human_score not in counts:
            raise CorpusError(
                f"answer {answer.answer_id} scored {answer.human_score}, "
                f"outside [0, {max_score}]"
            )
        counts[answer.human_score] += 1
    total = len(answers)
    if total == 0:
        raise CorpusError("cannot compute a score distribution over zero answers")
    return {score: 100.0 * count / total for score, count in counts.items()}


def load_questions(path: str | Path) -> dict[str, Question]:
    """Load full question definitions (sub-questions and rubric answers)."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    questions: dict[str, Question] = {}
    for entry in obj.get("questions", []):
        question = Question(
            question_id=str(entry["question_id"]),
            full_text=entry.get("full_text", ""),
            sub_questions=tuple(
                SubQuestion(label=sq["label"], instruction_text=sq["instruction"])
                for sq in entry.get("sub_questions", [])
            ),
            max_score=int(entry.get("max_score", 3)),
            rubric_correct_answers=tuple(entry.get("rubric_correct_answers", [])),
        )
        questions[question.question_id] = question
    if not questions:
        raise CorpusError(f"{path}: no questions defined")
    return questions
