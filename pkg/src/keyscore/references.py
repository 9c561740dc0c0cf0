"""Per-question reference answers: rubric extraction and key augmentation.

A bank holds rubric-derived correct answers plus augmented references built
from annotated justification keys. Every correct reference carries an anchor
pointing at a rubric reference (rubric answers anchor themselves); anchors
drive the automatic part of gold-pair labeling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Protocol, Sequence

from .corpus import AnnotationKey, AnnotationRecord, Question
from .errors import BankError

Polarity = Literal["correct", "incorrect"]
Origin = Literal["rubric", "augmented"]

_TRAILING_PUNCT = ".,;:!? "


def normalize_text(s: str) -> str:
    """Lowercase, collapse whitespace, trim, and strip terminal punctuation."""
    collapsed = " ".join(s.lower().split())
    return collapsed.rstrip(_TRAILING_PUNCT)


class PairScorer(Protocol):
    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]: ...


@dataclass(frozen=True)
class ReferenceAnswer:
    ref_id: str
    question_id: str
    text: str
    polarity: Polarity
    origin: Origin
    anchor_ref: str | None = None

    def __post_init__(self):
        if self.origin == "rubric":
            if self.polarity != "correct":
                raise BankError(f"rubric reference {self.ref_id} must be correct")
            if self.anchor_ref != self.ref_id:
                raise BankError(f"rubric reference {self.ref_id} must anchor itself")
        elif self.polarity == "correct" and not self.anchor_ref:
            raise BankError(f"augmented correct reference {self.ref_id} needs an anchor")
        if self.polarity == "incorrect" and self.origin != "augmented":
            raise BankError(f"incorrect reference {self.ref_id} must be augmented")


@dataclass(frozen=True)
class ReferenceBank:
    question_id: str
    references: tuple[ReferenceAnswer, ...]

    def __post_init__(self):
        seen: dict[str, str] = {}
        by_id: dict[str, ReferenceAnswer] = {}
        for ref in self.references:
            if ref.ref_id in by_id:
                raise BankError(f"duplicate ref_id {ref.ref_id}")
            by_id[ref.ref_id] = ref
            norm = normalize_text(ref.text)
            if norm in seen:
                raise BankError(
                    f"references {seen[norm]} and {ref.ref_id} share normalized text {norm!r}"
                )
            seen[norm] = ref.ref_id
        if not any(ref.polarity == "correct" for ref in self.references):
            raise BankError(f"bank for question {self.question_id} has no correct reference")
        for ref in self.references:
            if ref.polarity == "correct":
                anchor = by_id.get(ref.anchor_ref or "")
                if anchor is None or anchor.origin != "rubric":
                    raise BankError(
                        f"reference {ref.ref_id} anchor {ref.anchor_ref!r} "
                        f"is not a rubric reference"
                    )

    def ref_by_id(self, ref_id: str) -> ReferenceAnswer:
        for ref in self.references:
            if ref.ref_id == ref_id:
                return ref
        raise BankError(f"unknown reference {ref_id}")

    def find_by_normalized(self, norm: str) -> ReferenceAnswer | None:
        for ref in self.references:
            if normalize_text(ref.text) == norm:
                return ref
        return None

    @property
    def rubric_refs(self) -> tuple[ReferenceAnswer, ...]:
        return tuple(r for r in self.references if r.origin == "rubric")

    @property
    def correct_refs(self) -> tuple[ReferenceAnswer, ...]:
        return tuple(r for r in self.references if r.polarity == "correct")

    @property
    def incorrect_refs(self) -> tuple[ReferenceAnswer, ...]:
        return tuple(r for r in self.references if r.polarity == "incorrect")

    @property
    def has_augmented(self) -> bool:
        return any(r.origin == "augmented" for r in self.references)

    def content_hash(self) -> str:
        return hashlib.sha256(bank_to_json(self).encode("utf-8")).hexdigest()


def init_from_rubric(question: Question) -> ReferenceBank:
    """One correct reference per distinct rubric answer, each anchoring itself."""
    if not question.rubric_correct_answers:
        raise BankError(f"question {question.question_id} has an empty rubric")
    refs: list[ReferenceAnswer] = []
    seen: set[str] = set()
    for text in question.rubric_correct_answers:
        norm = normalize_text(text)
        if norm in seen:
            continue
        seen.add(norm)
        ref_id = f"R{len(refs) + 1}"
        refs.append(
            ReferenceAnswer(
                ref_id=ref_id,
                question_id=question.question_id,
                text=text,
                polarity="correct",
                origin="rubric",
                anchor_ref=ref_id,
            )
        )
    return ReferenceBank(question_id=question.question_id, references=tuple(refs))


def augment(
    bank: ReferenceBank,
    annotations: Sequence[AnnotationRecord],
    sim: PairScorer | None = None,
) -> ReferenceBank:
    """Add annotated justification keys to the bank as new references.

    Key polarity follows the manual analytic score. Correct keys anchor at
    the rubric reference matching their stored correct answer; when that
    lookup fails and a pair scorer is supplied, the highest-scoring rubric
    reference is used instead (ties to the lowest ref_id). Duplicate texts
    are dropped. The input bank is unchanged; a new bank is returned.
    """
    refs = list(bank.references)
    norm_seen = {normalize_text(r.text) for r in refs}
    next_index = sum(1 for r in refs if r.origin == "augmented") + 1
    for record in annotations:
        for key in record.keys:
            norm = normalize_text(key.span_text)
            if norm in norm_seen:
                continue
            polarity: Polarity = "correct" if key.analytic_score == 1 else "incorrect"
            anchor = _resolve_anchor(key, bank, sim) if polarity == "correct" else None
            refs.append(
                ReferenceAnswer(
                    ref_id=f"A{next_index}",
                    question_id=bank.question_id,
                    text=key.span_text,
                    polarity=polarity,
                    origin="augmented",
                    anchor_ref=anchor,
                )
            )
            norm_seen.add(norm)
            next_index += 1
    return ReferenceBank(question_id=bank.question_id, references=tuple(refs))


def _resolve_anchor(
    key: AnnotationKey, bank: ReferenceBank, sim: PairScorer | None
) -> str:
    rubric = bank.rubric_refs
    if key.matched_correct_answer:
        target = normalize_text(key.matched_correct_answer)
        for ref in rubric:
            if normalize_text(ref.text) == target:
                return ref.ref_id
    if sim is None:
        raise BankError(
            f"matched correct answer {key.matched_correct_answer!r} for key "
            f"{key.span_text!r} not found among rubric answers"
        )
    scores = sim.score_pairs([(key.span_text, ref.text) for ref in rubric])
    best_ref, best_score = None, float("-inf")
    for ref, score in sorted(zip(rubric, scores), key=lambda pair: pair[0].ref_id):
        if score > best_score:
            best_ref, best_score = ref, score
    assert best_ref is not None
    return best_ref.ref_id


def bank_to_json(bank: ReferenceBank) -> str:
    payload = {
        "question_id": bank.question_id,
        "references": [
            {
                "ref_id": r.ref_id,
                "text": r.text,
                "polarity": r.polarity,
                "origin": r.origin,
                "anchor_ref": r.anchor_ref,
            }
            for r in bank.references
        ],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def bank_from_json(text: str) -> ReferenceBank:
    obj = json.loads(text)
    try:
        refs = tuple(
            ReferenceAnswer(
                ref_id=entry["ref_id"],
                question_id=obj["question_id"],
                text=entry["text"],
                polarity=entry["polarity"],
                origin=entry["origin"],
                anchor_ref=entry.get("anchor_ref"),
            )
            for entry in obj["references"]
        )
    except (KeyError, TypeError) as exc:
        raise BankError(f"malformed bank JSON: {exc}") from None
    return ReferenceBank(question_id=obj["question_id"], references=refs)


def save_bank(bank: ReferenceBank, path: str | Path) -> None:
    Path(path).write_text(bank_to_json(bank), encoding="utf-8")


def load_bank(path: str | Path) -> ReferenceBank:
    return bank_from_json(Path(path).read_text(encoding="utf-8"))
