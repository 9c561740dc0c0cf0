"""Similarity-training pair construction: gold labeling rules, the manual
review queue with a replayable decisions file, sentence splitting, and
automatic silver labeling of unscored training answers.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .corpus import AnnotationRecord, StudentAnswer
from .errors import PairError, ReviewError
from .references import PairScorer, ReferenceBank, normalize_text

log = logging.getLogger(__name__)

GOLD_RULES = ("anchor_match", "anchor_mismatch", "cross_group_zero", "manual")
SILVER_RULES = ("silver_lower", "silver_threshold")


@dataclass(frozen=True)
class LabeledPair:
    text_a: str
    ref_id: str
    label: int
    source: str
    rule: str

    def __post_init__(self):
        if not self.text_a:
            raise PairError("pair text_a must be non-empty")
        if not self.ref_id:
            raise PairError("pair ref_id must be non-empty")
        if self.label not in (0, 1):
            raise PairError(f"pair label must be 0 or 1, got {self.label!r}")
        if self.source == "gold":
            allowed = GOLD_RULES
        elif self.source == "silver":
            allowed = SILVER_RULES
        else:
            raise PairError(f"unknown pair source {self.source!r}")
        if self.rule not in allowed:
            raise PairError(f"rule {self.rule!r} is invalid for {self.source} pairs")


@dataclass(frozen=True)
class ReviewItem:
    text_a: str
    ref_id: str
    decision: int | None = None


def build_gold(
    annotations: Sequence[AnnotationRecord], bank: ReferenceBank
) -> tuple[list[LabeledPair], list[ReviewItem]]:
    """Pair every annotated key with every bank reference under fixed rules.

    Correct keys: label 1 when the key and reference resolve to the same
    rubric anchor, else 0; incorrect references always get 0. Incorrect keys
    against correct references get 0; against incorrect references they are
    queued for manual review. A reference whose normalized text equals the
    key's own is the key's bank copy and is skipped, so each key contributes
    exactly len(bank.references) - 1 combinations.
    """
    if not bank.has_augmented:
        log.warning(
            "bank for question %s has no augmented references; "
            "gold pairs are built against the rubric only",
            bank.question_id,
        )
    pairs: list[LabeledPair] = []
    reviews: list[ReviewItem] = []
    for record in annotations:
        for key in record.keys:
            key_norm = normalize_text(key.span_text)
            key_correct = key.analytic_score == 1
            key_anchor = _key_anchor(key_norm, key.matched_correct_answer, bank) if key_correct else None
            for ref in bank.references:
                if normalize_text(ref.text) == key_norm:
                    continue
                if key_correct:
                    if ref.polarity == "incorrect" or ref.anchor_ref != key_anchor:
                        pairs.append(
                            LabeledPair(key.span_text, ref.ref_id, 0, "gold", "anchor_mismatch")
                        )
                    else:
                        pairs.append(
                            LabeledPair(key.span_text, ref.ref_id, 1, "gold", "anchor_match")
                        )
                elif ref.polarity == "correct":
                    pairs.append(
                        LabeledPair(key.span_text, ref.ref_id, 0, "gold", "cross_group_zero")
                    )
                else:
                    reviews.append(ReviewItem(text_a=key.span_text, ref_id=ref.ref_id))
    return pairs, reviews


def _key_anchor(key_norm: str, matched: str | None, bank: ReferenceBank) -> str:
    own = bank.find_by_normalized(key_norm)
    if own is not None:
        if own.polarity != "correct":
            raise PairError(
                f"key {key_norm!r} is scored correct but its bank copy "
                f"{own.ref_id} is incorrect; bank and annotations disagree"
            )
        assert own.anchor_ref is not None
        return own.anchor_ref
    if matched:
        target = normalize_text(matched)
        for ref in bank.rubric_refs:
            if normalize_text(ref.text) == target:
                return ref.ref_id
    raise PairError(
        f"cannot resolve an anchor for correct key {key_norm!r}; "
        f"augment the bank with its annotation first"
    )


def load_decisions(path: str | Path) -> dict[tuple[str, str], int]:
    """Decisions keyed by (normalized key text, ref_id); later lines win."""
    decisions: dict[tuple[str, str], int] = {}
    p = Path(path)
    if not p.exists():
        return decisions
    with p.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                key = (obj["text_a_norm"], obj["ref_id"])
                decision = obj["decision"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ReviewError(f"{p}:{lineno}: malformed decision: {exc}") from None
            if decision not in (0, 1):
                raise ReviewError(f"{p}:{lineno}: decision must be 0 or 1")
            decisions[key] = decision
    return decisions


def append_decision(path: str | Path, text_a: str, ref_id: str, decision: int) -> None:
    record = {
        "text_a_norm": normalize_text(text_a),
        "ref_id": ref_id,
        "decision": decision,
    }
    with Path(path).open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def resolve_reviews(
    items: Sequence[ReviewItem],
    decisions_path: str | Path,
    bank: ReferenceBank | None = None,
    matched_by_key: dict[str, str] | None = None,
    interactive: bool = False,
    input_fn: Callable[[str], str] = input,
    echo: Callable[[str], None] = print,
) -> list[LabeledPair]:
    """Turn review items into manual gold pairs using stored decisions.

    Undecided items are prompted for when interactive (1 / 0 / q); answers
    are appended to the decisions file immediately so quitting never loses
    work. Any item still undecided at the end raises with the full list.
    """
    decisions = load_decisions(decisions_path)
    pairs: list[LabeledPair] = []
    undecided: list[ReviewItem] = []
    quitting = False
    for item in items:
        if item.decision is not None:
            pairs.append(LabeledPair(item.text_a, item.ref_id, item.decision, "gold", "manual"))
            continue
        key = (normalize_text(item.text_a), item.ref_id)
        if key in decisions:
            pairs.append(LabeledPair(item.text_a, item.ref_id, decisions[key], "gold", "manual"))
            continue
        if not interactive or quitting:
            undecided.append(item)
            continue
        decision = _prompt_for_decision(item, bank, matched_by_key, input_fn, echo)
        if decision is None:
            quitting = True
            undecided.append(item)
            continue
        append_decision(decisions_path, item.text_a, item.ref_id, decision)
        decisions[key] = decision
        pairs.append(LabeledPair(item.text_a, item.ref_id, decision, "gold", "manual"))
    if undecided:
        listing = "; ".join(f"({item.text_a!r}, {item.ref_id})" for item in undecided)
        raise ReviewError(f"{len(undecided)} review items undecided: {listing}")
    return pairs


def _prompt_for_decision(
    item: ReviewItem,
    bank: ReferenceBank | None,
    matched_by_key: dict[str, str] | None,
    input_fn: Callable[[str], str],
    echo: Callable[[str], None],
) -> int | None:
    echo(f"key:       {item.text_a}")
    if bank is not None:
        echo(f"reference: {bank.ref_by_id(item.ref_id).text}")
    echo(f"ref_id:    {item.ref_id}")
    if matched_by_key:
        stored = matched_by_key.get(normalize_text(item.text_a))
        if stored:
            echo(f"stored match: {stored}")
    while True:
        raw = input_fn("semantically equivalent? [1/0/q] ").strip().lower()
        if raw in ("0", "1"):
            return int(raw)
        if raw == "q":
            return None
        echo("enter 1, 0, or q")


_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "dr.", "mr.",
        "mrs.", "ms.", "st.", "no.", "fig.", "approx.",
    }
)

_TERMINALS = ".!?"


def split_sentences(text: str) -> list[str]:
    """Split on sentence-ending punctuation followed by whitespace or end.

    Runs of terminal punctuation count once; a period closing a known
    abbreviation does not end a sentence; empty fragments are dropped.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] not in _TERMINALS:
            i += 1
            continue
        j = i
        while j + 1 < n and text[j + 1] in _TERMINALS:
            j += 1
        boundary = j + 1 >= n or text[j + 1].isspace()
        if boundary and not _closes_abbreviation(text, j):
            fragment = text[start : j + 1].strip()
            if fragment:
                sentences.append(fragment)
            start = j + 1
        i = j + 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _closes_abbreviation(text: str, punct_index: int) -> bool:
    if text[punct_index] != ".":
        return False
    word_start = punct_index
    while word_start > 0 and not text[word_start - 1].isspace():
        word_start -= 1
    return text[word_start : punct_index + 1].lower() in _ABBREVIATIONS


def build_silver(
    answers: Sequence[StudentAnswer],
    bank: ReferenceBank,
    pair_scorer: PairScorer,
    threshold: float = 0.5,
    batch_size: int = 256,
) -> list[LabeledPair]:
    """Label every training sentence against its closest references.

    Each sentence is scored against all references; the best-scoring correct
    and incorrect references compete. The loser gets label 0, the winner
    gets 1 only if its score clears the threshold. Answers flagged as
    augmentation material are skipped so gold and silver stay disjoint.
    """
    correct = bank.correct_refs
    incorrect = bank.incorrect_refs
    if not incorrect:
        raise PairError(
            f"bank for question {bank.question_id} has no incorrect references; "
            f"silver construction is impossible"
        )
    sentences: list[str] = []
    for answer in answers:
        if answer.in_augmentation_set:
            continue
        sentences.extend(split_sentences(answer.text))

    refs = list(correct) + list(incorrect)
    flat = [(sentence, ref.text) for sentence in sentences for ref in refs]
    scores = _score_in_batches(pair_scorer, flat, batch_size)

    pairs: list[LabeledPair] = []
    per_sentence = len(refs)
    for index, sentence in enumerate(sentences):
        row = scores[index * per_sentence : (index + 1) * per_sentence]
        best_c = _argmax(correct, row[: len(correct)])
        best_i = _argmax(incorrect, row[len(correct) :])
        if best_i[1] > best_c[1]:
            lower, higher = best_c, best_i
        else:
            lower, higher = best_i, best_c
        pairs.append(LabeledPair(sentence, lower[0], 0, "silver", "silver_lower"))
        winner_label = 1 if higher[1] > threshold else 0
        pairs.append(LabeledPair(sentence, higher[0], winner_label, "silver", "silver_threshold"))
    return pairs


def _score_in_batches(
    pair_scorer: PairScorer, flat: list[tuple[str, str]], batch_size: int
) -> list[float]:
    scores: list[float] = []
    for offset in range(0, len(flat), batch_size):
        batch = flat[offset : offset + batch_size]
        got = pair_scorer.score_pairs(batch)
        if len(got) != len(batch):
            raise PairError(
                f"pair scorer returned {len(got)} scores for {len(batch)} pairs"
            )
        for score in got:
            if not 0.0 <= score <= 1.0:
                raise PairError(f"pair score {score!r} is outside [0, 1]")
        scores.extend(got)
    return scores


def _argmax(refs, row) -> tuple[str, float]:
    ordered = sorted(zip(refs, row), key=lambda pair: pair[0].ref_id)
    best_id, best_score = ordered[0][0].ref_id, ordered[0][1]
    for ref, score in ordered[1:]:
        if score > best_score:
            best_id, best_score = ref.ref_id, score
    return best_id, best_score


def pairs_to_jsonl(pairs: Iterable[LabeledPair]) -> str:
    lines = [
        json.dumps(
            {
                "text_a": pair.text_a,
                "ref_id": pair.ref_id,
                "label": pair.label,
                "source": pair.source,
                "rule": pair.rule,
            },
            ensure_ascii=False,
        )
        for pair in pairs
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def export_pairs(pairs: Iterable[LabeledPair], path: str | Path) -> None:
    """Write pairs as JSONL atomically (temp file, then rename)."""
    target = Path(path)
    content = pairs_to_jsonl(pairs)
    fd, temp_name = tempfile.mkstemp(dir=target.parent, prefix=target.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(content)
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise


def import_pairs(path: str | Path) -> list[LabeledPair]:
    pairs: list[LabeledPair] = []
    p = Path(path)
    with p.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pair = LabeledPair(
                    text_a=obj["text_a"],
                    ref_id=obj["ref_id"],
                    label=obj["label"],
                    source=obj["source"],
                    rule=obj["rule"],
                )
            except (json.JSONDecodeError, KeyError, TypeError, PairError) as exc:
                raise PairError(f"{p}:{lineno}: {exc}") from None
            pairs.append(pair)
    return pairs
