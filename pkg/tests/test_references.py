from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keyscore.corpus import AnnotationKey, AnnotationRecord, Question, SubQuestion
from keyscore.errors import BankError
from keyscore.references import (
    ReferenceAnswer,
    ReferenceBank,
    augment,
    bank_from_json,
    bank_to_json,
    init_from_rubric,
    load_bank,
    normalize_text,
    save_bank,
)


def _question(rubric=("water moves in", "osmosis does it")):
    return Question(
        question_id="Q1",
        sub_questions=(SubQuestion("a", "direction"), SubQuestion("b", "process")),
        rubric_correct_answers=tuple(rubric),
    )


def _record(*keys):
    return AnnotationRecord(answer_id="A1", keys=tuple(keys))


def _key(span, score, matched=None):
    return AnnotationKey(
        sub_question_label="a", span_text=span, analytic_score=score,
        matched_correct_answer=matched,
    )


class TestNormalizeText:
    def test_lowercases_and_collapses(self):
        assert normalize_text("  Water   MOVES in ") == "water moves in"

    def test_strips_terminal_punctuation(self):
        assert normalize_text("The cell swells!?. ") == "the cell swells"

    def test_keeps_inner_punctuation(self):
        assert normalize_text("swells, then bursts") == "swells, then bursts"

    @given(st.text(max_size=80))
    @settings(max_examples=60, deadline=None)
    def test_idempotent(self, text):
        once = normalize_text(text)
        assert normalize_text(once) == once


class TestInitFromRubric:
    def test_one_reference_per_rubric_answer(self):
        bank = init_from_rubric(_question())
        assert [r.ref_id for r in bank.references] == ["R1", "R2"]
        assert all(r.origin == "rubric" for r in bank.references)
        assert all(r.anchor_ref == r.ref_id for r in bank.references)

    def test_duplicate_rubric_texts_collapse(self):
        bank = init_from_rubric(_question(rubric=("Water moves in", "water  moves in.")))
        assert len(bank.references) == 1

    def test_empty_rubric_rejected(self):
        question = Question(question_id="Q", sub_questions=(SubQuestion("a", "i"),))
        with pytest.raises(BankError):
            init_from_rubric(question)


class TestAugment:
    def test_polarity_follows_analytic_score(self):
        bank = init_from_rubric(_question())
        out = augment(
            bank,
            [
                _record(
                    _key("water goes inward", 1, matched="water moves in"),
                    _key("the water boils", 0),
                )
            ],
        )
        added = {r.text: r for r in out.references if r.origin == "augmented"}
        assert added["water goes inward"].polarity == "correct"
        assert added["water goes inward"].anchor_ref == "R1"
        assert added["the water boils"].polarity == "incorrect"
        assert added["the water boils"].anchor_ref is None

    def test_ids_continue_across_calls(self):
        bank = init_from_rubric(_question())
        first = augment(bank, [_record(_key("wrong one", 0))])
        second = augment(first, [_record(_key("wrong two", 0))])
        assert [r.ref_id for r in second.references if r.origin == "augmented"] == ["A1", "A2"]

    def test_duplicates_dropped(self):
        bank = init_from_rubric(_question())
        out = augment(
            bank,
            [
                _record(_key("Water moves in!", 1, matched="water moves in")),
                _record(_key("boiling", 0), _key("BOILING.", 0)),
            ],
        )
        texts = [normalize_text(r.text) for r in out.references]
        assert len(texts) == len(set(texts))
        assert len(out.references) == 3

    def test_original_bank_unchanged(self):
        bank = init_from_rubric(_question())
        augment(bank, [_record(_key("a new wrong answer", 0))])
        assert len(bank.references) == 2

    def test_augment_idempotent_for_same_annotations(self):
        bank = init_from_rubric(_question())
        records = [_record(_key("fresh take", 1, matched="osmosis does it"))]
        once = augment(bank, records)
        twice = augment(once, records)
        assert once == twice

    def test_anchor_fallback_uses_scorer(self):
        bank = init_from_rubric(_question())

        class Sim:
            def score_pairs(self, pairs):
                return [0.2 if "water" in b else 0.9 for _, b in pairs]

        out = augment(
            bank, [_record(_key("by osmosis", 1, matched="not a rubric text"))], sim=Sim()
        )
        added = next(r for r in out.references if r.origin == "augmented")
        assert added.anchor_ref == "R2"

    def test_anchor_fallback_tie_prefers_lowest_ref_id(self):
        bank = init_from_rubric(_question())

        class Sim:
            def score_pairs(self, pairs):
                return [0.5 for _ in pairs]

        out = augment(bank, [_record(_key("ambiguous", 1, matched="nope"))], sim=Sim())
        added = next(r for r in out.references if r.origin == "augmented")
        assert added.anchor_ref == "R1"

    def test_unresolvable_anchor_without_scorer(self):
        bank = init_from_rubric(_question())
        with pytest.raises(BankError, match="not found among rubric answers"):
            augment(bank, [_record(_key("novel idea", 1, matched="unknown text"))])


class TestBankInvariants:
    def test_needs_a_correct_reference(self):
        ref = ReferenceAnswer(
            ref_id="A1", question_id="Q", text="wrong", polarity="incorrect",
            origin="augmented",
        )
        with pytest.raises(BankError, match="no correct reference"):
            ReferenceBank(question_id="Q", references=(ref,))

    def test_rejects_duplicate_normalized_texts(self):
        r1 = ReferenceAnswer("R1", "Q", "Water in", "correct", "rubric", "R1")
        r2 = ReferenceAnswer("R2", "Q", "water IN.", "correct", "rubric", "R2")
        with pytest.raises(BankError, match="share normalized text"):
            ReferenceBank(question_id="Q", references=(r1, r2))

    def test_rubric_reference_must_anchor_itself(self):
        with pytest.raises(BankError):
            ReferenceAnswer("R1", "Q", "x", "correct", "rubric", anchor_ref="R2")

    def test_augmented_correct_needs_rubric_anchor(self):
        r1 = ReferenceAnswer("R1", "Q", "base", "correct", "rubric", "R1")
        a1 = ReferenceAnswer("A1", "Q", "extra", "correct", "augmented", "A9")
        with pytest.raises(BankError, match="anchor"):
            ReferenceBank(question_id="Q", references=(r1, a1))

    def test_incorrect_must_be_augmented(self):
        with pytest.raises(BankError):
            ReferenceAnswer("R1", "Q", "x", "incorrect", "rubric", "R1")

    def test_helpers(self):
        bank = augment(
            init_from_rubric(_question()), [_record(_key("boiling instead", 0))]
        )
        assert [r.ref_id for r in bank.rubric_refs] == ["R1", "R2"]
        assert [r.ref_id for r in bank.correct_refs] == ["R1", "R2"]
        assert [r.ref_id for r in bank.incorrect_refs] == ["A1"]
        assert bank.ref_by_id("A1").text == "boiling instead"
        assert bank.find_by_normalized("boiling instead").ref_id == "A1"
        assert bank.find_by_normalized("unknown") is None
        with pytest.raises(BankError):
            bank.ref_by_id("Z9")


class TestBankSerialization:
    def test_round_trip(self, tmp_path):
        bank = augment(
            init_from_rubric(_question()),
            [
                _record(
                    _key("inward flow", 1, matched="water moves in"),
                    _key("boiled away", 0),
                )
            ],
        )
        path = tmp_path / "bank.json"
        save_bank(bank, path)
        assert load_bank(path) == bank

    def test_json_shape(self):
        bank = init_from_rubric(_question(rubric=("only answer",)))
        obj = __import__("json").loads(bank_to_json(bank))
        assert obj["question_id"] == "Q1"
        assert obj["references"] == [
            {
                "ref_id": "R1",
                "text": "only answer",
                "polarity": "correct",
                "origin": "rubric",
                "anchor_ref": "R1",
            }
        ]

    def test_malformed_json_rejected(self):
        with pytest.raises(BankError):
            bank_from_json('{"question_id": "Q", "references": [{"ref_id": "R1"}]}')

    def test_content_hash_tracks_content(self):
        bank = init_from_rubric(_question())
        other = augment(bank, [_record(_key("wrong", 0))])
        assert bank.content_hash() != other.content_hash()
        assert bank.content_hash() == init_from_rubric(_question()).content_hash()
