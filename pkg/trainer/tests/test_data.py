import json

import pytest

from keytrainer import DataError, TrainingPair, load_pairs, load_reference_texts

from conftest import make_ref, pair_row, write_bank, write_pairs


@pytest.fixture
def bank(tmp_path):
    return write_bank(
        tmp_path / "bank.Q1.json",
        "Q1",
        [
            make_ref("R1", "the water moves into the cell"),
            make_ref("A1", "water flows inward", polarity="correct"),
            make_ref("I1", "the water boils away", polarity="incorrect"),
        ],
    )


class TestLoadReferenceTexts:
    def test_maps_ids_to_texts(self, bank):
        texts = load_reference_texts([bank])
        assert texts == {
            "R1": "the water moves into the cell",
            "A1": "water flows inward",
            "I1": "the water boils away",
        }

    def test_multiple_banks_merge(self, tmp_path, bank):
        other = write_bank(
            tmp_path / "bank.Q2.json", "Q2", [make_ref("R9", "cells divide")]
        )
        texts = load_reference_texts([bank, other])
        assert texts["R9"] == "cells divide"
        assert texts["R1"] == "the water moves into the cell"

    def test_duplicate_id_same_text_is_fine(self, tmp_path, bank):
        clone = write_bank(
            tmp_path / "bank.copy.json",
            "Q1",
            [make_ref("R1", "the water moves into the cell")],
        )
        texts = load_reference_texts([bank, clone])
        assert texts["R1"] == "the water moves into the cell"

    def test_conflicting_duplicate_id_rejected(self, tmp_path, bank):
        other = write_bank(
            tmp_path / "bank.Q2.json", "Q2", [make_ref("R1", "something else")]
        )
        with pytest.raises(DataError, match="different"):
            load_reference_texts([bank, other])

    def test_no_banks_rejected(self):
        with pytest.raises(DataError, match="at least one"):
            load_reference_texts([])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_reference_texts([tmp_path / "nope.json"])

    def test_not_a_bank(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text(json.dumps([1, 2, 3]))
        with pytest.raises(DataError, match="not a reference bank"):
            load_reference_texts([path])

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{nope")
        with pytest.raises(DataError, match="invalid JSON"):
            load_reference_texts([path])

    def test_entry_without_text(self, tmp_path):
        path = tmp_path / "bank.json"
        path.write_text(json.dumps({"references": [{"ref_id": "R1"}]}))
        with pytest.raises(DataError, match="text"):
            load_reference_texts([path])


class TestLoadPairs:
    def test_resolves_reference_texts(self, tmp_path, bank):
        pairs_path = write_pairs(
            tmp_path / "pairs.jsonl",
            [pair_row("water goes in", "R1", 1), pair_row("it boils", "I1", 0)],
        )
        pairs = load_pairs(pairs_path, [bank])
        assert pairs == [
            TrainingPair("water goes in", "the water moves into the cell", 1),
            TrainingPair("it boils", "the water boils away", 0),
        ]

    def test_silver_rules_accepted(self, tmp_path, bank):
        pairs_path = write_pairs(
            tmp_path / "pairs.jsonl",
            [
                {
                    "text_a": "the water moves",
                    "ref_id": "R1",
                    "label": 1,
                    "source": "silver",
                    "rule": "silver_threshold",
                },
                {
                    "text_a": "the water moves",
                    "ref_id": "I1",
                    "label": 0,
                    "source": "silver",
                    "rule": "silver_lower",
                },
            ],
        )
        assert [p.label for p in load_pairs(pairs_path, [bank])] == [1, 0]

    def test_blank_lines_skipped(self, tmp_path, bank):
        pairs_path = tmp_path / "pairs.jsonl"
        pairs_path.write_text(
            json.dumps(pair_row("water goes in", "R1", 1)) + "\n\n  \n"
        )
        assert len(load_pairs(pairs_path, [bank])) == 1

    def test_empty_file_loads_empty(self, tmp_path, bank):
        pairs_path = tmp_path / "pairs.jsonl"
        pairs_path.write_text("")
        assert load_pairs(pairs_path, [bank]) == []

    def test_missing_pairs_file(self, tmp_path, bank):
        with pytest.raises(DataError, match="not found"):
            load_pairs(tmp_path / "nope.jsonl", [bank])

    def test_unknown_ref_id_named(self, tmp_path, bank):
        pairs_path = write_pairs(
            tmp_path / "pairs.jsonl", [pair_row("water goes in", "R77", 1)]
        )
        with pytest.raises(DataError, match="'R77' not defined"):
            load_pairs(pairs_path, [bank])

    def test_error_carries_line_number(self, tmp_path, bank):
        pairs_path = tmp_path / "pairs.jsonl"
        pairs_path.write_text(
            json.dumps(pair_row("fine", "R1", 1)) + "\n" + "{broken\n"
        )
        with pytest.raises(DataError, match="pairs.jsonl:2"):
            load_pairs(pairs_path, [bank])

    @pytest.mark.parametrize(
        "mutation, message",
        [
            ({"label": 2}, "label must be 0 or 1"),
            ({"label": "1"}, "label must be 0 or 1"),
            ({"text_a": ""}, "text_a"),
            ({"ref_id": ""}, "ref_id"),
            ({"source": "bronze"}, "unknown source"),
            ({"rule": "silver_lower"}, "invalid for gold"),
        ],
    )
    def test_schema_violations(self, tmp_path, bank, mutation, message):
        row = pair_row("water goes in", "R1", 1)
        row.update(mutation)
        pairs_path = write_pairs(tmp_path / "pairs.jsonl", [row])
        with pytest.raises(DataError, match=message):
            load_pairs(pairs_path, [bank])

    def test_missing_field_named(self, tmp_path, bank):
        row = pair_row("water goes in", "R1", 1)
        del row["rule"]
        pairs_path = write_pairs(tmp_path / "pairs.jsonl", [row])
        with pytest.raises(DataError, match="missing field 'rule'"):
            load_pairs(pairs_path, [bank])

    def test_non_object_row(self, tmp_path, bank):
        pairs_path = tmp_path / "pairs.jsonl"
        pairs_path.write_text("[1, 2]\n")
        with pytest.raises(DataError, match="objects"):
            load_pairs(pairs_path, [bank])
