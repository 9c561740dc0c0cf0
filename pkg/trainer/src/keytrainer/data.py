"""Training-pair loading.

Pairs files store a student span and a reference id, not the reference
text, so loading takes the pairs JSONL plus the reference bank JSON files
that define those ids. A ref id defined with two different texts across
banks is ambiguous and rejected; train on one question group at a time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DataError

GOLD_RULES = ("anchor_match", "anchor_mismatch", "cross_group_zero", "manual")
SILVER_RULES = ("silver_lower", "silver_threshold")


@dataclass(frozen=True)
class TrainingPair:
    """One resolved similarity example: two texts and a 0/1 label."""

    text_a: str
    text_b: str
    label: int


def load_reference_texts(bank_paths: Sequence[Path]) -> dict[str, str]:
    """ref_id -> reference text across one or more bank JSON files."""
    if not bank_paths:
        raise DataError("at least one reference bank is required")
    texts: dict[str, str] = {}
    for path in bank_paths:
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"bank file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        refs = obj.get("references") if isinstance(obj, dict) else None
        if not isinstance(refs, list):
            raise DataError(f"{path}: not a reference bank (no references list)")
        for entry in refs:
            if not isinstance(entry, dict):
                raise DataError(f"{path}: reference entries must be objects")
            ref_id = entry.get("ref_id")
            text = entry.get("text")
            if not isinstance(ref_id, str) or not ref_id:
                raise DataError(f"{path}: reference ref_id must be a non-empty string")
            if not isinstance(text, str) or not text:
                raise DataError(f"{path}: reference {ref_id!r} text must be non-empty")
            if ref_id in texts and texts[ref_id] != text:
                raise DataError(
                    f"{path}: ref_id {ref_id!r} already defined with a different "
                    "text; banks from different questions cannot be mixed"
                )
            texts[ref_id] = text
    return texts


def _parse_pair_row(row: object, where: str) -> tuple[str, str, int]:
    if not isinstance(row, dict):
        raise DataError(f"{where}: pair rows must be JSON objects")
    for field in ("text_a", "ref_id", "label", "source", "rule"):
        if field not in row:
            raise DataError(f"{where}: missing field {field!r}")
    text_a, ref_id = row["text_a"], row["ref_id"]
    label, source, rule = row["label"], row["source"], row["rule"]
    if not isinstance(text_a, str) or not text_a:
        raise DataError(f"{where}: text_a must be a non-empty string")
    if not isinstance(ref_id, str) or not ref_id:
        raise DataError(f"{where}: ref_id must be a non-empty string")
    if label not in (0, 1):
        raise DataError(f"{where}: label must be 0 or 1, got {label!r}")
    if source == "gold":
        allowed = GOLD_RULES
    elif source == "silver":
        allowed = SILVER_RULES
    else:
        raise DataError(f"{where}: unknown source {source!r}")
    if rule not in allowed:
        raise DataError(f"{where}: rule {rule!r} is invalid for {source} pairs")
    return text_a, ref_id, label


def load_pairs(pairs_path: Path, bank_paths: Sequence[Path]) -> list[TrainingPair]:
    """Validated pairs with ref ids resolved to reference texts."""
    pairs_path = Path(pairs_path)
    reference_texts = load_reference_texts(bank_paths)
    try:
        raw = pairs_path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"pairs file not found: {pairs_path}") from None
    pairs: list[TrainingPair] = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{pairs_path.name}:{lineno}"
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON: {exc}") from None
        text_a, ref_id, label = _parse_pair_row(row, where)
        if ref_id not in reference_texts:
            raise DataError(f"{where}: ref_id {ref_id!r} not defined by any bank")
        pairs.append(TrainingPair(text_a, reference_texts[ref_id], label))
    return pairs
