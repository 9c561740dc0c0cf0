"""Shared builders: synthetic pair datasets, bank files, live servers."""

from __future__ import annotations

import json
import random
import threading
from contextlib import contextmanager
from pathlib import Path

from keytrainer import LinearAdapter, make_server


def write_bank(path: Path, question_id: str, refs: list[dict]) -> Path:
    payload = {"question_id": question_id, "references": refs}
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return path


def make_ref(ref_id: str, text: str, polarity: str = "correct") -> dict:
    return {
        "ref_id": ref_id,
        "text": text,
        "polarity": polarity,
        "origin": "rubric",
        "anchor_ref": ref_id if polarity == "correct" else None,
    }


def write_pairs(path: Path, rows: list[dict]) -> Path:
    path.write_text(
        "".join(json.dumps(row) + "\n" for row in rows), encoding="utf-8"
    )
    return path


def pair_row(text_a: str, ref_id: str, label: int) -> dict:
    return {
        "text_a": text_a,
        "ref_id": ref_id,
        "label": label,
        "source": "gold",
        "rule": "anchor_match" if label == 1 else "anchor_mismatch",
    }


def separable_dataset(
    tmp: Path, n_pairs: int = 500, n_concepts: int = 8, seed: int = 11
) -> tuple[Path, Path]:
    """Pairs an identity-weight model gets at chance but a linear map solves.

    Each concept has a left-side surface token and an unrelated right-side
    one, so untrained cosines are near zero for positives and negatives
    alike; learning must rotate the right vocabulary onto the left one.
    Fresh per-example filler tokens keep positives from sharing any text.
    """
    rng = random.Random(seed)
    refs = [
        make_ref(f"R{i}", f"signal{i}right holds in chamber {i}")
        for i in range(n_concepts)
    ]
    bank_path = write_bank(tmp / "bank.SYN.json", "SYN", refs)
    rows = []
    for n in range(n_pairs):
        concept = rng.randrange(n_concepts)
        positive = n % 2 == 0
        target = (
            concept
            if positive
            else rng.choice([k for k in range(n_concepts) if k != concept])
        )
        text_a = f"signal{concept}left filler{n}a filler{n}b"
        rows.append(pair_row(text_a, f"R{target}", 1 if positive else 0))
    pairs_path = write_pairs(tmp / "pairs.SYN.jsonl", rows)
    return pairs_path, bank_path


@contextmanager
def live_server(model: LinearAdapter):
    server = make_server(model)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)
