"""Shared fixtures: a small deterministic grading world on disk.

Two questions, twenty answers each, with completion fixtures covering every
answer so the whole pipeline replays offline. One test-split answer gets an
unparseable completion on purpose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import pytest

from keyscore.corpus import (
    SplitManifest,
    StudentAnswer,
    apply_manifest,
    load_annotations,
    load_corpus,
    load_questions,
    select_augmentation_set,
    split_corpus,
)
from keyscore.extraction import DemonstrationExample, build_prompt, prompt_digest
from keyscore.pairs import build_gold
from keyscore.references import augment, init_from_rubric, normalize_text

SEED = 7
RATIOS = (0.7, 0.1, 0.2)
AUG_PER_QUESTION = 8
MODEL_ID = "test-model"
ANSWERS_PER_QUESTION = 20
LABELS = ("a", "b", "c")

QUESTION_SPECS = {
    "Q1": {
        "full_text": "A cell is placed in fresh water. Explain what happens and why.",
        "instructions": {
            "a": "State the direction the water moves.",
            "b": "Name the process responsible.",
            "c": "Describe the effect on the cell.",
        },
        "rubric": [
            "water moves into the cell",
            "the process is osmosis",
            "the cell swells and may burst",
        ],
        "pools": {
            "a": {
                "correct": ["Water moves into the cell", "Water flows into the cell"],
                "wrong": ["Water leaks out of the cell", "Water drains away from the cell"],
            },
            "b": {
                "correct": ["The process is osmosis", "Osmosis drives the process"],
                "wrong": ["The process is called boiling", "Evaporation drives the process"],
            },
            "c": {
                "correct": ["The cell swells and may burst", "The cell swells until it can burst"],
                "wrong": ["The cell stays exactly the same", "The cell turns into a rock"],
            },
        },
        "demo_input": (
            "Water rushes into the cell by osmosis and the cell swells and may burst"
        ),
        "demo_output": {
            "a": ["Water rushes into the cell"],
            "b": ["by osmosis"],
            "c": ["the cell swells and may burst"],
        },
    },
    "Q2": {
        "full_text": "Explain how a plant feeds itself in sunlight.",
        "instructions": {
            "a": "State what the plant absorbs from light.",
            "b": "Name the gas the leaf takes in.",
            "c": "State what the plant produces.",
        },
        "rubric": [
            "the plant absorbs sunlight",
            "carbon dioxide enters the leaf",
            "the plant produces oxygen",
        ],
        "pools": {
            "a": {
                "correct": ["The plant absorbs sunlight", "The plant takes in sunlight"],
                "wrong": ["The plant absorbs moonlight", "The plant hides from sunlight"],
            },
            "b": {
                "correct": ["Carbon dioxide enters the leaf", "The leaf takes in carbon dioxide"],
                "wrong": ["Nitrogen enters the leaf", "The leaf releases carbon dioxide"],
            },
            "c": {
                "correct": ["The plant produces oxygen", "Oxygen is produced by the plant"],
                "wrong": ["The plant produces smoke", "The plant consumes oxygen"],
            },
        },
        "demo_input": (
            "The plant absorbs sunlight while carbon dioxide enters the leaf "
            "so the plant produces oxygen"
        ),
        "demo_output": {
            "a": ["The plant absorbs sunlight"],
            "b": ["carbon dioxide enters the leaf"],
            "c": ["the plant produces oxygen"],
        },
    },
}

FILLER = "That is everything I remember"
GARBAGE_COMPLETION = "The model declines to answer this one."


def _answer_sentences(qid: str, index: int) -> tuple[list[str], int]:
    """Sentence list and human score for one synthetic answer."""
    spec = QUESTION_SPECS[qid]
    n_correct = index % 4
    variant = (index // 4) % 2
    sentences = []
    for position, label in enumerate(LABELS):
        pool = spec["pools"][label]
        kind = "correct" if position < n_correct else "wrong"
        sentences.append(pool[kind][variant])
    if index % 5 == 0:
        sentences.append(FILLER)
    return sentences, n_correct


def _spans_for(qid: str, index: int) -> dict[str, str]:
    sentences, _ = _answer_sentences(qid, index)
    return dict(zip(LABELS, sentences))


@dataclass(frozen=True)
class World:
    root: Path
    corpus: Path
    questions: Path
    annotations: Path
    decisions: Path
    fixtures: Path
    config: Path
    templates: dict[str, Path]
    question_ids: tuple[str, ...]
    manifest: SplitManifest
    garbage_answer_id: str


def build_world(root: Path) -> World:
    root.mkdir(parents=True, exist_ok=True)
    question_ids = tuple(sorted(QUESTION_SPECS))

    questions_payload = {
        "questions": [
            {
                "question_id": qid,
                "full_text": QUESTION_SPECS[qid]["full_text"],
                "sub_questions": [
                    {"label": label, "instruction": QUESTION_SPECS[qid]["instructions"][label]}
                    for label in LABELS
                ],
                "max_score": 3,
                "rubric_correct_answers": QUESTION_SPECS[qid]["rubric"],
            }
            for qid in question_ids
        ]
    }
    questions_path = root / "questions.json"
    questions_path.write_text(json.dumps(questions_payload, indent=2) + "\n", encoding="utf-8")

    answers: list[StudentAnswer] = []
    for qid in question_ids:
        for index in range(ANSWERS_PER_QUESTION):
            sentences, human_score = _answer_sentences(qid, index)
            text = " ".join(s + "." for s in sentences)
            answer_id = f"{qid}-{index:02d}"
            answers.append(
                StudentAnswer(
                    answer_id=answer_id, question_id=qid, text=text, human_score=human_score
                )
            )

    assignments = split_corpus(answers, ratios=RATIOS, seed=SEED)
    test_ids = sorted(aid for aid, name in assignments.items() if name == "test")
    garbage_answer_id = test_ids[0]
    # The formulaic texts repeat across answers; the garbage answer needs a
    # unique text so its fixture digest collides with nothing.
    answers = [
        replace(a, text=a.text + " The rest was smudged beyond reading.")
        if a.answer_id == garbage_answer_id
        else a
        for a in answers
    ]

    rows = ["\t".join(("Id", "EssaySet", "Score1", "Score2", "EssayText"))]
    for a in answers:
        rows.append("\t".join((a.answer_id, a.question_id, str(a.human_score), str(a.human_score), a.text)))
    corpus_path = root / "corpus.tsv"
    corpus_path.write_text("\n".join(rows) + "\n", encoding="utf-8")

    applied = apply_manifest(answers, SplitManifest(seed=SEED, assignments=assignments))
    train = [a for a in applied if a.split == "train"]
    augmentation = select_augmentation_set(train, per_question=AUG_PER_QUESTION, seed=SEED)
    manifest = SplitManifest(
        seed=SEED, assignments=assignments, augmentation=tuple(augmentation)
    )
    applied = apply_manifest(answers, manifest)

    templates: dict[str, Path] = {}
    demos: dict[str, DemonstrationExample] = {}
    instructions: dict[str, str] = {}
    for qid in question_ids:
        spec = QUESTION_SPECS[qid]
        instruction = (
            "Copy, for each sub-question, the exact span of the student's answer "
            "that addresses it. Respond with a JSON object mapping each label to "
            "a list of spans.\n"
            + "\n".join(f"({label}) {spec['instructions'][label]}" for label in LABELS)
        )
        payload = {
            "instruction": instruction,
            "demo_input": spec["demo_input"],
            "demo_output": spec["demo_output"],
        }
        path = root / f"template.{qid}.json"
        path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        templates[qid] = path
        demos[qid] = DemonstrationExample(
            input_answer=spec["demo_input"],
            output_keys={k: tuple(v) for k, v in spec["demo_output"].items()},
        )
        instructions[qid] = instruction

    questions = load_questions(questions_path)
    fixture_lines = []
    for answer in applied:
        prompt = build_prompt(
            questions[answer.question_id],
            demos[answer.question_id],
            answer,
            instruction=instructions[answer.question_id],
        )
        if answer.answer_id == garbage_answer_id:
            completion = GARBAGE_COMPLETION
        else:
            index = int(answer.answer_id.split("-")[1])
            spans = _spans_for(answer.question_id, index)
            completion = " " + json.dumps({label: [spans[label]] for label in LABELS})
        fixture_lines.append(
            json.dumps(
                {
                    "prompt_sha256": prompt_digest(prompt),
                    "completion": completion,
                    "model_id": MODEL_ID,
                }
            )
        )
    fixtures_path = root / "fixtures.jsonl"
    fixtures_path.write_text("\n".join(fixture_lines) + "\n", encoding="utf-8")

    annotation_lines = []
    records_by_question: dict[str, list] = {qid: [] for qid in question_ids}
    for answer in applied:
        if not answer.in_augmentation_set:
            continue
        index = int(answer.answer_id.split("-")[1])
        spans = _spans_for(answer.question_id, index)
        _, n_correct = _answer_sentences(answer.question_id, index)
        keys = []
        for position, label in enumerate(LABELS):
            correct = position < n_correct
            keys.append(
                {
                    "sub": label,
                    "span": spans[label],
                    "score": 1 if correct else 0,
                    "matched": QUESTION_SPECS[answer.question_id]["rubric"][position]
                    if correct
                    else None,
                }
            )
        annotation_lines.append(json.dumps({"answer_id": answer.answer_id, "keys": keys}))
    annotations_path = root / "annotations.jsonl"
    annotations_path.write_text("\n".join(annotation_lines) + "\n", encoding="utf-8")

    records = load_annotations(annotations_path, augmentation_ids=manifest.augmentation)
    question_by_answer = {a.answer_id: a.question_id for a in applied}
    for record in records:
        records_by_question[question_by_answer[record.answer_id]].append(record)

    decision_lines = []
    seen_decisions = set()
    for qid in question_ids:
        bank = augment(init_from_rubric(questions[qid]), records_by_question[qid])
        _, reviews = build_gold(records_by_question[qid], bank)
        for item in reviews:
            key = (normalize_text(item.text_a), item.ref_id)
            if key in seen_decisions:
                continue
            seen_decisions.add(key)
            decision_lines.append(
                json.dumps({"text_a_norm": key[0], "ref_id": key[1], "decision": 0})
            )
    decisions_path = root / "decisions.jsonl"
    decisions_path.write_text("\n".join(decision_lines) + "\n", encoding="utf-8")

    config_payload = {
        "corpus": "corpus.tsv",
        "questions": "questions.json",
        "question_ids": list(question_ids),
        "seed": SEED,
        "split_ratios": list(RATIOS),
        "augmentation_per_question": AUG_PER_QUESTION,
        "fixtures": "fixtures.jsonl",
        "templates": {qid: templates[qid].name for qid in question_ids},
        "model_id": MODEL_ID,
        "analytic_threshold": 0.5,
        "silver_threshold": 0.5,
        "output_dir": "out",
        "annotations": "annotations.jsonl",
        "decisions": "decisions.jsonl",
        "num_categories": 4,
    }
    config_path = root / "run.json"
    config_path.write_text(json.dumps(config_payload, indent=2) + "\n", encoding="utf-8")

    return World(
        root=root,
        corpus=corpus_path,
        questions=questions_path,
        annotations=annotations_path,
        decisions=decisions_path,
        fixtures=fixtures_path,
        config=config_path,
        templates=templates,
        question_ids=question_ids,
        manifest=manifest,
        garbage_answer_id=garbage_answer_id,
    )


@pytest.fixture(scope="session")
def world(tmp_path_factory) -> World:
    return build_world(tmp_path_factory.mktemp("world"))


@pytest.fixture()
def world_answers(world):
    answers, _ = load_corpus(world.corpus, world.question_ids)
    return apply_manifest(answers, world.manifest)


@pytest.fixture()
def world_questions(world):
    return load_questions(world.questions)
