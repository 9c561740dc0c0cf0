"""Operator command line: each subcommand drives one pipeline stage and
writes content-addressed artifacts (a short content-hash suffix in the file
name) so stale intermediate files are detectable at a glance.

Configuration comes from a JSON file (--config) with every flag able to
override it. Paths inside a config file resolve relative to that file.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

import click

from .corpus import (
    Question,
    SplitManifest,
    StudentAnswer,
    apply_manifest,
    load_annotations,
    load_corpus,
    load_manifest,
    load_questions,
    select_augmentation_set,
    split_corpus,
)
from .errors import ConfigError, KeyscoreError, ReviewError
from .evaluation import (
    AblationRow,
    AblationVariant,
    evaluate_scores,
    format_report_table,
    rows_to_json,
    run_ablation,
)
from .extraction import (
    CompletionClient,
    CompletionParams,
    Extractor,
    HTTPCompletionClient,
    PromptTemplate,
    RecordingClient,
    ReplayClient,
    ReplayStore,
    extract_batch,
    load_template,
)
from .pairs import (
    LabeledPair,
    ReviewItem,
    build_gold,
    build_silver,
    load_decisions,
    pairs_to_jsonl,
    resolve_reviews,
)
from .references import (
    ReferenceBank,
    augment,
    bank_to_json,
    init_from_rubric,
    load_bank,
    normalize_text,
)
from .scoring import (
    EmbeddingPairScorer,
    EmbeddingProvider,
    HashedEmbedder,
    HTTPEmbeddingProvider,
    HTTPPairScorer,
    grade_answer,
)

_PATH_FIELDS = (
    "corpus", "questions", "fixtures", "annotations", "manifest",
    "decisions", "output_dir",
)


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline stage may need; flags override any field."""

    corpus: str | None = None
    questions: str | None = None
    question_ids: tuple[str, ...] = ()
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    augmentation_per_question: int = 16
    completion_endpoint: str | None = None
    embed_endpoint: str | None = None
    score_endpoint: str | None = None
    fixtures: str | None = None
    record: bool = False
    templates: Mapping[str, str] = field(default_factory=dict)
    model_id: str = "grading-model"
    max_tokens: int = 256
    analytic_threshold: float = 0.5
    silver_threshold: float = 0.5
    output_dir: str = "out"
    annotations: str | None = None
    manifest: str | None = None
    banks: Mapping[str, str] = field(default_factory=dict)
    decisions: str | None = None
    dedup_references: bool = False
    num_categories: int = 4

    def __post_init__(self):
        for name in ("analytic_threshold", "silver_threshold"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        if len(self.split_ratios) != 3:
            raise ConfigError("split_ratios must have exactly 3 entries")


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        obj = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ConfigError(f"{p}: unknown config keys: {', '.join(unknown)}")
    base = p.parent
    for name in _PATH_FIELDS:
        if isinstance(obj.get(name), str):
            obj[name] = str(base / obj[name])
    for name in ("templates", "banks"):
        if isinstance(obj.get(name), dict):
            obj[name] = {k: str(base / v) for k, v in obj[name].items()}
    if "question_ids" in obj:
        obj["question_ids"] = tuple(str(q) for q in obj["question_ids"])
    if "split_ratios" in obj:
        obj["split_ratios"] = tuple(float(r) for r in obj["split_ratios"])
    try:
        return RunConfig(**obj)
    except TypeError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def _merge(config_path: str | None, **overrides) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    cleaned = {}
    for key, value in overrides.items():
        if value is None or value == () or value == {}:
            continue
        cleaned[key] = value
    for name in ("templates", "banks"):
        if name in cleaned:
            merged = dict(getattr(cfg, name))
            merged.update(cleaned[name])
            cleaned[name] = merged
    return replace(cfg, **cleaned) if cleaned else cfg


def _parse_mapping(entries: Sequence[str], flag: str) -> dict[str, str]:
    mapping: dict[str, str] = {}
    for entry in entries:
        key, sep, value = entry.partition("=")
        if not sep or not key or not value:
            raise ConfigError(f"{flag} expects ID=PATH, got {entry!r}")
        mapping[key] = value
    return mapping


def _fail(message: str) -> click.ClickException:
    return click.ClickException(" ".join(str(message).split()))


def _write_artifact(cfg: RunConfig, stem: str, ext: str, content: str) -> Path:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data = content.encode("utf-8")
    digest = hashlib.sha256(data).hexdigest()[:8]
    target = out_dir / f"{stem}.{digest}.{ext}"
    fd, temp_name = tempfile.mkstemp(dir=out_dir, prefix=stem, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.unlink(temp_name)
        raise
    click.echo(f"wrote {target}")
    return target


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise ConfigError(
            f"missing required settings: {', '.join(missing)} "
            f"(set via config file or flags)"
        )


def _load_world(cfg: RunConfig) -> tuple[list[StudentAnswer], dict[str, Question]]:
    _require(cfg, "corpus", "questions", "question_ids")
    answers, _ = load_corpus(cfg.corpus, cfg.question_ids)
    questions = load_questions(cfg.questions)
    missing = sorted(set(cfg.question_ids) - set(questions))
    if missing:
        raise ConfigError(f"questions file lacks definitions for: {', '.join(missing)}")
    return answers, questions


def _split_answers(
    cfg: RunConfig, answers: Sequence[StudentAnswer], split: str | None
) -> tuple[list[StudentAnswer], SplitManifest]:
    _require(cfg, "manifest")
    manifest = load_manifest(cfg.manifest)
    applied = apply_manifest(answers, manifest)
    if split:
        applied = [a for a in applied if a.split == split]
    return applied, manifest


def _completion_client(cfg: RunConfig) -> CompletionClient:
    if cfg.record:
        if not (cfg.fixtures and cfg.completion_endpoint):
            raise ConfigError("record mode needs both fixtures and completion_endpoint")
        return RecordingClient(
            ReplayStore(cfg.fixtures), HTTPCompletionClient(cfg.completion_endpoint)
        )
    if cfg.fixtures:
        return ReplayClient(ReplayStore(cfg.fixtures))
    if cfg.completion_endpoint:
        return HTTPCompletionClient(cfg.completion_endpoint)
    raise ConfigError("no completion backend: set fixtures or completion_endpoint")


def _embedding_provider(cfg: RunConfig) -> EmbeddingProvider:
    if cfg.embed_endpoint:
        return HTTPEmbeddingProvider(cfg.embed_endpoint)
    return HashedEmbedder()


def _pair_scorer(cfg: RunConfig):
    if cfg.score_endpoint:
        return HTTPPairScorer(cfg.score_endpoint)
    return EmbeddingPairScorer()


def _load_templates(cfg: RunConfig, question_ids: Sequence[str]) -> dict[str, PromptTemplate]:
    templates = {}
    for qid in question_ids:
        path = cfg.templates.get(qid)
        if path is None:
            raise ConfigError(f"no prompt template configured for question {qid}")
        templates[qid] = load_template(path)
    return templates


def _load_banks(cfg: RunConfig, question_ids: Sequence[str]) -> dict[str, ReferenceBank]:
    banks = {}
    for qid in question_ids:
        path = cfg.banks.get(qid)
        if path is None:
            raise ConfigError(f"no reference bank configured for question {qid}")
        bank = load_bank(path)
        if bank.question_id != qid:
            raise ConfigError(f"bank at {path} is for question {bank.question_id}, not {qid}")
        banks[qid] = bank
    return banks


def _group_annotations(cfg: RunConfig, answers, manifest: SplitManifest | None):
    _require(cfg, "annotations")
    records = load_annotations(
        cfg.annotations,
        augmentation_ids=manifest.augmentation if manifest else None,
        answers=answers,
    )
    question_by_answer = {a.answer_id: a.question_id for a in answers}
    grouped: dict[str, list] = {}
    for record in records:
        qid = question_by_answer.get(record.answer_id)
        if qid is None:
            raise ConfigError(f"annotated answer {record.answer_id} is not in the corpus")
        grouped.setdefault(qid, []).append(record)
    return grouped


_CONFIG_OPT = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
    help="JSON run configuration; flags override its fields.",
)
_DRY_RUN_OPT = click.option(
    "--dry-run", is_flag=True, help="Validate inputs and report, write nothing."
)


@click.group()
def cli():
    """Short-answer grading pipeline: extraction, banks, pairs, scores."""


@cli.command()
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def ingest(config_path, corpus, questions, question_ids, output_dir, dry_run):
    """Validate the corpus TSV and write a normalized answers artifact."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), output_dir=output_dir,
    )
    answers, question_defs = _load_world(cfg)
    per_question: dict[str, int] = {}
    for answer in answers:
        per_question[answer.question_id] = per_question.get(answer.question_id, 0) + 1
    for qid in sorted(per_question):
        click.echo(f"question {qid}: {per_question[qid]} answers")
    click.echo(f"total: {len(answers)} answers, {len(question_defs)} question definitions")
    if dry_run:
        click.echo("dry run ok")
        return
    lines = [
        json.dumps(
            {
                "answer_id": a.answer_id,
                "question_id": a.question_id,
                "text": a.text,
                "human_score": a.human_score,
            },
            ensure_ascii=False,
        )
        for a in answers
    ]
    _write_artifact(cfg, "answers", "jsonl", "\n".join(lines) + "\n")


@cli.command()
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--seed", type=int, default=None)
@click.option("--ratios", default=None, help="Comma-separated train,dev,test ratios.")
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def split(config_path, corpus, questions, question_ids, seed, ratios, output_dir, dry_run):
    """Assign answers to train/dev/test and write the split manifest."""
    parsed_ratios = None
    if ratios is not None:
        try:
            parsed_ratios = tuple(float(r) for r in ratios.split(","))
        except ValueError:
            raise _fail(f"--ratios expects three numbers, got {ratios!r}")
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), seed=seed,
        split_ratios=parsed_ratios, output_dir=output_dir,
    )
    answers, _ = _load_world(cfg)
    assignments = split_corpus(answers, ratios=cfg.split_ratios, seed=cfg.seed)
    counts = {name: 0 for name in ("train", "dev", "test")}
    for split_name in assignments.values():
        counts[split_name] += 1
    click.echo(
        f"split sizes: train={counts['train']} dev={counts['dev']} test={counts['test']}"
    )
    if dry_run:
        click.echo("dry run ok")
        return
    manifest = SplitManifest(seed=cfg.seed, assignments=assignments)
    payload = {
        "seed": manifest.seed,
        "assignments": dict(sorted(manifest.assignments.items())),
        "augmentation": [],
    }
    _write_artifact(cfg, "manifest", "json", json.dumps(payload, indent=2) + "\n")


@cli.command("select-aug")
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--per-question", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def select_aug(
    config_path, corpus, questions, question_ids, manifest_path,
    per_question, seed, output_dir, dry_run,
):
    """Pick the train answers to annotate and record them in the manifest."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        augmentation_per_question=per_question, output_dir=output_dir,
    )
    answers, _ = _load_world(cfg)
    applied, manifest = _split_answers(cfg, answers, split="train")
    aug_seed = seed if seed is not None else manifest.seed
    selected = select_augmentation_set(
        applied, per_question=cfg.augmentation_per_question, seed=aug_seed
    )
    click.echo(f"selected {len(selected)} answers for annotation")
    if dry_run:
        click.echo("dry run ok")
        return
    payload = {
        "seed": manifest.seed,
        "assignments": dict(sorted(manifest.assignments.items())),
        "augmentation": sorted(selected),
    }
    _write_artifact(cfg, "manifest", "json", json.dumps(payload, indent=2) + "\n")


@cli.command()
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_name", type=click.Choice(["train", "dev", "test"]), default=None)
@click.option("--aug-only", is_flag=True, help="Only the augmentation-set answers.")
@click.option("--template", "template_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--fixtures", type=click.Path(dir_okay=False))
@click.option("--endpoint", "completion_endpoint", default=None)
@click.option("--record/--no-record", default=None)
@click.option("--model-id", default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def extract(
    config_path, corpus, questions, question_ids, manifest_path, split_name,
    aug_only, template_flags, fixtures, completion_endpoint, record,
    model_id, max_tokens, output_dir, dry_run,
):
    """Extract justification keys for a split and write them as JSONL."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        templates=_parse_mapping(template_flags, "--template"),
        fixtures=fixtures, completion_endpoint=completion_endpoint,
        record=record, model_id=model_id, max_tokens=max_tokens,
        output_dir=output_dir,
    )
    answers, question_defs = _load_world(cfg)
    applied, _ = _split_answers(cfg, answers, split_name)
    if aug_only:
        applied = [a for a in applied if a.in_augmentation_set]
    if not applied:
        raise _fail("no answers selected for extraction")
    templates = _load_templates(cfg, cfg.question_ids)
    if dry_run:
        click.echo(f"would extract keys for {len(applied)} answers")
        click.echo("dry run ok")
        return
    client = _completion_client(cfg)
    params = CompletionParams(model_id=cfg.model_id, max_tokens=cfg.max_tokens)
    lines = []
    failures = 0
    for qid in cfg.question_ids:
        question = question_defs[qid]
        subset = [a for a in applied if a.question_id == qid]
        if not subset:
            continue
        template = templates[qid]
        results, bad = extract_batch(
            question, template.demo, subset, client, params,
            instruction=template.instruction,
        )
        failures += bad
        for result in results:
            lines.append(
                json.dumps(
                    {
                        "answer_id": result.answer_id,
                        "keys": {label: list(spans) for label, spans in result.keys.items()},
                        "error": result.error,
                    },
                    ensure_ascii=False,
                )
            )
    click.echo(f"extracted keys for {len(lines)} answers ({failures} parse failures)")
    _write_artifact(cfg, "extractions", "jsonl", "\n".join(lines) + "\n")


@cli.command("augment-bank")
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def augment_bank(
    config_path, corpus, questions, question_ids, manifest_path,
    annotations, output_dir, dry_run,
):
    """Build per-question reference banks: rubric answers plus annotated keys."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        annotations=annotations, output_dir=output_dir,
    )
    answers, question_defs = _load_world(cfg)
    manifest = None
    if cfg.manifest:
        manifest = load_manifest(cfg.manifest)
        answers = apply_manifest(answers, manifest)
    grouped = _group_annotations(cfg, answers, manifest)
    scorer = _pair_scorer(cfg)
    for qid in cfg.question_ids:
        question = question_defs[qid]
        bank = init_from_rubric(question)
        bank = augment(bank, grouped.get(qid, []), sim=scorer)
        correct = len(bank.correct_refs)
        incorrect = len(bank.incorrect_refs)
        click.echo(
            f"question {qid}: {len(bank.references)} references "
            f"({correct} correct, {incorrect} incorrect)"
        )
        if not dry_run:
            _write_artifact(cfg, f"bank.{qid}", "json", bank_to_json(bank))
    if dry_run:
        click.echo("dry run ok")


@cli.command("build-gold")
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", type=click.Path(exists=True, dir_okay=False))
@click.option("--bank", "bank_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--decisions", type=click.Path(dir_okay=False))
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def build_gold_cmd(
    config_path, corpus, questions, question_ids, manifest_path,
    annotations, bank_flags, decisions, output_dir, dry_run,
):
    """Pair annotated keys with bank references under the gold labeling rules.

    Pairs needing human judgment are resolved from the decisions file; any
    left undecided are written to a review queue and the command fails so
    the gold dataset is never silently incomplete.
    """
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        annotations=annotations, banks=_parse_mapping(bank_flags, "--bank"),
        decisions=decisions, output_dir=output_dir,
    )
    answers, _ = _load_world(cfg)
    manifest = None
    if cfg.manifest:
        manifest = load_manifest(cfg.manifest)
        answers = apply_manifest(answers, manifest)
    grouped = _group_annotations(cfg, answers, manifest)
    banks = _load_banks(cfg, cfg.question_ids)
    decided = load_decisions(cfg.decisions) if cfg.decisions else {}
    total_auto = 0
    total_manual = 0
    undecided: list[tuple[str, ReviewItem]] = []
    outputs: dict[str, list[LabeledPair]] = {}
    for qid in cfg.question_ids:
        pairs, reviews = build_gold(grouped.get(qid, []), banks[qid])
        manual: list[LabeledPair] = []
        for item in reviews:
            key = (_norm(item.text_a), item.ref_id)
            if key in decided:
                manual.append(
                    LabeledPair(item.text_a, item.ref_id, decided[key], "gold", "manual")
                )
            else:
                undecided.append((qid, item))
        outputs[qid] = pairs + manual
        total_auto += len(pairs)
        total_manual += len(manual)
    click.echo(
        f"gold pairs: {total_auto} rule-labeled, {total_manual} from decisions, "
        f"{len(undecided)} undecided"
    )
    if dry_run:
        click.echo("dry run ok")
        return
    if undecided:
        queue_lines = [
            json.dumps(
                {"question_id": qid, "text_a": item.text_a, "ref_id": item.ref_id},
                ensure_ascii=False,
            )
            for qid, item in undecided
        ]
        queue_path = _write_artifact(cfg, "review-queue", "jsonl", "\n".join(queue_lines) + "\n")
        raise _fail(
            f"{len(undecided)} review items undecided; "
            f"run `keyscore review --queue {queue_path}` to label them"
        )
    for qid in cfg.question_ids:
        _write_artifact(cfg, f"gold.{qid}", "jsonl", pairs_to_jsonl(outputs[qid]))


def _norm(text: str) -> str:
    return normalize_text(text)


@cli.command()
@_CONFIG_OPT
@click.option("--queue", "queue_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--decisions", type=click.Path(dir_okay=False))
@click.option("--bank", "bank_flags", multiple=True, help="QUESTION_ID=PATH")
@_DRY_RUN_OPT
def review(config_path, queue_path, decisions, bank_flags, dry_run):
    """Interactively label queued key-reference pairs; answers persist."""
    cfg = _merge(
        config_path, banks=_parse_mapping(bank_flags, "--bank"), decisions=decisions
    )
    _require(cfg, "decisions")
    grouped: dict[str, list[ReviewItem]] = {}
    with open(queue_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                item = ReviewItem(text_a=obj["text_a"], ref_id=obj["ref_id"])
                qid = obj.get("question_id", "")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise _fail(f"{queue_path}:{lineno}: malformed queue entry: {exc}")
            grouped.setdefault(qid, []).append(item)
    if dry_run:
        existing = load_decisions(cfg.decisions)
        pending = sum(
            1
            for items in grouped.values()
            for item in items
            if (_norm(item.text_a), item.ref_id) not in existing
        )
        click.echo(f"{pending} queue items lack decisions")
        click.echo("dry run ok")
        return
    decided = 0
    for qid in sorted(grouped):
        bank = None
        if qid and cfg.banks.get(qid):
            bank = load_bank(cfg.banks[qid])
        try:
            pairs = resolve_reviews(
                grouped[qid], cfg.decisions, bank=bank, interactive=True,
                input_fn=lambda prompt: click.prompt(prompt, prompt_suffix=""),
                echo=click.echo,
            )
        except ReviewError as exc:
            raise _fail(str(exc))
        decided += len(pairs)
    click.echo(f"all queue items decided ({decided} pairs)")


@cli.command("build-silver")
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--bank", "bank_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--score-endpoint", default=None)
@click.option("--silver-threshold", type=float, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def build_silver_cmd(
    config_path, corpus, questions, question_ids, manifest_path,
    bank_flags, score_endpoint, silver_threshold, output_dir, dry_run,
):
    """Auto-label train-split sentences against their closest references."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        banks=_parse_mapping(bank_flags, "--bank"), score_endpoint=score_endpoint,
        silver_threshold=silver_threshold, output_dir=output_dir,
    )
    answers, _ = _load_world(cfg)
    applied, _ = _split_answers(cfg, answers, split="train")
    banks = _load_banks(cfg, cfg.question_ids)
    if dry_run:
        eligible = sum(1 for a in applied if not a.in_augmentation_set)
        click.echo(f"would build silver pairs from {eligible} train answers")
        click.echo("dry run ok")
        return
    scorer = _pair_scorer(cfg)
    total = 0
    for qid in cfg.question_ids:
        subset = [a for a in applied if a.question_id == qid]
        pairs = build_silver(subset, banks[qid], scorer, threshold=cfg.silver_threshold)
        total += len(pairs)
        _write_artifact(cfg, f"silver.{qid}", "jsonl", pairs_to_jsonl(pairs))
    click.echo(f"silver pairs: {total}")


@cli.command()
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_name", type=click.Choice(["train", "dev", "test"]), default="test")
@click.option("--bank", "bank_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--template", "template_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--fixtures", type=click.Path(dir_okay=False))
@click.option("--endpoint", "completion_endpoint", default=None)
@click.option("--record/--no-record", default=None)
@click.option("--embed-endpoint", default=None)
@click.option("--model-id", default=None)
@click.option("--max-tokens", type=int, default=None)
@click.option("--threshold", "analytic_threshold", type=float, default=None)
@click.option("--dedup-references", is_flag=True, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def score(
    config_path, corpus, questions, question_ids, manifest_path, split_name,
    bank_flags, template_flags, fixtures, completion_endpoint, record,
    embed_endpoint, model_id, max_tokens, analytic_threshold,
    dedup_references, output_dir, dry_run,
):
    """Grade a split end to end and write analytic/holistic scores."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        banks=_parse_mapping(bank_flags, "--bank"),
        templates=_parse_mapping(template_flags, "--template"),
        fixtures=fixtures, completion_endpoint=completion_endpoint, record=record,
        embed_endpoint=embed_endpoint, model_id=model_id, max_tokens=max_tokens,
        analytic_threshold=analytic_threshold, dedup_references=dedup_references,
        output_dir=output_dir,
    )
    answers, question_defs = _load_world(cfg)
    applied, _ = _split_answers(cfg, answers, split_name)
    if not applied:
        raise _fail(f"no answers in the {split_name} split")
    banks = _load_banks(cfg, cfg.question_ids)
    templates = _load_templates(cfg, cfg.question_ids)
    if dry_run:
        click.echo(f"would score {len(applied)} answers from the {split_name} split")
        click.echo("dry run ok")
        return
    extractor = Extractor(
        client=_completion_client(cfg),
        params=CompletionParams(model_id=cfg.model_id, max_tokens=cfg.max_tokens),
        templates=templates,
    )
    provider = _embedding_provider(cfg)
    lines = []
    for answer in applied:
        result = grade_answer(
            answer, question_defs[answer.question_id], banks[answer.question_id],
            extractor, provider, threshold=cfg.analytic_threshold,
            dedup_references=cfg.dedup_references,
        )
        lines.append(
            json.dumps(
                {
                    "answer_id": result.answer_id,
                    "question_id": answer.question_id,
                    "human_score": answer.human_score,
                    "holistic": result.holistic,
                    "note": result.note,
                    "analytic": [
                        {
                            "label": a.key.sub_question_label,
                            "span": a.key.span_text,
                            "ref_id": a.best.ref_id,
                            "similarity": round(a.best.similarity, 10),
                            "score": a.score,
                        }
                        for a in result.analytic
                    ],
                },
                ensure_ascii=False,
            )
        )
    click.echo(f"scored {len(lines)} answers")
    _write_artifact(cfg, f"scores.{split_name}", "jsonl", "\n".join(lines) + "\n")


@cli.command()
@_CONFIG_OPT
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--num-categories", type=int, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def evaluate(config_path, pred_path, gold_path, question_ids, num_categories, output_dir, dry_run):
    """Compare predicted holistic scores against the corpus human scores."""
    cfg = _merge(
        config_path, question_ids=tuple(question_ids),
        num_categories=num_categories, output_dir=output_dir,
    )
    predictions: dict[str, int] = {}
    pred_questions: set[str] = set()
    with open(pred_path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                predictions[obj["answer_id"]] = int(obj["holistic"])
                if "question_id" in obj:
                    pred_questions.add(str(obj["question_id"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise _fail(f"{pred_path}:{lineno}: malformed prediction: {exc}")
    if not predictions:
        raise _fail(f"{pred_path}: no predictions found")
    wanted = cfg.question_ids or tuple(sorted(pred_questions))
    if not wanted:
        raise _fail("cannot infer question ids; pass --question-id")
    answers, _ = load_corpus(gold_path, wanted)
    human_by_id = {a.answer_id: a.human_score for a in answers}
    human: list[int] = []
    system: list[int] = []
    for answer_id, holistic in predictions.items():
        if answer_id not in human_by_id:
            raise _fail(f"predicted answer {answer_id} is not in the corpus")
        human_score = human_by_id[answer_id]
        if human_score is None:
            raise _fail(f"answer {answer_id} has no human score")
        human.append(human_score)
        system.append(holistic)
    report = evaluate_scores(human, system, cfg.num_categories)
    table = format_report_table([AblationRow("evaluation", report)])
    click.echo(table)
    if dry_run:
        click.echo("dry run ok")
        return
    _write_artifact(cfg, "report", "json", json.dumps(report.to_dict(), indent=2) + "\n")


@cli.command()
@_CONFIG_OPT
@click.option("--corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--questions", type=click.Path(exists=True, dir_okay=False))
@click.option("--question-id", "question_ids", multiple=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", "split_name", type=click.Choice(["train", "dev", "test"]), default="test")
@click.option("--bank", "bank_flags", multiple=True, help="QUESTION_ID=PATH (augmented banks)")
@click.option("--template", "template_flags", multiple=True, help="QUESTION_ID=PATH")
@click.option("--fixtures", type=click.Path(dir_okay=False))
@click.option("--endpoint", "completion_endpoint", default=None)
@click.option("--embed-endpoint", default=None)
@click.option("--threshold", "analytic_threshold", type=float, default=None)
@click.option("--num-categories", type=int, default=None)
@click.option("--out-dir", "output_dir", type=click.Path(file_okay=False))
@_DRY_RUN_OPT
def ablate(
    config_path, corpus, questions, question_ids, manifest_path, split_name,
    bank_flags, template_flags, fixtures, completion_endpoint, embed_endpoint,
    analytic_threshold, num_categories, output_dir, dry_run,
):
    """Grade the split under the four bank/provider variants and report."""
    cfg = _merge(
        config_path, corpus=corpus, questions=questions,
        question_ids=tuple(question_ids), manifest=manifest_path,
        banks=_parse_mapping(bank_flags, "--bank"),
        templates=_parse_mapping(template_flags, "--template"),
        fixtures=fixtures, completion_endpoint=completion_endpoint,
        embed_endpoint=embed_endpoint, analytic_threshold=analytic_threshold,
        num_categories=num_categories, output_dir=output_dir,
    )
    answers, question_defs = _load_world(cfg)
    applied, _ = _split_answers(cfg, answers, split_name)
    if not applied:
        raise _fail(f"no answers in the {split_name} split")
    augmented_banks = _load_banks(cfg, cfg.question_ids)
    rubric_banks = {qid: init_from_rubric(question_defs[qid]) for qid in cfg.question_ids}
    templates = _load_templates(cfg, cfg.question_ids)
    if dry_run:
        click.echo(f"would ablate over {len(applied)} answers, 4 variants")
        click.echo("dry run ok")
        return
    extractor = Extractor(
        client=_completion_client(cfg),
        params=CompletionParams(model_id=cfg.model_id, max_tokens=cfg.max_tokens),
        templates=templates,
    )
    baseline = HashedEmbedder()
    adapted = HTTPEmbeddingProvider(cfg.embed_endpoint) if cfg.embed_endpoint else None
    variants = [
        AblationVariant("baseline", baseline, rubric_banks),
        AblationVariant("ref-augmented", baseline, augmented_banks),
        AblationVariant("domain-adapted", adapted, rubric_banks),
        AblationVariant("full", adapted, augmented_banks),
    ]
    rows = run_ablation(
        variants, applied, question_defs, extractor,
        threshold=cfg.analytic_threshold, num_categories=cfg.num_categories,
    )
    click.echo(format_report_table(rows))
    _write_artifact(cfg, "ablation", "json", rows_to_json(rows))


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point with single-line machine-parseable errors."""
    try:
        cli.main(args=argv, prog_name="keyscore", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        click.echo(f"error: {' '.join(exc.format_message().split())}", err=True)
        return exc.exit_code if exc.exit_code else 1
    except click.Abort:
        click.echo("error: aborted", err=True)
        return 130
    except (KeyscoreError, OSError) as exc:
        click.echo(f"error: {' '.join(str(exc).split())}", err=True)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
