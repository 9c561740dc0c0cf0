"""Agreement metrics against human scores, the key-overlap audit, and the
ablation harness comparing provider/bank variants on the test split.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Question, StudentAnswer
from .errors import MetricError
from .extraction import Extractor
from .references import ReferenceBank, normalize_text
from .scoring import EmbeddingProvider, grade_answer

log = logging.getLogger(__name__)


def accuracy(human: Sequence[int], system: Sequence[int]) -> float:
    """Fraction of exact score matches."""
    _check_lengths(human, system)
    hits = sum(1 for h, s in zip(human, system) if h == s)
    return hits / len(human)


def qwk(human: Sequence[int], system: Sequence[int], num_categories: int) -> float:
    """Quadratic weighted kappa over integer categories 0..K-1.

    Observed and expected matrices hold counts; expected is the outer product
    of the marginals scaled to n; weights are (i - j)^2 / (K - 1)^2. When
    every score on both sides is the same single value the expected
    disagreement is zero and kappa is undefined.
    """
    _check_lengths(human, system)
    if len(human) < 2:
        raise MetricError("qwk needs at least 2 scores")
    k = num_categories
    if k < 2:
        raise MetricError("qwk needs at least 2 categories")
    for value in list(human) + list(system):
        if not 0 <= value <= k - 1:
            raise MetricError(f"score {value!r} outside [0, {k - 1}]")
    n = len(human)
    observed = np.zeros((k, k), dtype=np.float64)
    for h, s in zip(human, system):
        observed[h, s] += 1.0
    human_marginal = observed.sum(axis=1)
    system_marginal = observed.sum(axis=0)
    expected = np.outer(human_marginal, system_marginal) / n
    indices = np.arange(k, dtype=np.float64)
    weights = (indices[:, None] - indices[None, :]) ** 2 / (k - 1) ** 2
    denominator = float((weights * expected).sum())
    if denominator == 0.0:
        raise MetricError("qwk undefined: all scores identical on both sides")
    return 1.0 - float((weights * observed).sum()) / denominator


def pearson(human: Sequence[int], system: Sequence[int]) -> float:
    """Product-moment correlation; undefined for constant input."""
    _check_lengths(human, system)
    if len(human) < 2:
        raise MetricError("pearson needs at least 2 scores")
    h = np.asarray(human, dtype=np.float64)
    s = np.asarray(system, dtype=np.float64)
    h_dev = h - h.mean()
    s_dev = s - s.mean()
    denom = float(np.sqrt((h_dev**2).sum() * (s_dev**2).sum()))
    if denom == 0.0:
        raise MetricError("pearson undefined: zero variance")
    return float(np.clip((h_dev * s_dev).sum() / denom, -1.0, 1.0))


def _check_lengths(human: Sequence[int], system: Sequence[int]) -> None:
    if len(human) != len(system):
        raise MetricError(f"length mismatch: {len(human)} human vs {len(system)} system")
    if not human:
        raise MetricError("no scores to evaluate")


@dataclass(frozen=True)
class EvalReport:
    n: int
    accuracy: float
    qwk: float
    pearson: float
    confusion: tuple[tuple[int, ...], ...]
    majority_accuracy: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "qwk": self.qwk,
            "pearson": self.pearson,
            "confusion": [list(row) for row in self.confusion],
            "majority_accuracy": self.majority_accuracy,
        }


def evaluate_scores(
    human: Sequence[int], system: Sequence[int], num_categories: int
) -> EvalReport:
    """Full agreement report; confusion rows are human, columns are system."""
    _check_lengths(human, system)
    k = num_categories
    confusion = [[0] * k for _ in range(k)]
    for h, s in zip(human, system):
        if not (0 <= h <= k - 1 and 0 <= s <= k - 1):
            raise MetricError(f"score pair ({h}, {s}) outside [0, {k - 1}]")
        confusion[h][s] += 1
    modal_count = max(sum(row) for row in confusion)
    return EvalReport(
        n=len(human),
        accuracy=accuracy(human, system),
        qwk=qwk(human, system, k),
        pearson=pearson(human, system),
        confusion=tuple(tuple(row) for row in confusion),
        majority_accuracy=modal_count / len(human),
    )


@dataclass(frozen=True)
class OverlapReport:
    total_keys: int
    correct_keys: int
    accuracy: float
    mean_words_manual: float
    mean_words_system: float

    def to_dict(self) -> dict:
        return {
            "total_keys": self.total_keys,
            "correct_keys": self.correct_keys,
            "accuracy": self.accuracy,
            "mean_words_manual": self.mean_words_manual,
            "mean_words_system": self.mean_words_system,
        }


def key_is_correct(manual: str, system: str) -> bool:
    """Containment of the manual key, or token recall strictly above 0.9.

    Tokens come from normalized text split on whitespace; recall counts the
    multiset intersection over the manual key's token count.
    """
    manual_norm = normalize_text(manual)
    system_norm = normalize_text(system)
    if manual_norm and manual_norm in system_norm:
        return True
    manual_tokens = Counter(manual_norm.split())
    system_tokens = Counter(system_norm.split())
    total = sum(manual_tokens.values())
    if total == 0:
        return False
    shared = sum((manual_tokens & system_tokens).values())
    return shared / total > 0.9


def key_overlap_eval(
    manual: Mapping[str, Sequence[str]], system: Mapping[str, Sequence[str]]
) -> OverlapReport:
    """Audit system keys against manual ones, matched within each answer.

    Alignment is greedy: each manual key takes the unused system key with
    the highest affinity (containment outranks any partial overlap; ties go
    to the earliest system key). Manual keys left without a partner count
    as incorrect.
    """
    total = 0
    correct = 0
    manual_words: list[int] = []
    system_words: list[int] = []
    for answer_id in sorted(manual):
        manual_keys = list(manual[answer_id])
        system_keys = list(system.get(answer_id, ()))
        manual_words.extend(len(normalize_text(k).split()) for k in manual_keys)
        system_words.extend(len(normalize_text(k).split()) for k in system_keys)
        available = list(range(len(system_keys)))
        for manual_key in manual_keys:
            total += 1
            best_index = None
            best_affinity = -1.0
            for j in available:
                affinity = _affinity(manual_key, system_keys[j])
                if affinity > best_affinity:
                    best_index, best_affinity = j, affinity
            if best_index is None:
                continue
            available.remove(best_index)
            if key_is_correct(manual_key, system_keys[best_index]):
                correct += 1
    for answer_id in system:
        if answer_id not in manual:
            system_words.extend(len(normalize_text(k).split()) for k in system[answer_id])
    return OverlapReport(
        total_keys=total,
        correct_keys=correct,
        accuracy=correct / total if total else 0.0,
        mean_words_manual=float(np.mean(manual_words)) if manual_words else 0.0,
        mean_words_system=float(np.mean(system_words)) if system_words else 0.0,
    )


def _affinity(manual: str, system: str) -> float:
    manual_norm = normalize_text(manual)
    system_norm = normalize_text(system)
    if manual_norm and manual_norm in system_norm:
        return 2.0
    manual_tokens = Counter(manual_norm.split())
    system_tokens = Counter(system_norm.split())
    total = sum(manual_tokens.values())
    if total == 0:
        return 0.0
    return sum((manual_tokens & system_tokens).values()) / total


@dataclass(frozen=True)
class AblationVariant:
    """One row of the ablation grid: an embedding backend plus banks.

    provider None models a missing endpoint; the variant reports an error
    row instead of aborting the whole run.
    """

    name: str
    provider: EmbeddingProvider | None
    banks: Mapping[str, ReferenceBank]


@dataclass(frozen=True)
class AblationRow:
    variant: str
    report: EvalReport | None
    error: str | None = None

    def to_dict(self) -> dict:
        if self.report is None:
            return {"variant": self.variant, "error": self.error}
        out = {"variant": self.variant}
        out.update(self.report.to_dict())
        return out


def run_ablation(
    variants: Sequence[AblationVariant],
    answers: Sequence[StudentAnswer],
    questions: Mapping[str, Question],
    extractor: Extractor,
    threshold: float = 0.5,
    dedup_references: bool = False,
    num_categories: int = 4,
) -> list[AblationRow]:
    """Grade the same answers under each variant and report agreement.

    Extraction output depends only on the completion backend, so keys are
    identical across variants; what changes is the bank and the embedding
    provider. A variant failure (missing provider, metric degeneracy) is
    captured in its row and the remaining variants still run.
    """
    scored = [a for a in answers if a.human_score is not None]
    if not scored:
        raise MetricError("no human-scored answers to evaluate")
    rows: list[AblationRow] = []
    for variant in variants:
        if variant.provider is None:
            rows.append(
                AblationRow(variant.name, None, "no embedding provider configured")
            )
            continue
        try:
            human: list[int] = []
            system: list[int] = []
            for answer in scored:
                question = questions.get(answer.question_id)
                bank = variant.banks.get(answer.question_id)
                if question is None or bank is None:
                    raise MetricError(
                        f"variant {variant.name}: no question/bank for {answer.question_id}"
                    )
                result = grade_answer(
                    answer, question, bank, extractor, variant.provider,
                    threshold=threshold, dedup_references=dedup_references,
                )
                human.append(answer.human_score)
                system.append(result.holistic)
            rows.append(
                AblationRow(variant.name, evaluate_scores(human, system, num_categories))
            )
        except Exception as exc:
            log.warning("ablation variant %s failed: %s", variant.name, exc)
            rows.append(AblationRow(variant.name, None, str(exc)))
    return rows


def format_report_table(rows: Sequence[AblationRow]) -> str:
    """Aligned plain-text table, one line per variant."""
    header = f"{'variant':<24} {'n':>6} {'accuracy':>9} {'qwk':>8} {'pearson':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        if row.report is None:
            lines.append(f"{row.variant:<24} error: {row.error}")
        else:
            r = row.report
            lines.append(
                f"{row.variant:<24} {r.n:>6} {r.accuracy:>9.4f} {r.qwk:>8.4f} {r.pearson:>8.4f}"
            )
    return "\n".join(lines)


def rows_to_json(rows: Sequence[AblationRow]) -> str:
    return json.dumps([row.to_dict() for row in rows], indent=2) + "\n"
