"""Embedding providers, cosine similarity, best-reference selection, and
analytic/holistic score generation.

An analytic score is 1 only when a key's most similar reference is correct
and the similarity clears the threshold strictly. The holistic score is the
sum of analytic scores capped at the question's maximum.
"""

from __future__ import annotations

import hashlib
import string
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence
from weakref import WeakKeyDictionary

import numpy as np
import requests

from ._http import post_json
from .corpus import Question, StudentAnswer
from .errors import ProviderError, ScoringError
from .extraction import Extractor, JustificationKey
from .references import ReferenceAnswer, ReferenceBank, normalize_text


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedEmbedder:
    """Deterministic hashed unigram+bigram term-frequency embeddings.

    Unit-norm 512-dim vectors with no model backend; a text with no tokens
    embeds to the zero vector. Not a semantic model: equal token multisets
    give cosine 1.0, disjoint token sets give cosine 0.0.
    """

    def __init__(self, dim: int = 512):
        if dim < 1:
            raise ScoringError("embedding dim must be >= 1")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = _tokenize(text)
            for feature in tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]:
                out[row, _bucket(feature, self.dim)] += 1.0
            norm = float(np.linalg.norm(out[row]))
            if norm > 0.0:
                out[row] /= norm
        return out


def _tokenize(text: str) -> list[str]:
    raw = normalize_text(text).split()
    tokens = [token.strip(string.punctuation) for token in raw]
    return [token for token in tokens if token]


def _bucket(feature: str, dim: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HTTPEmbeddingProvider:
    """Remote embedding backend speaking POST /embed."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        retries: int = 2,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()
        self._dim: int | None = None

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        body = post_json(
            self.session,
            f"{self.base_url}/embed",
            {"texts": list(texts)},
            timeout=self.timeout,
            retries=self.retries,
        )
        try:
            vectors = body["vectors"]
            dim = int(body["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed /embed response: {exc}") from None
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise ProviderError(
                f"embedding dimension drifted from {self._dim} to {dim} across calls"
            )
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.shape != (len(texts), dim):
            raise ProviderError(
                f"expected {len(texts)} vectors of dim {dim}, got shape {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise ProviderError("embedding response contains non-finite values")
        return matrix


class EmbeddingPairScorer:
    """Pair scores from any embedding provider: cosine clamped to [0, 1]."""

    def __init__(self, provider: EmbeddingProvider | None = None):
        self.provider = provider if provider is not None else HashedEmbedder()

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        if not pairs:
            return []
        left = self.provider.embed([a for a, _ in pairs])
        right = self.provider.embed([b for _, b in pairs])
        norms = np.linalg.norm(left, axis=1) * np.linalg.norm(right, axis=1)
        dots = np.einsum("ij,ij->i", left, right)
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(norms > 0.0, dots / np.where(norms > 0.0, norms, 1.0), 0.0)
        return [float(x) for x in np.clip(sims, 0.0, 1.0)]


class HTTPPairScorer:
    """Remote cross-scoring backend speaking POST /score."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        retries: int = 2,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        body = post_json(
            self.session,
            f"{self.base_url}/score",
            {"pairs": [[a, b] for a, b in pairs]},
            timeout=self.timeout,
            retries=self.retries,
        )
        try:
            scores = [float(x) for x in body["scores"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed /score response: {exc}") from None
        if len(scores) != len(pairs):
            raise ProviderError(f"expected {len(pairs)} scores, got {len(scores)}")
        return scores


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|), clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ScoringError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ScoringError("cosine of a zero-norm vector is undefined")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


@dataclass(frozen=True)
class ScoredPair:
    key: JustificationKey
    ref_id: str
    similarity: float


@dataclass(frozen=True)
class AnalyticScore:
    key: JustificationKey
    best: ScoredPair
    score: int

    def __post_init__(self):
        if self.score not in (0, 1):
            raise ScoringError(f"analytic score must be 0 or 1, got {self.score!r}")


@dataclass(frozen=True)
class HolisticResult:
    answer_id: str
    analytic: tuple[AnalyticScore, ...]
    holistic: int
    note: str | None = None


@dataclass(frozen=True)
class _BankEmbeddings:
    refs: tuple[ReferenceAnswer, ...]
    matrix: np.ndarray
    norms: np.ndarray


_BANK_CACHE: WeakKeyDictionary = WeakKeyDictionary()
_BANK_CACHE_LOCK = threading.Lock()


def bank_embeddings(bank: ReferenceBank, provider: EmbeddingProvider) -> _BankEmbeddings:
    """Reference embeddings, computed once per (provider, bank content)."""
    bank_key = bank.content_hash()
    with _BANK_CACHE_LOCK:
        try:
            per_provider = _BANK_CACHE.setdefault(provider, {})
        except TypeError:
            per_provider = None
        if per_provider is not None and bank_key in per_provider:
            return per_provider[bank_key]
        refs = tuple(sorted(bank.references, key=lambda r: r.ref_id))
        matrix = np.asarray(provider.embed([r.text for r in refs]), dtype=np.float64)
        if matrix.shape[0] != len(refs):
            raise ProviderError(
                f"provider returned {matrix.shape[0]} vectors for {len(refs)} references"
            )
        entry = _BankEmbeddings(refs, matrix, np.linalg.norm(matrix, axis=1))
        if per_provider is not None:
            per_provider[bank_key] = entry
        return entry


def best_match(
    key: JustificationKey, bank: ReferenceBank, provider: EmbeddingProvider
) -> ScoredPair:
    """The reference most similar to the key; ties go to the lowest ref_id.

    A key that embeds to the zero vector shares no tokens with anything and
    scores 0.0 against every reference rather than erroring, so one hollow
    extraction cannot abort grading.
    """
    embedded = bank_embeddings(bank, provider)
    vec = np.asarray(provider.embed([key.span_text]), dtype=np.float64)[0]
    if vec.shape != embedded.matrix.shape[1:]:
        raise ScoringError(
            f"key embedding dim {vec.shape} does not match bank dim {embedded.matrix.shape[1:]}"
        )
    key_norm = float(np.linalg.norm(vec))
    if key_norm == 0.0:
        sims = np.zeros(len(embedded.refs))
    else:
        denom = embedded.norms * key_norm
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(denom > 0.0, embedded.matrix @ vec / np.where(denom > 0.0, denom, 1.0), 0.0)
        sims = np.clip(sims, -1.0, 1.0)
    best_index = 0
    for index in range(1, len(embedded.refs)):
        if sims[index] > sims[best_index]:
            best_index = index
    return ScoredPair(key=key, ref_id=embedded.refs[best_index].ref_id, similarity=float(sims[best_index]))


def analytic_score(pair: ScoredPair, bank: ReferenceBank, threshold: float = 0.5) -> AnalyticScore:
    """1 only for a correct best reference with similarity strictly above threshold."""
    ref = bank.ref_by_id(pair.ref_id)
    score = 1 if ref.polarity == "correct" and pair.similarity > threshold else 0
    return AnalyticScore(key=pair.key, best=pair, score=score)


def holistic_score(analytic: Sequence[int], max_score: int) -> int:
    """Sum of analytic scores capped at max_score; no penalty for zeros."""
    for value in analytic:
        if value not in (0, 1):
            raise ScoringError(f"analytic scores must be 0 or 1, got {value!r}")
    return min(sum(analytic), max_score)


def grade_answer(
    answer: StudentAnswer,
    question: Question,
    bank: ReferenceBank,
    extractor: Extractor,
    provider: EmbeddingProvider,
    threshold: float = 0.5,
    dedup_references: bool = False,
) -> HolisticResult:
    """Extract keys, score each against the bank, and cap the sum.

    With dedup_references, repeated hits on one reference count once toward
    the holistic score; default off, matching a plain sum of analytic scores.
    An unparseable completion grades to holistic 0 with the failure noted.
    """
    extraction = extractor.extract(question, answer)
    if extraction.error is not None:
        return HolisticResult(answer_id=answer.answer_id, analytic=(), holistic=0, note=extraction.error)
    analytic = []
    for key in extraction.iter_keys(question.labels):
        pair = best_match(key, bank, provider)
        analytic.append(analytic_score(pair, bank, threshold))
    if dedup_references:
        distinct = {a.best.ref_id for a in analytic if a.score == 1}
        holistic = min(len(distinct), question.max_score)
    else:
        holistic = holistic_score([a.score for a in analytic], question.max_score)
    return HolisticResult(answer_id=answer.answer_id, analytic=tuple(analytic), holistic=holistic)


def grade_batch(
    answers: Sequence[StudentAnswer],
    question: Question,
    bank: ReferenceBank,
    extractor: Extractor,
    provider: EmbeddingProvider,
    threshold: float = 0.5,
    dedup_references: bool = False,
) -> list[HolisticResult]:
    return [
        grade_answer(answer, question, bank, extractor, provider, threshold, dedup_references)
        for answer in answers
    ]
