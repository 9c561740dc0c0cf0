"""Hashed lexical features: the fixed input space every adapter maps from.

Unigram and bigram term frequencies are bucketed into a fixed-width vector
by a keyed hash, so the featurizer needs no vocabulary, no fitting, and no
model files. Rows are L2-normalized; a text with no tokens maps to the zero
vector.
"""

from __future__ import annotations

import hashlib
import string
from typing import Sequence

import numpy as np

from .errors import TrainerError

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_HASH_PERSON = b"keytrainer"


def tokenize(text: str) -> list[str]:
    """Lowercased words with punctuation stripped; empty tokens dropped."""
    return [t for t in text.lower().translate(_PUNCT_TABLE).split() if t]


def _bucket(feature: str, dim: int) -> int:
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, person=_HASH_PERSON
    ).digest()
    return int.from_bytes(digest, "big") % dim


class HashedFeaturizer:
    """Bag of unigrams and bigrams hashed into `dim` buckets."""

    def __init__(self, dim: int = 256):
        if dim < 1:
            raise TrainerError(f"feature dim must be >= 1, got {dim}")
        self.dim = dim

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = tokenize(text)
            bigrams = [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
            for feature in tokens + bigrams:
                out[row, _bucket(feature, self.dim)] += 1.0
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0.0)
        return out
