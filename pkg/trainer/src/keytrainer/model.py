"""Linear adapter over hashed features: the embedding model training tunes
and the server loads.

A model directory holds `weights.npy` (the square map) and `model.json`
(ids and dimension). Identity weights reproduce the base featurizer
exactly, so an untrained adapter is the pre-training baseline.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ModelError
from .features import HashedFeaturizer

DEFAULT_BASE_MODEL = "hashed-lexical-256"

WEIGHTS_FILE = "weights.npy"
META_FILE = "model.json"

_BASE_ID = re.compile(r"^hashed-lexical-([1-9][0-9]*)$")


def base_dim(base_model_id: str) -> int:
    """Feature width encoded in a base model id such as `hashed-lexical-256`."""
    match = _BASE_ID.match(base_model_id)
    if not match:
        raise ModelError(
            f"unknown base model id {base_model_id!r}; expected hashed-lexical-<dim>"
        )
    return int(match.group(1))


class LinearAdapter:
    def __init__(self, model_id: str, base_model_id: str, weights: np.ndarray):
        dim = base_dim(base_model_id)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (dim, dim):
            raise ModelError(
                f"weights shape {weights.shape} does not match base dim {dim}"
            )
        if not np.all(np.isfinite(weights)):
            raise ModelError("weights contain non-finite values")
        if not model_id:
            raise ModelError("model id must be non-empty")
        self.model_id = model_id
        self.base_model_id = base_model_id
        self.weights = weights
        self.featurizer = HashedFeaturizer(dim)

    @property
    def dim(self) -> int:
        return self.featurizer.dim

    @classmethod
    def identity(cls, base_model_id: str = DEFAULT_BASE_MODEL) -> "LinearAdapter":
        return cls(base_model_id, base_model_id, np.eye(base_dim(base_model_id)))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-norm embeddings, one row per text; zero feature rows stay zero."""
        mapped = self.featurizer.transform(texts) @ self.weights.T
        norms = np.linalg.norm(mapped, axis=1, keepdims=True)
        np.divide(mapped, norms, out=mapped, where=norms > 0.0)
        return mapped

    def score_pairs(self, pairs: Sequence[Sequence[str]]) -> list[float]:
        """Cosine of the two sides' embeddings, clamped to [0, 1]."""
        if not pairs:
            return []
        left = self.embed([a for a, _ in pairs])
        right = self.embed([b for _, b in pairs])
        sims = np.clip(np.sum(left * right, axis=1), 0.0, 1.0)
        return [float(s) for s in sims]

    def save(self, model_dir: Path) -> None:
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
        np.save(model_dir / WEIGHTS_FILE, self.weights)
        meta = {
            "model_id": self.model_id,
            "base_model_id": self.base_model_id,
            "dim": self.dim,
        }
        (model_dir / META_FILE).write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, model_dir: Path) -> "LinearAdapter":
        model_dir = Path(model_dir)
        meta_path = model_dir / META_FILE
        weights_path = model_dir / WEIGHTS_FILE
        if not meta_path.is_file() or not weights_path.is_file():
            raise ModelError(f"{model_dir} is not a model directory")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            model_id = meta["model_id"]
            base_model_id = meta["base_model_id"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ModelError(f"{meta_path}: invalid model metadata: {exc}") from None
        weights = np.load(weights_path)
        return cls(model_id, base_model_id, weights)
