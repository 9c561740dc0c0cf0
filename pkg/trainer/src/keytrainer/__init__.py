"""Embedding-adapter trainer with an HTTP scoring service.

Trains a linear map over hashed lexical features on labeled text pairs
(squared cosine error against the 0/1 label) and serves the result behind
the /embed, /score, and /health endpoints the grading pipeline consumes.
"""

from .data import TrainingPair, load_pairs, load_reference_texts
from .errors import DataError, ModelError, TrainerError, TrainingError
from .features import HashedFeaturizer, tokenize
from .model import DEFAULT_BASE_MODEL, LinearAdapter, base_dim
from .server import make_server, serve
from .training import MIN_PAIRS, TrainJob, TrainReport, pair_accuracy, train

__all__ = [
    "DEFAULT_BASE_MODEL",
    "MIN_PAIRS",
    "DataError",
    "HashedFeaturizer",
    "LinearAdapter",
    "ModelError",
    "TrainJob",
    "TrainReport",
    "TrainerError",
    "TrainingError",
    "TrainingPair",
    "base_dim",
    "load_pairs",
    "load_reference_texts",
    "make_server",
    "pair_accuracy",
    "serve",
    "tokenize",
    "train",
]
