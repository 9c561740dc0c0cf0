"""Adapter training: minibatch SGD on squared cosine error.

Each labeled pair pulls the cosine of its two embeddings toward its 0/1
label. The gradient is analytic (no autograd), the shuffle and holdout are
seeded, and the produced report compares held-out pair classification
(cosine > 0.5 predicts 1) before and after training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import TrainingPair, load_pairs
from .errors import TrainingError
from .model import DEFAULT_BASE_MODEL, LinearAdapter, base_dim

MIN_PAIRS = 100

REPORT_FILE = "report.json"


@dataclass(frozen=True)
class TrainJob:
    pairs_path: Path
    bank_paths: tuple[Path, ...]
    output_dir: Path
    base_model_id: str = DEFAULT_BASE_MODEL
    epochs: int = 4
    batch_size: int = 16
    learning_rate: float = 0.5
    eval_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        base_dim(self.base_model_id)
        if self.epochs < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainingError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.learning_rate > 0.0:
            raise TrainingError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.eval_fraction <= 0.5:
            raise TrainingError(
                f"eval fraction must be in (0, 0.5], got {self.eval_fraction}"
            )


@dataclass(frozen=True)
class TrainReport:
    model_id: str
    base_model_id: str
    n_pairs: int
    n_train: int
    n_eval: int
    n_positive: int
    n_negative: int
    epochs: int
    accuracy_before: float
    accuracy_after: float
    final_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


def pair_accuracy(model: LinearAdapter, pairs: list[TrainingPair]) -> float:
    """Fraction of pairs whose cosine > 0.5 prediction matches the label."""
    if not pairs:
        raise TrainingError("cannot evaluate on zero pairs")
    left = model.embed([p.text_a for p in pairs])
    right = model.embed([p.text_b for p in pairs])
    sims = np.sum(left * right, axis=1)
    labels = np.array([p.label for p in pairs])
    return float(np.mean((sims > 0.5).astype(int) == labels))


def _cosines(weights: np.ndarray, feats_a: np.ndarray, feats_b: np.ndarray):
    # Diverged weights overflow here; the caller reports that as a non-finite
    # loss, so the intermediate warnings carry no extra signal.
    with np.errstate(over="ignore", invalid="ignore"):
        u = feats_a @ weights.T
        v = feats_b @ weights.T
        nu = np.linalg.norm(u, axis=1)
        nv = np.linalg.norm(v, axis=1)
        safe = (nu > 0.0) & (nv > 0.0)
        denom = np.where(safe, nu * nv, 1.0)
        cos = np.where(safe, np.sum(u * v, axis=1) / denom, 0.0)
    return u, v, nu, nv, cos, safe


def _batch_step(
    weights: np.ndarray,
    feats_a: np.ndarray,
    feats_b: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Mean squared cosine error over the batch and its weight gradient."""
    u, v, nu, nv, cos, safe = _cosines(weights, feats_a, feats_b)
    with np.errstate(over="ignore", invalid="ignore"):
        err = cos - labels
        loss = float(np.mean(err**2))
        scale = np.where(safe, 2.0 * err / len(labels), 0.0)
        inv = np.where(safe, 1.0 / np.where(safe, nu * nv, 1.0), 0.0)
        # d cos / d u = v/(|u||v|) - cos * u/|u|^2, symmetrically for v
        du = scale[:, None] * (v * inv[:, None] - u * (cos / np.where(safe, nu**2, 1.0))[:, None])
        dv = scale[:, None] * (u * inv[:, None] - v * (cos / np.where(safe, nv**2, 1.0))[:, None])
        grad = du.T @ feats_a + dv.T @ feats_b
    return loss, grad


def train(job: TrainJob) -> TrainReport:
    """Fit an adapter on the job's pairs and save it with its report."""
    pairs = load_pairs(job.pairs_path, job.bank_paths)
    if len(pairs) < MIN_PAIRS:
        raise TrainingError(f"need at least {MIN_PAIRS} pairs, got {len(pairs)}")
    n_positive = sum(p.label for p in pairs)
    n_negative = len(pairs) - n_positive
    if n_positive == 0 or n_negative == 0:
        present = 1 if n_positive else 0
        raise TrainingError(
            f"pairs file is single-label (every label is {present}); "
            "training needs both labels"
        )

    rng = np.random.default_rng(job.seed)
    order = rng.permutation(len(pairs))
    n_eval = max(1, round(len(pairs) * job.eval_fraction))
    eval_pairs = [pairs[i] for i in order[:n_eval]]
    train_pairs = [pairs[i] for i in order[n_eval:]]

    model_id = f"{job.base_model_id}-adapted"
    dim = base_dim(job.base_model_id)
    base = LinearAdapter.identity(job.base_model_id)
    accuracy_before = pair_accuracy(base, eval_pairs)

    feats_a = base.featurizer.transform([p.text_a for p in train_pairs])
    feats_b = base.featurizer.transform([p.text_b for p in train_pairs])
    labels = np.array([float(p.label) for p in train_pairs])

    weights = np.eye(dim)
    final_loss = 0.0
    for epoch in range(1, job.epochs + 1):
        perm = rng.permutation(len(train_pairs))
        squared_error_sum = 0.0
        for start in range(0, len(perm), job.batch_size):
            batch = perm[start : start + job.batch_size]
            loss, grad = _batch_step(
                weights, feats_a[batch], feats_b[batch], labels[batch]
            )
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss!r} at epoch {epoch} batch "
                    f"{start // job.batch_size + 1}: max |weight| = "
                    f"{float(np.max(np.abs(weights))):.3e}, learning rate "
                    f"{job.learning_rate} is likely too high"
                )
            weights -= job.learning_rate * grad
            squared_error_sum += loss * len(batch)
        final_loss = squared_error_sum / len(train_pairs)

    adapted = LinearAdapter(model_id, job.base_model_id, weights)
    accuracy_after = pair_accuracy(adapted, eval_pairs)

    report = TrainReport(
        model_id=model_id,
        base_model_id=job.base_model_id,
        n_pairs=len(pairs),
        n_train=len(train_pairs),
        n_eval=len(eval_pairs),
        n_positive=n_positive,
        n_negative=n_negative,
        epochs=job.epochs,
        accuracy_before=accuracy_before,
        accuracy_after=accuracy_after,
        final_loss=final_loss,
    )
    adapted.save(Path(job.output_dir))
    (Path(job.output_dir) / REPORT_FILE).write_text(
        json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return report
