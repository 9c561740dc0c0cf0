"""Exception types shared across the trainer."""

from __future__ import annotations


class TrainerError(Exception):
    """Base class for every error raised by this package."""


class DataError(TrainerError):
    """Pairs file or reference bank violates its schema."""


class TrainingError(TrainerError):
    """Invalid job settings, a degenerate dataset, or diverged training."""


class ModelError(TrainerError):
    """Model weights or metadata cannot be built, saved, or loaded."""
