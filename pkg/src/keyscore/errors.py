"""Exception types shared across the grading pipeline."""

from __future__ import annotations


class KeyscoreError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(KeyscoreError):
    """Invalid run configuration or config file."""


class CorpusError(KeyscoreError):
    """Corpus-level failure (empty result set, inconsistent data)."""


class CorpusParseError(CorpusError):
    """A malformed corpus row; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class SplitError(CorpusError):
    """Split ratios cannot be honored or a manifest is inconsistent."""


class AnnotationError(CorpusError):
    """Invalid manual annotation record."""


class PromptError(KeyscoreError):
    """Prompt construction failed (unknown label, missing template)."""


class ExtractionParseError(KeyscoreError):
    """Completion text could not be parsed into keys; carries the raw text."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class FixtureMissError(KeyscoreError):
    """Replay-only completion requested for a prompt with no stored fixture."""

    def __init__(self, digest: str):
        super().__init__(f"fixture miss for prompt sha256 {digest}")
        self.digest = digest


class TransportError(KeyscoreError):
    """HTTP provider failure; `retryable` hints whether a retry may help."""

    def __init__(self, message: str, status: int | None = None, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.retryable = retryable


class ProviderError(KeyscoreError):
    """An embedding or pair-scoring provider violated its contract."""


class BankError(KeyscoreError):
    """Reference bank construction or lookup failure."""


class PairError(KeyscoreError):
    """Gold/silver pair construction or pairs-file schema failure."""


class ReviewError(PairError):
    """Review items remain undecided at finalization."""


class ScoringError(KeyscoreError):
    """Similarity scoring failure (zero-norm vector, unknown reference)."""


class MetricError(KeyscoreError):
    """Evaluation metric precondition violated."""
