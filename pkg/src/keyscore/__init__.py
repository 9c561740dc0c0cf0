"""Automated short-answer grading: justification-key extraction by a
completion model, reference-answer similarity scoring, adaptation-pair
datasets, and agreement evaluation.
"""

from .corpus import (
    AnnotationKey,
    AnnotationRecord,
    Question,
    SplitManifest,
    StudentAnswer,
    SubQuestion,
    apply_manifest,
    load_annotations,
    load_corpus,
    load_manifest,
    load_questions,
    save_manifest,
    score_distribution,
    select_augmentation_set,
    split_corpus,
)
from .errors import (
    AnnotationError,
    BankError,
    ConfigError,
    CorpusError,
    CorpusParseError,
    ExtractionParseError,
    FixtureMissError,
    KeyscoreError,
    MetricError,
    PairError,
    PromptError,
    ProviderError,
    ReviewError,
    ScoringError,
    SplitError,
    TransportError,
)
from .evaluation import (
    AblationRow,
    AblationVariant,
    EvalReport,
    OverlapReport,
    accuracy,
    evaluate_scores,
    format_report_table,
    key_is_correct,
    key_overlap_eval,
    pearson,
    qwk,
    run_ablation,
)
from .extraction import (
    CompletionParams,
    DemonstrationExample,
    ExtractionResult,
    Extractor,
    HTTPCompletionClient,
    JustificationKey,
    PromptTemplate,
    RecordingClient,
    ReplayClient,
    ReplayStore,
    build_prompt,
    extract_batch,
    extract_keys,
    load_template,
    parse_extraction,
    prompt_digest,
)
from .pairs import (
    LabeledPair,
    ReviewItem,
    append_decision,
    build_gold,
    build_silver,
    export_pairs,
    import_pairs,
    load_decisions,
    pairs_to_jsonl,
    resolve_reviews,
    split_sentences,
)
from .references import (
    ReferenceAnswer,
    ReferenceBank,
    augment,
    bank_from_json,
    bank_to_json,
    init_from_rubric,
    load_bank,
    normalize_text,
    save_bank,
)
from .scoring import (
    AnalyticScore,
    EmbeddingPairScorer,
    HashedEmbedder,
    HolisticResult,
    HTTPEmbeddingProvider,
    HTTPPairScorer,
    ScoredPair,
    analytic_score,
    best_match,
    cosine,
    grade_answer,
    grade_batch,
    holistic_score,
)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
