"""Chunk-level novelty, transience, and precocity for timestamped corpora."""

__version__ = "0.1.0"

from .corpus import Chunk, DocumentRecord, ingest_corpus, trim_paratext
from .metrics import FeatureVector, cosine_distance, kl_divergence
from .scoring import (
    AggregationSpec,
    ChunkScore,
    DocScore,
    aggregate_document,
    score_chunk,
    score_chunk_similar_subset,
    score_corpus,
)
from .timeline import PeriodScheme, WindowConfig, comparison_window, is_central, perplexity_periods
from .lm import perplexity_precocity

__all__ = [
    "__version__",
    "Chunk",
    "DocumentRecord",
    "ingest_corpus",
    "trim_paratext",
    "FeatureVector",
    "cosine_distance",
    "kl_divergence",
    "AggregationSpec",
    "ChunkScore",
    "DocScore",
    "aggregate_document",
    "score_chunk",
    "score_chunk_similar_subset",
    "score_corpus",
    "PeriodScheme",
    "WindowConfig",
    "comparison_window",
    "is_central",
    "perplexity_periods",
    "perplexity_precocity",
]
