"""Quantitative analysis: tokenization, TF-IDF diversity, timelines,
term dynamics, rating summaries, and embedding export."""
from .text import TokenizedDoc, tokenize
from .vectorize import TfIdfMatrix, cosine, diversity, mean_pairwise_similarity, tfidf
from .timeline import (
    DiversityTimeline,
    TermChain,
    TimelineCell,
    diversity_timeline,
    gain,
    term_dynamics,
    timeline_gains,
)
from .ratings import RatingRecord, RatingSet, RatingSummary, ingest_ratings, rating_summary
from .embedding import (
    EmbeddingEndpointConfig,
    fetch_embeddings,
    load_embeddings,
    pca_project,
    save_embeddings,
)

__all__ = [
    "TokenizedDoc",
    "tokenize",
    "TfIdfMatrix",
    "tfidf",
    "cosine",
    "diversity",
    "mean_pairwise_similarity",
    "DiversityTimeline",
    "TimelineCell",
    "TermChain",
    "diversity_timeline",
    "gain",
    "timeline_gains",
    "term_dynamics",
    "RatingRecord",
    "RatingSet",
    "RatingSummary",
    "ingest_ratings",
    "rating_summary",
    "EmbeddingEndpointConfig",
    "fetch_embeddings",
    "load_embeddings",
    "save_embeddings",
    "pca_project",
]
