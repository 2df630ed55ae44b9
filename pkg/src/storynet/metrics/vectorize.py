"""TF-IDF vectorization and the pairwise-similarity diversity measure.

Frozen variant (printed in tool output headers so results are
self-describing):

    weight(t, d) = tf(t, d) * (ln((1 + N) / (1 + df(t))) + 1)

with raw term counts, rows L2-normalized. Diversity of a story group is
1 minus the mean cosine similarity over all unordered pairs, with TF-IDF
fitted on the group itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DomainError, InsufficientDataError
from .text import TokenizedDoc, tokenize

TFIDF_FORMULA = "tfidf: raw tf * (ln((1+N)/(1+df)) + 1), rows L2-normalized; diversity = 1 - mean pairwise cosine"


@dataclass
class TfIdfMatrix:
    vocabulary: list[str]  # sorted lexicographically
    rows: np.ndarray  # (doc_count, |vocabulary|), L2-normalized (or all-zero)
    doc_count: int
    df: np.ndarray  # per-term document frequency
    doc_ids: list[str]

    def row(self, i: int) -> np.ndarray:
        return self.rows[i]


def tfidf(corpus: Sequence[TokenizedDoc]) -> TfIdfMatrix:
    """Vectorize a corpus; vocabulary is the sorted union of its tokens."""
    if len(corpus) == 0:
        raise InsufficientDataError("tfidf needs at least one document")
    vocabulary = sorted({t for doc in corpus for t in doc.tokens})
    index = {t: i for i, t in enumerate(vocabulary)}
    n = len(corpus)
    counts = np.zeros((n, len(vocabulary)), dtype=np.float64)
    for i, doc in enumerate(corpus):
        for token in doc.tokens:
            counts[i, index[token]] += 1.0
    df = (counts > 0).sum(axis=0)
    if len(vocabulary) == 0:
        return TfIdfMatrix(vocabulary, counts, n, df, [d.doc_id for d in corpus])
    idf = np.log((1.0 + n) / (1.0 + df)) + 1.0
    weights = counts * idf
    norms = np.linalg.norm(weights, axis=1)
    nonzero = norms > 0
    weights[nonzero] /= norms[nonzero, None]
    return TfIdfMatrix(vocabulary, weights, n, df, [d.doc_id for d in corpus])


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """dot(u, v) / (|u| |v|); 0.0 whenever either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def similarity_matrix(matrix: TfIdfMatrix) -> np.ndarray:
    """Pairwise cosine matrix; rows are already unit (or zero) vectors."""
    sims = matrix.rows @ matrix.rows.T
    np.fill_diagonal(sims, [1.0 if np.linalg.norm(r) > 0 else 0.0 for r in matrix.rows])
    return sims


def mean_pairwise_similarity(matrix: TfIdfMatrix) -> float:
    """Mean cosine over all unordered document pairs."""
    n = matrix.doc_count
    if n < 2:
        raise InsufficientDataError("pairwise similarity needs at least two documents")
    sims = matrix.rows @ matrix.rows.T
    upper = sims[np.triu_indices(n, k=1)]
    return float(upper.mean())


def diversity(group: Sequence[str], drop_stopwords: bool = False) -> float:
    """1 - mean pairwise cosine similarity of a group of story texts."""
    if len(group) < 2:
        raise InsufficientDataError("diversity needs at least two stories")
    docs = [tokenize(text, doc_id=str(i), drop_stopwords=drop_stopwords) for i, text in enumerate(group)]
    return 1.0 - mean_pairwise_similarity(tfidf(docs))
