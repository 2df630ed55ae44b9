"""Embedding retrieval and 2-D projection for the semantic-space export.

Embeddings come from an HTTP text-embedding endpoint (OpenAI-style JSON
wire format) or a precomputed TSV file. The built-in projection is PCA
onto the first two principal components; raw embeddings are always
exported alongside coordinates so heavier manifold methods can be applied
externally.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from ..errors import StorynetError

PROJECTION_NOTE = "projection: PCA (top-2 principal components of centered embeddings)"


class EmbeddingValidationError(StorynetError):
    """Embedding payloads disagree in dimension or shape."""


@dataclass
class EmbeddingEndpointConfig:
    endpoint: str
    model: str = "all-minilm-l6-v2"
    request_timeout: float = 30.0
    batch_size: int = 64
    api_key_env: str = "STORYNET_EMBED_API_KEY"


def fetch_embeddings(texts: Sequence[str], config: EmbeddingEndpointConfig) -> np.ndarray:
    """One embedding vector per text, fetched in batches, order preserved."""
    if not texts:
        return np.zeros((0, 0))
    headers = {}
    key = os.environ.get(config.api_key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    vectors: list[list[float]] = []
    for start in range(0, len(texts), config.batch_size):
        batch = list(texts[start : start + config.batch_size])
        resp = requests.post(
            config.endpoint,
            json={"model": config.model, "input": batch},
            headers=headers,
            timeout=config.request_timeout,
        )
        if resp.status_code != 200:
            raise StorynetError(f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}")
        data = resp.json().get("data")
        if not isinstance(data, list) or len(data) != len(batch):
            raise EmbeddingValidationError("embedding response does not cover the batch")
        ordered = sorted(data, key=lambda item: item.get("index", 0))
        vectors.extend([item["embedding"] for item in ordered])
    return _to_matrix(vectors)


def _to_matrix(vectors: list[list[float]]) -> np.ndarray:
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise EmbeddingValidationError(f"inconsistent embedding dimensions: {sorted(dims)}")
    return np.asarray(vectors, dtype=np.float64)


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a TSV embeddings file: doc id, then one float per column."""
    ids: list[str] = []
    vectors: list[list[float]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise EmbeddingValidationError(f"bad embeddings line: {line[:80]!r}")
        ids.append(parts[0])
        vectors.append([float(x) for x in parts[1:]])
    return ids, _to_matrix(vectors)


def save_embeddings(path: str | Path, ids: Sequence[str], matrix: np.ndarray) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc_id, row in zip(ids, matrix):
            fh.write(doc_id + "\t" + "\t".join(f"{x:.10g}" for x in row) + "\n")


def pca_project(matrix: np.ndarray, n_components: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Center and project onto the leading principal components.

    Returns (coordinates, components). Component signs are fixed by making
    each component's largest-magnitude entry positive, so output is
    deterministic.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 1:
        raise EmbeddingValidationError("need a 2-D matrix with at least one row")
    centered = matrix - matrix.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    k = min(n_components, vt.shape[0])
    components = vt[:k].copy()
    if k < n_components:  # degenerate input: pad with zero components
        components = np.vstack([components, np.zeros((n_components - k, matrix.shape[1]))])
    for i in range(components.shape[0]):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    coords = centered @ components.T
    return coords, components


def write_coordinates_csv(path: str | Path, ids: Sequence[str], coords: np.ndarray) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {PROJECTION_NOTE}\n")
        fh.write("doc_id,x,y\n")
        for doc_id, row in zip(ids, coords):
            fh.write(f"{doc_id},{row[0]:.10g},{row[1]:.10g}\n")
