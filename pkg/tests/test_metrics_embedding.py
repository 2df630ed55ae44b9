"""Embedding retrieval, TSV round-trip, and PCA projection."""
from __future__ import annotations

import math

import numpy as np
import pytest

from storynet.metrics.embedding import (
    EmbeddingEndpointConfig,
    EmbeddingValidationError,
    fetch_embeddings,
    load_embeddings,
    pca_project,
    save_embeddings,
)
from storynet.mock_llm import MockLLMServer


class TestPCA:
    def test_three_point_hand_computed(self):
        # points (1,1,0), (-1,-1,0), (0,0,0): centered already; the only
        # nonzero principal axis is (1,1,0)/sqrt(2), so coordinates are
        # (+sqrt(2), -sqrt(2), 0) on PC1 and exactly 0 on PC2.
        pts = np.array([[1.0, 1.0, 0.0], [-1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
        coords, components = pca_project(pts, 2)
        root2 = math.sqrt(2.0)
        assert coords[:, 0] == pytest.approx([root2, -root2, 0.0], abs=1e-12)
        assert coords[:, 1] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)
        assert components[0] == pytest.approx([1 / root2, 1 / root2, 0.0], abs=1e-12)

    def test_four_point_axes(self):
        # (±2, 0), (0, ±1): covariance diag(8, 2) -> PC1 = x-axis, PC2 = y-axis
        pts = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        coords, components = pca_project(pts, 2)
        assert components[0] == pytest.approx([1.0, 0.0], abs=1e-12)
        assert components[1] == pytest.approx([0.0, 1.0], abs=1e-12)
        assert coords == pytest.approx(pts, abs=1e-12)

    def test_sign_convention_deterministic(self):
        pts = np.array([[-3.0, 0.1], [3.0, -0.1], [0.0, 0.0]])
        _, components = pca_project(pts, 2)
        assert components[0][np.argmax(np.abs(components[0]))] > 0

    def test_identical_rows_identical_coords(self):
        pts = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [4.0, 0.0, 1.0]])
        coords, _ = pca_project(pts, 2)
        assert coords[0] == pytest.approx(coords[1], abs=1e-12)

    def test_rejects_bad_shape(self):
        with pytest.raises(EmbeddingValidationError):
            pca_project(np.zeros((0, 3)))


class TestTsvRoundTrip:
    def test_save_load(self, tmp_path):
        path = tmp_path / "emb.tsv"
        ids = ["a", "b"]
        matrix = np.array([[0.25, -1.5, 3.0], [1.0, 2.0, -0.125]])
        save_embeddings(path, ids, matrix)
        loaded_ids, loaded = load_embeddings(path)
        assert loaded_ids == ids
        assert loaded == pytest.approx(matrix, abs=1e-9)

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "emb.tsv"
        path.write_text("a\t1.0\t2.0\nb\t1.0\n")
        with pytest.raises(EmbeddingValidationError):
            load_embeddings(path)


class TestFetch:
    def test_identical_stories_identical_vectors(self):
        with MockLLMServer() as server:
            config = EmbeddingEndpointConfig(endpoint=server.embeddings_url)
            matrix = fetch_embeddings(["same story", "same story", "different"], config)
        assert matrix.shape == (3, 16)
        assert matrix[0] == pytest.approx(matrix[1], abs=1e-15)
        assert not np.allclose(matrix[0], matrix[2])

    def test_batching_preserves_order(self):
        texts = [f"story number {i}" for i in range(10)]
        with MockLLMServer() as server:
            config = EmbeddingEndpointConfig(endpoint=server.embeddings_url, batch_size=3)
            split = fetch_embeddings(texts, config)
            config_big = EmbeddingEndpointConfig(endpoint=server.embeddings_url, batch_size=64)
            whole = fetch_embeddings(texts, config_big)
        assert split == pytest.approx(whole, abs=1e-15)

    def test_deterministic_pipeline(self):
        texts = ["one tale", "another tale", "a third tale"]
        with MockLLMServer() as server:
            config = EmbeddingEndpointConfig(endpoint=server.embeddings_url)
            a = fetch_embeddings(texts, config)
            b = fetch_embeddings(texts, config)
        coords_a, _ = pca_project(a, 2)
        coords_b, _ = pca_project(b, 2)
        assert coords_a == pytest.approx(coords_b, abs=1e-15)
