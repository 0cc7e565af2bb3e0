import math

import numpy as np
import pytest

from descreg.similarity import (
    SimilarityMatrix,
    build_similarity,
    cosine_matrix,
    diagonal_matrix,
    self_excluding_softmax,
    similarity_csv,
)


def test_cosine_matrix_known_pair():
    m = cosine_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
    assert m[0, 0] == 1.0 and m[1, 1] == 1.0
    assert m[0, 1] == m[1, 0]
    assert m[0, 1] == pytest.approx(0.7071067811865475, abs=1e-15)


def test_cosine_matrix_properties_random():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n, d = int(rng.integers(2, 12)), int(rng.integers(1, 9))
        m = cosine_matrix(rng.normal(size=(n, d)))
        assert np.array_equal(m, m.T)
        assert np.array_equal(np.diagonal(m), np.ones(n))
        assert np.all(m >= -1.0) and np.all(m <= 1.0)


def test_cosine_matrix_zero_row_names_class():
    vectors = np.array([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="beta"):
        cosine_matrix(vectors, names=["alpha", "beta"])


def test_softmax_two_classes_is_certain():
    raw = np.array([[1.0, 0.3], [0.3, 1.0]])
    out = self_excluding_softmax(raw, 0.03)
    assert out[0, 1] == 1.0 and out[1, 0] == 1.0
    assert out[0, 0] == 1.0 and out[1, 1] == 1.0


def test_softmax_three_class_oracle():
    # Row 0 has off-diagonal sims 0.8 and 0.2; at tau 1 the softmax weights
    # are e^0.8 and e^0.2, giving 0.6456563062257954 and 0.3543436937742045.
    raw = np.array(
        [
            [1.0, 0.8, 0.2],
            [0.8, 1.0, 0.5],
            [0.2, 0.5, 1.0],
        ]
    )
    out = self_excluding_softmax(raw, 1.0)
    assert out[0, 1] == pytest.approx(0.6456563062257954, abs=1e-12)
    assert out[0, 2] == pytest.approx(0.3543436937742045, abs=1e-12)
    # Very cold temperature: winner takes (almost) all.
    cold = self_excluding_softmax(raw, 0.03)
    assert cold[0, 1] == pytest.approx(1.0, abs=1e-8)
    assert cold[0, 2] == pytest.approx(0.0, abs=1e-8)
    # Very hot temperature: uniform over the n-1 others.
    hot = self_excluding_softmax(raw, 1e6)
    assert np.allclose(hot - np.diag(np.diagonal(hot)), (np.ones((3, 3)) - np.eye(3)) / 2, atol=1e-9)


def test_softmax_invariants_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 10))
        raw = cosine_matrix(rng.normal(size=(n, max(n, 3))))
        for tau in (0.01, 0.03, 1.0, 1e6):
            out = self_excluding_softmax(raw, tau)
            assert np.array_equal(np.diagonal(out), np.diagonal(raw))
            off_sums = out.sum(axis=1) - np.diagonal(out)
            assert np.allclose(off_sums, 1.0, atol=1e-9)
            # Monotonicity: higher raw similarity, no smaller weight.
            for i in range(n):
                others = [k for k in range(n) if k != i]
                for a in others:
                    for b in others:
                        if raw[i, a] > raw[i, b]:
                            assert out[i, a] >= out[i, b]


def test_softmax_rejects_bad_inputs():
    with pytest.raises(ValueError):
        self_excluding_softmax(np.eye(3), 0.0)
    with pytest.raises(ValueError):
        self_excluding_softmax(np.ones((1, 1)), 1.0)
    with pytest.raises(ValueError):
        self_excluding_softmax(np.zeros((2, 3)), 1.0)


def test_diagonal_matrix_is_identity():
    sim = diagonal_matrix(4)
    assert np.array_equal(sim.raw, np.eye(4))
    assert np.array_equal(sim.normalized, np.eye(4))


def test_build_similarity_bundles_both():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(5, 8))
    sim = build_similarity(vectors, 0.5)
    assert sim.tau == 0.5
    assert np.array_equal(sim.raw, cosine_matrix(vectors))
    assert np.array_equal(sim.normalized, self_excluding_softmax(sim.raw, 0.5))


def test_similarity_matrix_validation():
    with pytest.raises(ValueError):
        SimilarityMatrix(np.eye(3), np.eye(2), 1.0)
    with pytest.raises(ValueError):
        SimilarityMatrix(np.eye(3), np.eye(3), 0.0)


def test_similarity_csv_layout():
    text = similarity_csv(["a", "b"], np.array([[1.0, 0.25], [0.25, 1.0]]))
    lines = text.strip().split("\n")
    assert lines[0] == "class,a,b"
    assert lines[1] == "a,1.0,0.25"
    assert lines[2] == "b,0.25,1.0"
    with pytest.raises(ValueError):
        similarity_csv(["a"], np.eye(2))
