"""Inter-class similarity matrices and their row-wise normalization.

The raw matrix holds pairwise cosine similarities between class description
embeddings.  The normalized matrix rescales each row with a self-excluding
softmax: the diagonal entry is left untouched and the off-diagonal entries of
row j are passed through a temperature softmax that the diagonal does not
participate in.  Row j of the normalized matrix is the single source of
relative similarity used by all downstream sampling and margins.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimilarityMatrix",
    "cosine_matrix",
    "self_excluding_softmax",
    "diagonal_matrix",
    "build_similarity",
    "similarity_csv",
]


@dataclass
class SimilarityMatrix:
    """Raw cosine similarities plus their self-excluding normalization."""

    raw: np.ndarray
    normalized: np.ndarray
    tau: float

    def __post_init__(self) -> None:
        self.raw = np.asarray(self.raw, dtype=float)
        self.normalized = np.asarray(self.normalized, dtype=float)
        if self.raw.shape != self.normalized.shape:
            raise ValueError("raw and normalized shapes differ")
        if self.raw.ndim != 2 or self.raw.shape[0] != self.raw.shape[1]:
            raise ValueError("similarity matrices must be square")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")

    @property
    def n(self) -> int:
        return int(self.raw.shape[0])


def cosine_matrix(vectors: np.ndarray, names: list[str] | None = None) -> np.ndarray:
    """Pairwise cosine similarity of the rows of ``vectors``.

    Rows are normalized here; callers pass embeddings as stored.  A zero-norm
    row is an error naming the class (or row index when no names are given).
    """
    m = np.asarray(vectors, dtype=float)
    if hasattr(vectors, "vectors"):  # EmbeddingSet convenience
        names = list(vectors.names) if names is None else names
        m = np.asarray(vectors.vectors, dtype=float)
    if m.ndim != 2 or m.shape[0] < 2:
        raise ValueError("need at least two embedding rows")
    norms = np.linalg.norm(m, axis=1)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        which = names[bad[0]] if names is not None else f"row {bad[0]}"
        raise ValueError(f"zero-norm embedding for {which}")
    unit = m / norms[:, None]
    sim = unit @ unit.T
    # Exact symmetry and unit diagonal; matmul rounding can drift by ~1e-16.
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def self_excluding_softmax(raw: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise softmax over off-diagonal entries at temperature ``tau``.

    Diagonal entries are copied through unchanged.  The per-row maximum is
    subtracted before exponentiation so extreme temperatures stay finite.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    a = np.asarray(raw, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("similarity matrix must be square")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two classes to normalize off-diagonals")
    scaled = a / tau
    np.fill_diagonal(scaled, -np.inf)
    scaled -= scaled.max(axis=1, keepdims=True)
    weights = np.exp(scaled)
    np.fill_diagonal(weights, 0.0)
    out = weights / weights.sum(axis=1, keepdims=True)
    np.fill_diagonal(out, np.diagonal(a))
    return out


def diagonal_matrix(n: int) -> SimilarityMatrix:
    """The self-only baseline: each class is similar to itself alone."""
    if n < 2:
        raise ValueError("need at least two classes")
    eye = np.eye(n, dtype=float)
    return SimilarityMatrix(raw=eye, normalized=eye.copy(), tau=1.0)


def build_similarity(vectors: np.ndarray, tau: float, names: list[str] | None = None) -> SimilarityMatrix:
    raw = cosine_matrix(vectors, names)
    return SimilarityMatrix(raw=raw, normalized=self_excluding_softmax(raw, tau), tau=tau)


def similarity_csv(names: list[str], matrix: np.ndarray) -> str:
    """CSV with a header row of class names and one labeled data row per class."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (len(names), len(names)):
        raise ValueError("matrix shape does not match the name list")
    buf = io.StringIO()
    buf.write("class," + ",".join(names) + "\n")
    for name, row in zip(names, m):
        buf.write(name + "," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()
