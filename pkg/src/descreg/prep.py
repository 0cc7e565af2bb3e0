"""Data preparation utilities: crop planning and embedding-driven splits.

Large aerial images are tiled into fixed-size patches.  Along an axis of
length L with patch size P, an image that fits (L <= P) gets a single padded
window; otherwise L // P + 1 windows are placed with evenly spaced starts,
the first pinned at 0 and the last at L - P, which makes consecutive windows
overlap by P + (P - L) / (L // P) pixels.  Starts are rounded to integers
without breaking coverage.

``cluster_split`` derives a seen/unseen split the way benchmark splits are
built: average-linkage agglomerative clustering on cosine distance over the
class embeddings, then one member of each of the tightest leaf pairs is
sampled as unseen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import pdist

from .catalog import ClassSplit, EmbeddingSet

__all__ = ["PATCH_SIZE", "CropPlan", "crop_plan", "cluster_split"]

PATCH_SIZE = 800


@dataclass(frozen=True)
class CropPlan:
    """Integer pixel windows (x1, y1, x2, y2) covering one image."""

    width: int
    height: int
    patch: int
    windows: tuple[tuple[int, int, int, int], ...]
    padded_x: bool
    padded_y: bool

    @property
    def count(self) -> int:
        return len(self.windows)


def _axis_starts(length: int, patch: int) -> tuple[list[int], bool]:
    """Window starts for one axis, plus whether the axis needs padding."""
    if length <= patch:
        return [0], length < patch
    count = length // patch + 1
    spacing = (length - patch) / (count - 1)
    starts = [round(i * spacing) for i in range(count)]
    starts[0] = 0
    starts[-1] = length - patch
    return starts, False


def crop_plan(width: int, height: int, patch: int = PATCH_SIZE) -> CropPlan:
    """Plan the patch grid for a width x height image.

    Windows are the cartesian product of the per-axis placements, row-major
    (y outer, x inner).  Padded axes keep a full-size window starting at 0
    that extends past the image.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    if patch < 1:
        raise ValueError("patch size must be positive")
    xs, padded_x = _axis_starts(width, patch)
    ys, padded_y = _axis_starts(height, patch)
    windows = tuple(
        (x, y, x + patch, y + patch) for y in ys for x in xs
    )
    return CropPlan(
        width=width,
        height=height,
        patch=patch,
        windows=windows,
        padded_x=padded_x,
        padded_y=padded_y,
    )


def cluster_split(
    embeddings: EmbeddingSet, n_unseen: int, rng: np.random.Generator
) -> ClassSplit:
    """Sample unseen classes from the tightest leaf pairs of a dendrogram.

    Classes are clustered by average linkage on cosine distance.  Merges
    joining two original classes are the leaf pairs; the ``n_unseen``
    tightest ones each contribute one member, chosen uniformly, to the
    unseen group.  Both groups keep the embedding-file order.
    """
    n = len(embeddings)
    if n_unseen < 0:
        raise ValueError("n_unseen must be non-negative")
    if n_unseen == 0:
        return ClassSplit(tuple(embeddings.names), ())
    if n < 2 * n_unseen:
        raise ValueError(f"{n} classes cannot yield {n_unseen} disjoint pairs")
    merges = linkage(pdist(embeddings.vectors, metric="cosine"), method="average")
    leaf_pairs = [
        (float(row[2]), int(row[0]), int(row[1]))
        for row in merges
        if row[0] < n and row[1] < n
    ]
    leaf_pairs.sort()
    if len(leaf_pairs) < n_unseen:
        raise ValueError(
            f"dendrogram has only {len(leaf_pairs)} leaf pairs, need {n_unseen}"
        )
    unseen_indices = set()
    for _, a, b in leaf_pairs[:n_unseen]:
        unseen_indices.add(a if rng.integers(2) == 0 else b)
    seen = tuple(name for i, name in enumerate(embeddings.names) if i not in unseen_indices)
    unseen = tuple(name for i, name in enumerate(embeddings.names) if i in unseen_indices)
    return ClassSplit(seen, unseen)
