"""Similarity-aware triplet regularization over projected class embeddings.

For each anchor class j, a positive class h is drawn from the classes most
similar to j and a negative class l from the least similar, judged by row j
of the normalized similarity matrix.  The hinge

    max(0, d(w_j, w_h) - d(w_j, w_l) + margin)

pulls the anchor's projected embedding toward the positive and away from the
negative.  In adaptive mode the margin is the similarity gap of the sampled
pair, so strongly separated pairs impose stronger constraints.  Distances are
plain (non-squared) Euclidean; below ``DISTANCE_FLOOR`` the distance gradient
is defined as zero.

Two baselines live here as well: with a self-only similarity matrix the
sampler returns the anchor itself as positive (margin 1), which reduces the
hinge to the inter-class contrastive form max(0, 1 - d(w_j, w_l)), and
``direct_similarity_reg`` matches projected cosines to the normalized
similarities with a mean squared penalty instead of sampling triplets.

All gradients are computed analytically in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .similarity import SimilarityMatrix

__all__ = [
    "DISTANCE_FLOOR",
    "SamplingPolicy",
    "TripletSample",
    "LossValue",
    "sample_triplet",
    "triplet_loss",
    "triplet_loss_total",
    "direct_similarity_reg",
]

DISTANCE_FLOOR = 1e-12

SAMPLING_MODES = ("top-pool", "proportional")


@dataclass(frozen=True)
class SamplingPolicy:
    """How triplets are drawn for each anchor.

    Pool sizes of 0 mean "derive from the class count": the positive pool is
    max(1, ceil((n-1)/4)) most-similar classes and the negative pool is
    max(1, ceil((n-1)/2)) least-similar classes, both ends of one ordering by
    descending row similarity with ties broken by ascending class index.
    """

    mode: str = "top-pool"
    pos_pool: int = 0
    neg_pool: int = 0
    triplets_per_class: int = 1

    def __post_init__(self) -> None:
        if self.mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.pos_pool < 0 or self.neg_pool < 0:
            raise ValueError("pool sizes must be non-negative (0 derives from n)")
        if self.triplets_per_class < 1:
            raise ValueError("triplets_per_class must be positive")

    def resolved_pools(self, n: int) -> tuple[int, int]:
        """Concrete pool sizes for an n-class catalog."""
        if n < 3:
            raise ValueError("triplet sampling needs at least three classes")
        pos = self.pos_pool if self.pos_pool else max(1, math.ceil((n - 1) / 4))
        neg = self.neg_pool if self.neg_pool else max(1, math.ceil((n - 1) / 2))
        if pos + neg > n - 1:
            raise ValueError(
                f"pool sizes {pos}+{neg} exceed the {n - 1} candidate classes"
            )
        return pos, neg


@dataclass(frozen=True)
class TripletSample:
    """One sampled (anchor, positive, negative) with its margin.

    The positive equals the anchor only for the self-only similarity
    baseline, whose margin is always 1.
    """

    anchor: int
    positive: int
    negative: int
    margin: float


@dataclass
class LossValue:
    """A scalar loss with analytic gradients per parameter block."""

    value: float
    gradients: dict[str, np.ndarray] = field(default_factory=dict)


def _candidate_order(row: np.ndarray, anchor: int) -> list[int]:
    others = [k for k in range(row.shape[0]) if k != anchor]
    return sorted(others, key=lambda k: (-row[k], k))


def sample_triplet(
    anchor: int,
    sim: SimilarityMatrix,
    policy: SamplingPolicy,
    rng: np.random.Generator,
    fixed_margin: float | None = None,
) -> TripletSample:
    """Draw one triplet for ``anchor`` from the normalized similarity row.

    With ``fixed_margin`` set, the sample carries that constant margin;
    otherwise the margin is the adaptive similarity gap between the sampled
    positive and negative.  A row whose off-diagonal entries are all exactly
    zero is the self-only baseline: the anchor doubles as its own positive
    and the negative is uniform over the other classes.
    """
    n = sim.n
    row = sim.normalized[anchor]
    if not np.all(np.isfinite(row)):
        raise ValueError("similarity row contains non-finite values")
    others = [k for k in range(n) if k != anchor]
    if not others:
        raise ValueError("need at least two classes")

    if all(row[k] == 0.0 for k in others):
        pos = anchor
        neg = others[int(rng.integers(len(others)))]
    elif policy.mode == "top-pool":
        pos_size, neg_size = policy.resolved_pools(n)
        order = _candidate_order(row, anchor)
        pos_pool = order[:pos_size]
        neg_pool = order[len(order) - neg_size:]
        pos = pos_pool[int(rng.integers(len(pos_pool)))]
        neg = neg_pool[int(rng.integers(len(neg_pool)))]
    else:  # proportional
        weights = np.array([row[k] for k in others], dtype=float)
        weights = np.clip(weights, 0.0, None)
        if weights.sum() <= 0:
            weights = np.ones_like(weights)
        pos = others[int(rng.choice(len(others), p=weights / weights.sum()))]
        rest = [k for k in others if k != pos]
        anti = np.array([1.0 - row[k] for k in rest], dtype=float)
        anti = np.clip(anti, 0.0, None)
        if anti.sum() <= 0:
            anti = np.ones_like(anti)
        neg = rest[int(rng.choice(len(rest), p=anti / anti.sum()))]
        if row[neg] > row[pos]:
            pos, neg = neg, pos

    margin = float(fixed_margin) if fixed_margin is not None else float(row[pos] - row[neg])
    return TripletSample(anchor=anchor, positive=pos, negative=neg, margin=margin)


def _unit_difference(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    diff = a - b
    dist = float(np.linalg.norm(diff))
    if dist < DISTANCE_FLOOR:
        return dist, np.zeros_like(diff)
    return dist, diff / dist


def triplet_loss(projected: np.ndarray, triplet: TripletSample) -> LossValue:
    """Hinge loss of one triplet with gradients for the whole projection matrix.

    The gradient block is keyed ``"projected"`` and is zero everywhere except
    the anchor, positive, and negative rows; it is zero entirely when the
    hinge is inactive.
    """
    w = np.asarray(projected, dtype=float)
    if w.ndim != 2:
        raise ValueError("projected embeddings must be a 2-d array")
    if not np.all(np.isfinite(w)):
        raise ValueError("projected embeddings contain non-finite values")
    grad = np.zeros_like(w)
    j, h, l = triplet.anchor, triplet.positive, triplet.negative
    d_pos, unit_pos = _unit_difference(w[j], w[h])
    d_neg, unit_neg = _unit_difference(w[j], w[l])
    value = d_pos - d_neg + triplet.margin
    if value <= 0.0:
        return LossValue(0.0, {"projected": grad})
    grad[j] += unit_pos - unit_neg
    grad[h] -= unit_pos
    grad[l] += unit_neg
    return LossValue(float(value), {"projected": grad})


def triplet_loss_total(
    projected: np.ndarray,
    sim: SimilarityMatrix,
    policy: SamplingPolicy,
    rng: np.random.Generator,
    margin_mode: str = "adaptive",
    fixed_margin: float = 0.2,
    anchors: list[int] | None = None,
) -> LossValue:
    """Sum over every class, seen and unseen, of its sampled triplet loss.

    Anchors are visited in ascending index order, ``triplets_per_class``
    draws each, all from the one ``rng`` stream, so a given seed reproduces
    the exact sample sequence.  Each anchor contributes the MEAN of its
    draws, so ``triplets_per_class`` reduces sampling variance without
    rescaling the loss.  ``anchors`` restricts the anchor set (an ablation
    hook); margins still come from the full similarity rows.
    """
    if margin_mode not in ("adaptive", "fixed"):
        raise ValueError(f"unknown margin mode {margin_mode!r}")
    w = np.asarray(projected, dtype=float)
    if w.shape[0] != sim.n:
        raise ValueError("projected row count does not match the similarity matrix")
    override = fixed_margin if margin_mode == "fixed" else None
    total = 0.0
    grad = np.zeros_like(w)
    anchor_list = list(range(sim.n)) if anchors is None else list(anchors)
    per_draw = 1.0 / policy.triplets_per_class
    for anchor in anchor_list:
        for _ in range(policy.triplets_per_class):
            triplet = sample_triplet(anchor, sim, policy, rng, fixed_margin=override)
            part = triplet_loss(w, triplet)
            total += per_draw * part.value
            grad += per_draw * part.gradients["projected"]
    return LossValue(float(total), {"projected": grad})


def direct_similarity_reg(projected: np.ndarray, sim: SimilarityMatrix) -> LossValue:
    """Mean squared gap between projected cosines and normalized similarities.

    The value averages (cos(w_j, w_k) - normalized[j, k])^2 over all ordered
    off-diagonal pairs, so it is comparable across class counts.
    """
    w = np.asarray(projected, dtype=float)
    n = w.shape[0]
    if n != sim.n:
        raise ValueError("projected row count does not match the similarity matrix")
    if n < 2:
        raise ValueError("need at least two classes")
    if not np.all(np.isfinite(w)):
        raise ValueError("projected embeddings contain non-finite values")
    norms = np.linalg.norm(w, axis=1)
    if np.any(norms < DISTANCE_FLOOR):
        raise ValueError("zero-norm projected embedding")
    unit = w / norms[:, None]
    cosines = unit @ unit.T
    residual = cosines - sim.normalized
    np.fill_diagonal(residual, 0.0)
    scale = 1.0 / (n * (n - 1))
    value = float(scale * np.sum(residual**2))
    # d value / d cosines, then back through the row normalization.
    dcos = 2.0 * scale * residual
    unit_grad = (dcos + dcos.T) @ unit
    inward = np.sum(unit_grad * unit, axis=1, keepdims=True)
    grad = (unit_grad - inward * unit) / norms[:, None]
    return LossValue(value, {"projected": grad})
