"""Synthetic detection scenarios with a planted similarity structure.

The generator controls the one thing the regularizer is supposed to exploit:
visual relatedness that description embeddings know about and semantic
embeddings do not.  It works backwards from a target similarity matrix:

1. project the target onto the positive semidefinite cone (clip negative
   eigenvalues), factor it, embed the factor rows in feature space, rotate
   randomly, and renormalize rows: these are the per-class prototypes, whose
   pairwise cosines reproduce the target;
2. plant description embeddings from the same target (separate rotation), so
   their cosine structure matches the prototypes';
3. draw semantic embeddings at random, so they are uncorrelated with the
   prototype geometry.

The default target pairs each unseen class with one seen sibling at a high
cosine; remaining class pairs are only incidentally similar.

Region features are prototype plus isotropic Gaussian noise whose expected
norm is ``noise_sigma`` (per-coordinate deviation noise_sigma/sqrt(dim)).
Background features live in the orthogonal complement of the prototype span.
Boxes sit in an 800x800 space; each region's proposal box is its ground
truth jittered by ``box_jitter``.  Unseen classes appear only in the test
partition, and only on images that hold no seen-class ground truth, so the
strict zero-shot protocol has images to evaluate.

Everything is drawn from one seeded stream in a documented order, so a seed
pins every file byte.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .catalog import (
    ClassCatalog,
    ClassSplit,
    EmbeddingSet,
    build_catalog,
    load_embeddings,
    load_split,
    save_embeddings,
    save_split,
)
from .regions import (
    BACKGROUND_LABEL,
    GroundTruthBox,
    RegionSample,
    save_ground_truth,
    save_regions,
)
from .similarity import cosine_matrix

__all__ = [
    "ScenarioConfig",
    "SimulatedDataset",
    "plant_prototypes",
    "planted_similarity",
    "generate_dataset",
    "write_dataset",
    "load_catalog_dir",
    "premise_correlations",
    "DATASET_FILES",
]

IMAGE_EXTENT = 800.0
EMBED_DIM_FLOOR = 32
APPEARANCE_DIM = 16
SIBLING_SIMILARITY = 0.85

DATASET_FILES = (
    "semantic.emb",
    "descriptions.emb",
    "split.txt",
    "train_regions.tsv",
    "train_gt.tsv",
    "test_regions.tsv",
    "test_gt.tsv",
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_seen: int = 16
    n_unseen: int = 4
    feature_dim: int = 64
    regions_per_class: int = 200
    noise_sigma: float = 0.3
    background_fraction: float = 0.25
    box_jitter: float = 0.1
    images: int = 40
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_seen < 1 or self.n_unseen < 1:
            raise ValueError("need at least one seen and one unseen class")
        if self.feature_dim < self.n_seen + self.n_unseen:
            raise ValueError("feature_dim must be at least the class count")
        if self.regions_per_class < 1 or self.images < 1:
            raise ValueError("regions_per_class and images must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.background_fraction < 1.0:
            raise ValueError("background_fraction must lie in [0, 1)")
        if not 0.0 <= self.box_jitter < 0.5:
            raise ValueError("box_jitter must lie in [0, 0.5)")

    @property
    def n_classes(self) -> int:
        return self.n_seen + self.n_unseen


@dataclass
class SimulatedDataset:
    scenario: ScenarioConfig
    catalog: ClassCatalog
    prototypes: np.ndarray
    description_sim: np.ndarray
    train_regions: list[RegionSample] = field(default_factory=list)
    train_gt: list[GroundTruthBox] = field(default_factory=list)
    test_regions: list[RegionSample] = field(default_factory=list)
    test_gt: list[GroundTruthBox] = field(default_factory=list)


def plant_prototypes(target_sim: np.ndarray, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm vectors whose pairwise cosines approximate ``target_sim``.

    The target is projected onto the PSD cone by clipping negative
    eigenvalues, factored, embedded in ``dim`` coordinates, and randomly
    rotated.  Rows are renormalized, so with a PSD unit-diagonal target the
    cosines are recovered up to floating-point error.
    """
    a = np.asarray(target_sim, dtype=float)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("target similarity must be square")
    if dim < n:
        raise ValueError(f"dim {dim} is too small to plant {n} classes")
    if not np.allclose(a, a.T, atol=1e-9):
        raise ValueError("target similarity must be symmetric")
    if not np.allclose(np.diagonal(a), 1.0, atol=1e-9):
        raise ValueError("target similarity must have a unit diagonal")
    eigvals, eigvecs = np.linalg.eigh((a + a.T) / 2.0)
    factor = eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    planted = np.zeros((n, dim))
    planted[:, :n] = factor
    rotation, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    planted = planted @ rotation
    norms = np.linalg.norm(planted, axis=1)
    if np.any(norms < 1e-9):
        raise ValueError("target similarity collapses a class to the zero vector")
    return planted / norms[:, None]


def planted_similarity(
    n_seen: int,
    n_unseen: int,
    rng: np.random.Generator,
    sibling_sim: float = SIBLING_SIMILARITY,
) -> np.ndarray:
    """A PSD unit-diagonal target pairing unseen class i with seen class i.

    Classes get random unit appearance vectors; each unseen one is a rotation
    of its sibling's at an exact cosine of ``sibling_sim``.  The returned
    matrix is the Gram matrix of those vectors, so it is PSD by construction.
    """
    if n_unseen > n_seen:
        raise ValueError("the default pairing needs n_seen >= n_unseen")
    if not 0.0 < sibling_sim < 1.0:
        raise ValueError("sibling_sim must lie in (0, 1)")
    seen = rng.normal(size=(n_seen, APPEARANCE_DIM))
    seen /= np.linalg.norm(seen, axis=1, keepdims=True)
    rows = [seen]
    unseen = np.zeros((n_unseen, APPEARANCE_DIM))
    for i in range(n_unseen):
        base = seen[i]
        ortho = rng.normal(size=APPEARANCE_DIM)
        ortho -= (ortho @ base) * base
        ortho /= np.linalg.norm(ortho)
        unseen[i] = sibling_sim * base + np.sqrt(1.0 - sibling_sim**2) * ortho
    rows.append(unseen)
    appearance = np.vstack(rows)
    sim = appearance @ appearance.T
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _random_box(rng: np.random.Generator) -> tuple[float, float, float, float]:
    cx, cy = rng.uniform(100.0, 700.0, size=2)
    w, h = rng.uniform(40.0, 160.0, size=2)
    return (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _jittered(box, jitter: float, rng: np.random.Generator):
    x1, y1, x2, y2 = box
    w = x2 - x1
    h = y2 - y1
    d = rng.uniform(-jitter, jitter, size=4)
    return (x1 + d[0] * w, y1 + d[1] * h, x2 + d[2] * w, y2 + d[3] * h)


def generate_dataset(
    scenario: ScenarioConfig, description_sim: np.ndarray | None = None
) -> SimulatedDataset:
    """Build catalog, prototypes, and both region partitions from a seed.

    ``description_sim`` overrides the default sibling-pair target; it must be
    symmetric with a unit diagonal over all classes, seen first.
    """
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n_classes
    if description_sim is None:
        description_sim = planted_similarity(scenario.n_seen, scenario.n_unseen, rng)
    else:
        description_sim = np.asarray(description_sim, dtype=float)
        if description_sim.shape != (n, n):
            raise ValueError(f"description_sim must be {n}x{n}")

    prototypes = plant_prototypes(description_sim, scenario.feature_dim, rng)
    embed_dim = max(EMBED_DIM_FLOOR, n)
    description_vectors = plant_prototypes(description_sim, embed_dim, rng)
    semantic_vectors = rng.normal(size=(n, embed_dim))
    semantic_vectors /= np.linalg.norm(semantic_vectors, axis=1, keepdims=True)

    names = [f"s{i:02d}" for i in range(scenario.n_seen)]
    names += [f"u{i:02d}" for i in range(scenario.n_unseen)]
    split = ClassSplit(tuple(names[: scenario.n_seen]), tuple(names[scenario.n_seen :]))
    catalog = build_catalog(
        EmbeddingSet(list(names), semantic_vectors),
        EmbeddingSet(list(names), description_vectors),
        split,
    )

    sigma_coord = scenario.noise_sigma / np.sqrt(scenario.feature_dim)
    # Background features live in the orthogonal complement of the prototype
    # span; feature_dim > n_classes guarantees the complement is non-empty.
    _, _, vh = np.linalg.svd(prototypes, full_matrices=True)
    complement = vh[n:]
    if scenario.background_fraction > 0 and complement.shape[0] == 0:
        raise ValueError("background regions need feature_dim > the class count")

    def object_region(image_id: str, class_index: int, label: str):
        gt_box = _random_box(rng)
        proposal = _jittered(gt_box, scenario.box_jitter, rng)
        feature = prototypes[class_index] + sigma_coord * rng.normal(size=scenario.feature_dim)
        return (
            RegionSample(image_id, proposal, label, feature),
            GroundTruthBox(image_id, gt_box, label),
        )

    def background_region(image_id: str) -> RegionSample:
        box = _random_box(rng)
        direction = _unit(rng.normal(size=complement.shape[0]) @ complement)
        feature = direction + sigma_coord * rng.normal(size=scenario.feature_dim)
        return RegionSample(image_id, box, BACKGROUND_LABEL, feature)

    def background_count(object_count: int) -> int:
        share = scenario.background_fraction
        return int(round(object_count * share / (1.0 - share)))

    ds = SimulatedDataset(
        scenario=scenario,
        catalog=catalog,
        prototypes=prototypes,
        description_sim=description_sim,
    )

    # Training partition: seen classes only.
    train_images = [f"train_{i:04d}" for i in range(scenario.images)]
    counter = 0
    for class_index in range(scenario.n_seen):
        for _ in range(scenario.regions_per_class):
            image_id = train_images[counter % len(train_images)]
            counter += 1
            region, gt = object_region(image_id, class_index, names[class_index])
            ds.train_regions.append(region)
            ds.train_gt.append(gt)
    for i in range(background_count(counter)):
        ds.train_regions.append(background_region(train_images[i % len(train_images)]))

    # Test partition: seen classes on one image pool, unseen classes on
    # another, so some test images carry only unseen ground truth.
    per_class_test = max(1, scenario.regions_per_class // 4)
    n_unseen_images = max(1, scenario.images // 2)
    unseen_images = [f"test_u_{i:04d}" for i in range(n_unseen_images)]
    seen_images = [f"test_s_{i:04d}" for i in range(max(1, scenario.images - n_unseen_images))]
    counter_seen = 0
    counter_unseen = 0
    for class_index in range(n):
        label = names[class_index]
        for _ in range(per_class_test):
            if class_index < scenario.n_seen:
                image_id = seen_images[counter_seen % len(seen_images)]
                counter_seen += 1
            else:
                image_id = unseen_images[counter_unseen % len(unseen_images)]
                counter_unseen += 1
            region, gt = object_region(image_id, class_index, label)
            ds.test_regions.append(region)
            ds.test_gt.append(gt)
    all_test_images = seen_images + unseen_images
    for i in range(background_count(counter_seen + counter_unseen)):
        ds.test_regions.append(background_region(all_test_images[i % len(all_test_images)]))

    return ds


def write_dataset(ds: SimulatedDataset, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_embeddings(ds.catalog.semantic, os.path.join(out_dir, "semantic.emb"))
    save_embeddings(ds.catalog.descriptions, os.path.join(out_dir, "descriptions.emb"))
    save_split(ds.catalog.split, os.path.join(out_dir, "split.txt"))
    save_regions(ds.train_regions, os.path.join(out_dir, "train_regions.tsv"))
    save_ground_truth(ds.train_gt, os.path.join(out_dir, "train_gt.tsv"))
    save_regions(ds.test_regions, os.path.join(out_dir, "test_regions.tsv"))
    save_ground_truth(ds.test_gt, os.path.join(out_dir, "test_gt.tsv"))


def load_catalog_dir(path) -> ClassCatalog:
    """Load the catalog files written by ``write_dataset``."""
    semantic = load_embeddings(os.path.join(path, "semantic.emb"))
    descriptions = load_embeddings(os.path.join(path, "descriptions.emb"))
    split = load_split(os.path.join(path, "split.txt"))
    return build_catalog(semantic, descriptions, split)


def premise_correlations(ds: SimulatedDataset) -> tuple[float, float]:
    """Correlation of (semantic, description) cosines with prototype cosines.

    Computed over off-diagonal pairs.  The scenario premise is that the
    first is weak and the second strong.
    """
    proto = cosine_matrix(ds.prototypes)
    semantic = cosine_matrix(ds.catalog.semantic.vectors)
    descriptions = cosine_matrix(ds.catalog.descriptions.vectors)
    upper = np.triu_indices(proto.shape[0], k=1)
    sem_corr = float(np.corrcoef(semantic[upper], proto[upper])[0, 1])
    desc_corr = float(np.corrcoef(descriptions[upper], proto[upper])[0, 1])
    return sem_corr, desc_corr
