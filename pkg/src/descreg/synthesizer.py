"""Noise-conditioned feature synthesis for unseen classes.

A two-layer generator maps (class embedding, noise) to a region feature.
Training matches first moments: for every seen class, the mean synthesized
feature should land on the class's mean real feature.  The same
similarity-aware triplet loss used by the alignment trainer is applied to
the per-class mean synthesized features of all classes, seen and unseen,
pulling unseen means toward the means of their visually similar seen
neighbors.  A scaled-cosine classifier trained on synthesized samples then
covers classes never observed in training data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentModel, ProjectionHead, _LineReader, classification_loss
from .catalog import ClassCatalog, ClassSplit
from .errors import FormatError
from .optim import MomentumSGD
from .regions import RegionSample
from .regularizer import LossValue, SamplingPolicy, triplet_loss_total
from .similarity import SimilarityMatrix
from .textio import format_vector, parse_vector, require_header, split_lines

__all__ = [
    "Synthesizer",
    "synthesize",
    "synthesizer_objective",
    "train_synthesizer",
    "train_classifier_from_synth",
    "real_class_means",
    "parse_synthesizer",
    "serialize_synthesizer",
    "load_synthesizer",
    "save_synthesizer",
]

SYNTH_HEADER = "descreg-synth v1"


@dataclass
class Synthesizer:
    """Generator network plus the noise dimensionality it expects."""

    net: ProjectionHead
    noise_dim: int

    def __post_init__(self) -> None:
        if self.net.depth != 2:
            raise ValueError("the generator is a 2-layer map")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be positive")
        if self.net.in_dim <= self.noise_dim:
            raise ValueError("generator input must include the class embedding")

    @property
    def embed_dim(self) -> int:
        return self.net.in_dim - self.noise_dim

    @property
    def feature_dim(self) -> int:
        return self.net.out_dim

    @classmethod
    def create(
        cls,
        embed_dim: int,
        feature_dim: int,
        noise_dim: int = 16,
        hidden: int = 64,
        rng: np.random.Generator | None = None,
    ) -> "Synthesizer":
        net = ProjectionHead.create(
            in_dim=embed_dim + noise_dim, out_dim=feature_dim, depth=2, hidden=hidden, rng=rng
        )
        return cls(net=net, noise_dim=noise_dim)


def synthesize(synth: Synthesizer, class_embedding: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Features for one class embedding under one or more noise draws.

    Deterministic given weights, embedding, and noise: same inputs, same
    features.
    """
    emb = np.asarray(class_embedding, dtype=float)
    z = np.asarray(noise, dtype=float)
    if emb.ndim != 1 or emb.shape[0] != synth.embed_dim:
        raise ValueError(f"expected a class embedding of dim {synth.embed_dim}")
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    if z.shape[1] != synth.noise_dim:
        raise ValueError(f"expected noise of dim {synth.noise_dim}")
    batch = np.concatenate([np.tile(emb, (z.shape[0], 1)), z], axis=1)
    out = synth.net.apply(batch)
    return out[0] if squeeze else out


def _mean_synthesized(
    synth: Synthesizer, class_embeddings: np.ndarray, noise: np.ndarray
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Per-class mean synthesized features with the forward cache."""
    n, draws, _ = noise.shape
    tiled = np.repeat(class_embeddings, draws, axis=0)
    flat = np.concatenate([tiled, noise.reshape(n * draws, -1)], axis=1)
    out, cache = synth.net.apply_cached(flat)
    means = out.reshape(n, draws, -1).mean(axis=1)
    return means, out, cache


def synthesizer_objective(
    synth: Synthesizer,
    class_embeddings: np.ndarray,
    real_means: np.ndarray,
    sim: SimilarityMatrix,
    policy: SamplingPolicy,
    lam: float,
    noise: np.ndarray,
    triplet_rng,
    margin_mode: str = "adaptive",
    fixed_margin: float = 0.2,
) -> LossValue:
    """Moment-matching loss plus ``lam`` times the triplet term.

    The moment part is the mean over seen classes of the squared distance
    between each class's mean synthesized feature and its real feature mean,
    so the value and its gradients do not grow with the class count.
    ``real_means`` has one row per seen class (the first rows of
    ``class_embeddings``); ``noise`` is (n_classes, draws, noise_dim) and is
    treated as fixed input, so the value is a deterministic function of the
    generator parameters when ``triplet_rng`` is an integer seed.  Gradient
    blocks are ``gen.w0``, ``gen.b0``, ``gen.w1``, ``gen.b1``.
    """
    class_embeddings = np.asarray(class_embeddings, dtype=float)
    real_means = np.asarray(real_means, dtype=float)
    noise = np.asarray(noise, dtype=float)
    n = class_embeddings.shape[0]
    n_seen = real_means.shape[0]
    if n_seen > n:
        raise ValueError("more real means than classes")
    if noise.ndim != 3 or noise.shape[0] != n or noise.shape[2] != synth.noise_dim:
        raise ValueError("noise must be (n_classes, draws, noise_dim)")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    rng = (
        np.random.default_rng(int(triplet_rng))
        if isinstance(triplet_rng, (int, np.integer))
        else triplet_rng
    )

    draws = noise.shape[1]
    means, _, cache = _mean_synthesized(synth, class_embeddings, noise)
    residual = means[:n_seen] - real_means
    moment = float(np.sum(residual**2)) / n_seen
    dmeans = np.zeros_like(means)
    dmeans[:n_seen] = (2.0 / n_seen) * residual

    value = moment
    if lam > 0.0:
        trip = triplet_loss_total(means, sim, policy, rng, margin_mode, fixed_margin)
        value += lam * trip.value
        dmeans += lam * trip.gradients["projected"]

    dout = np.repeat(dmeans / draws, draws, axis=0)
    net_grads, _ = synth.net.backward(dout, cache)
    return LossValue(value, {f"gen.{k}": v for k, v in net_grads.items()})


def real_class_means(regions: list[RegionSample], split: ClassSplit) -> np.ndarray:
    """Mean real feature per seen class; every seen class needs regions."""
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for region in regions:
        if region.is_background or not split.is_seen(region.label):
            continue
        if region.label in sums:
            sums[region.label] = sums[region.label] + region.feature
            counts[region.label] += 1
        else:
            sums[region.label] = region.feature.astype(float).copy()
            counts[region.label] = 1
    missing = [name for name in split.seen if name not in sums]
    if missing:
        raise ValueError(f"no regions for seen classes: {missing}")
    return np.vstack([sums[name] / counts[name] for name in split.seen])


def train_synthesizer(
    catalog: ClassCatalog,
    regions: list[RegionSample],
    sim: SimilarityMatrix,
    config,
    rng: np.random.Generator | None = None,
) -> Synthesizer:
    """Fit the generator by SGD on the moment plus triplet objective.

    Noise is redrawn and triplets are resampled every step; both come from
    seeded streams, so training is reproducible bit for bit.
    """
    rng = np.random.default_rng(config["seed"]) if rng is None else rng
    means = real_class_means(regions, catalog.split)
    class_embeddings = catalog.source_matrix(config["embedding_source"])
    synth = Synthesizer.create(
        embed_dim=class_embeddings.shape[1],
        feature_dim=means.shape[1],
        noise_dim=config["synth.noise_dim"],
        hidden=config["synth.hidden"],
        rng=rng,
    )
    params = {
        "gen.w0": synth.net.weights[0],
        "gen.b0": synth.net.biases[0],
        "gen.w1": synth.net.weights[1],
        "gen.b1": synth.net.biases[1],
    }
    optimizer = MomentumSGD(params, lr=config["synth.lr"], momentum=config["momentum"])
    policy = SamplingPolicy(
        mode=config["reg.sampling"],
        pos_pool=config["reg.pos_pool"],
        neg_pool=config["reg.neg_pool"],
        triplets_per_class=config["reg.triplets_per_class"],
    )
    margin_mode = "fixed" if config["reg.mode"] == "fixed" else "adaptive"
    lam = config["reg.lambda"]
    reg_rng = np.random.default_rng(config["reg.seed"])
    n = catalog.n_classes
    draws = config["synth.noise_batch"]
    for _ in range(config["synth.epochs"]):
        noise = rng.normal(size=(n, draws, synth.noise_dim))
        loss = synthesizer_objective(
            synth,
            class_embeddings,
            means,
            sim,
            policy,
            lam,
            noise,
            reg_rng,
            margin_mode=margin_mode,
            fixed_margin=config["reg.fixed_margin"],
        )
        optimizer.step(loss.gradients)
    return synth


def train_classifier_from_synth(
    synth: Synthesizer,
    catalog: ClassCatalog,
    config,
    rng: np.random.Generator | None = None,
    background_features: np.ndarray | None = None,
) -> AlignmentModel:
    """Train a scaled-cosine classifier on synthesized features.

    ``synth.samples_per_class`` features are synthesized for every class,
    seen and unseen.  The classifier's prototypes are free parameters behind
    an identity head, so the result scores, saves, and evaluates exactly like
    an alignment model (source tag ``prototype``).  Real background features
    may be supplied to train the background column; otherwise the background
    vector keeps its small random initialization.
    """
    rng = np.random.default_rng(config["seed"]) if rng is None else rng
    n = catalog.n_classes
    feature_dim = synth.feature_dim
    k = config["synth.samples_per_class"]
    class_embeddings = catalog.source_matrix(config["embedding_source"])

    blocks = []
    labels = []
    for j in range(n):
        noise = rng.normal(size=(k, synth.noise_dim))
        blocks.append(synthesize(synth, class_embeddings[j], noise))
        labels.extend([j] * k)
    if background_features is not None and len(background_features):
        bg = np.asarray(background_features, dtype=float)
        blocks.append(bg)
        labels.extend([n] * bg.shape[0])
    features = np.vstack(blocks)
    label_array = np.array(labels, dtype=int)

    # All classes count as seen while fitting prototypes; the real split is
    # restored on the returned model.
    train_split = ClassSplit(catalog.class_names, ())
    prototypes = rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(n, feature_dim))
    background = rng.normal(0.0, 0.01, size=feature_dim)
    identity = ProjectionHead([np.eye(feature_dim)], [np.zeros(feature_dim)])
    trainer_model = AlignmentModel(
        head=identity,
        background=background,
        score_scale=config["score_scale"],
        split=train_split,
        source_embeddings=prototypes,
        embedding_source="prototype",
    )
    params = {"prototypes": trainer_model.source_embeddings, "background": trainer_model.background}
    optimizer = MomentumSGD(params, lr=config["cls.lr"], momentum=config["momentum"])
    batch = config["cls.batch"]
    total = features.shape[0]
    for _ in range(config["cls.epochs"]):
        order = rng.permutation(total)
        for start in range(0, total, batch):
            idx = order[start : start + batch]
            loss = classification_loss(trainer_model, features[idx], label_array[idx])
            optimizer.step(
                {
                    "prototypes": loss.gradients["projected"],
                    "background": loss.gradients["background"],
                }
            )
    return AlignmentModel(
        head=identity,
        background=trainer_model.background,
        score_scale=config["score_scale"],
        split=catalog.split,
        source_embeddings=trainer_model.source_embeddings,
        embedding_source="prototype",
    )


def serialize_synthesizer(synth: Synthesizer) -> str:
    lines = [SYNTH_HEADER, f"noise_dim {synth.noise_dim}", f"head {synth.net.depth}"]
    for w, b in zip(synth.net.weights, synth.net.biases):
        lines.append(f"layer {w.shape[0]} {w.shape[1]}")
        lines.extend(format_vector(row) for row in w)
        lines.append(f"bias {format_vector(b)}")
    return "\n".join(lines) + "\n"


def parse_synthesizer(text: str) -> Synthesizer:
    lines = split_lines(text)
    require_header(lines, SYNTH_HEADER)
    reader = _LineReader(lines)
    reader.next("header")

    def expect(prefix: str) -> list[str]:
        lineno = reader.lineno
        line = reader.next(f"'{prefix} ...'")
        parts = line.split(" ")
        if parts[0] != prefix:
            raise FormatError(f"line {lineno}: expected '{prefix} ...', got {line!r}")
        return parts[1:]

    noise_parts = expect("noise_dim")
    if len(noise_parts) != 1 or not noise_parts[0].isdigit() or int(noise_parts[0]) < 1:
        raise FormatError(f"line {reader.lineno - 1}: expected 'noise_dim <positive integer>'")
    noise_dim = int(noise_parts[0])
    depth_parts = expect("head")
    if depth_parts != ["2"]:
        raise FormatError(f"line {reader.lineno - 1}: the generator head has depth 2")
    weights = []
    biases = []
    for _ in range(2):
        dims = expect("layer")
        if len(dims) != 2 or not all(c.isdigit() for c in dims):
            raise FormatError(f"line {reader.lineno - 1}: expected 'layer <out> <in>'")
        out_dim, in_dim = int(dims[0]), int(dims[1])
        rows = [
            parse_vector(reader.next("weight row"), reader.lineno - 1, in_dim)
            for _ in range(out_dim)
        ]
        weights.append(np.vstack(rows))
        bias_parts = expect("bias")
        biases.append(parse_vector(" ".join(bias_parts), reader.lineno - 1, out_dim))
    if reader.pos != len(reader.lines):
        raise FormatError(f"line {reader.lineno}: trailing content after the generator")
    return Synthesizer(net=ProjectionHead(weights, biases), noise_dim=noise_dim)


def load_synthesizer(path) -> Synthesizer:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_synthesizer(fh.read())


def save_synthesizer(synth: Synthesizer, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_synthesizer(synth))
