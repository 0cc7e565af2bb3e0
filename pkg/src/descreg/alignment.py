"""Projection head, scaled-cosine classification, and its trainer.

Class embeddings are projected into the region-feature space by a small
multilayer perceptron (depth 1 to 3, ReLU between layers, none after the
last).  A region is scored against class j as score_scale times the cosine
between the projected class embedding and the region feature; a learnable
background vector is scored the same way and occupies the final column.

Training minimizes mean cross entropy over seen classes plus background,
optionally combined with one of the similarity regularizers.  The background
vector receives gradient only from the cross entropy term and never enters a
regularizer.  Optimization is minibatch SGD with momentum; with a fixed seed
the whole procedure is bit-for-bit reproducible.

Three scoring settings select the class set: ``train`` (seen plus
background), ``zsd`` (unseen plus background), ``gzsd`` (all classes plus
background).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import ClassCatalog, ClassSplit
from .detmetrics import Detection
from .errors import FormatError
from .regions import BACKGROUND_LABEL, RegionSample
from .regularizer import (
    DISTANCE_FLOOR,
    LossValue,
    SamplingPolicy,
    direct_similarity_reg,
    triplet_loss_total,
)
from .similarity import SimilarityMatrix, build_similarity, diagonal_matrix
from .optim import MomentumSGD
from .textio import format_real, format_vector, parse_real, parse_vector, require_header, split_lines

__all__ = [
    "SETTINGS",
    "ProjectionHead",
    "AlignmentModel",
    "EpochRecord",
    "TrainHistory",
    "classification_scores",
    "classification_loss",
    "train_alignment",
    "infer_detections",
    "parse_model",
    "serialize_model",
    "load_model",
    "save_model",
]

SETTINGS = ("train", "zsd", "gzsd")

MODEL_HEADER = "descreg-model v1"

BACKGROUND_INIT_SIGMA = 0.01


@dataclass
class ProjectionHead:
    """A 1-3 layer perceptron; weight matrices are stored (out, in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if not 1 <= len(self.weights) <= 3:
            raise ValueError("head depth must be 1, 2, or 3")
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ValueError("layer shapes are inconsistent")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return int(self.weights[0].shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.weights[-1].shape[0])

    @classmethod
    def create(
        cls,
        in_dim: int,
        out_dim: int,
        depth: int = 1,
        hidden: int = 128,
        rng: np.random.Generator | None = None,
    ) -> "ProjectionHead":
        if depth not in (1, 2, 3):
            raise ValueError("head depth must be 1, 2, or 3")
        rng = np.random.default_rng(0) if rng is None else rng
        dims = [in_dim] + [hidden] * (depth - 1) + [out_dim]
        weights = []
        biases = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def apply(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.apply_cached(x)
        return out

    def apply_cached(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Forward pass keeping the per-layer inputs and preactivations."""
        a = np.asarray(x, dtype=float)
        squeeze = a.ndim == 1
        if squeeze:
            a = a[None, :]
        if a.shape[1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {a.shape[1]}")
        inputs = []
        preacts = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w.T + b
            preacts.append(z)
            a = np.maximum(z, 0.0) if i < self.depth - 1 else z
        out = a[0] if squeeze else a
        return out, {"inputs": inputs, "preacts": preacts}

    def backward(self, grad_out: np.ndarray, cache: dict) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Backpropagate an output gradient; returns per-layer grads and dx."""
        grad = np.asarray(grad_out, dtype=float)
        if grad.ndim == 1:
            grad = grad[None, :]
        grads: dict[str, np.ndarray] = {}
        for i in range(self.depth - 1, -1, -1):
            if i < self.depth - 1:
                grad = grad * (cache["preacts"][i] > 0.0)
            grads[f"w{i}"] = grad.T @ cache["inputs"][i]
            grads[f"b{i}"] = grad.sum(axis=0)
            grad = grad @ self.weights[i]
        return grads, grad


@dataclass
class AlignmentModel:
    """Projection head plus everything needed to score regions.

    ``source_embeddings`` is the class embedding matrix the head projects,
    in catalog order; ``embedding_source`` records where it came from
    (``semantic``, ``description``, or ``prototype`` for classifier heads
    trained on synthesized features, where the head is the identity).
    """

    head: ProjectionHead
    background: np.ndarray
    score_scale: float
    split: ClassSplit
    source_embeddings: np.ndarray
    embedding_source: str = "semantic"

    def __post_init__(self) -> None:
        self.background = np.asarray(self.background, dtype=float)
        self.source_embeddings = np.asarray(self.source_embeddings, dtype=float)
        if self.source_embeddings.shape[0] != self.split.n_classes:
            raise ValueError("one embedding row per split class is required")
        if self.source_embeddings.shape[1] != self.head.in_dim:
            raise ValueError("embedding dim does not match the head input dim")
        if self.background.shape != (self.head.out_dim,):
            raise ValueError("background vector must live in the output space")
        if self.score_scale <= 0:
            raise ValueError("score scale must be positive")

    def projected(self) -> np.ndarray:
        return self.head.apply(self.source_embeddings)

    def setting_indices(self, setting: str) -> np.ndarray:
        if setting == "train":
            return np.arange(self.split.n_seen)
        if setting == "zsd":
            return np.arange(self.split.n_seen, self.split.n_classes)
        if setting == "gzsd":
            return np.arange(self.split.n_classes)
        raise ValueError(f"unknown setting {setting!r}")

    def setting_labels(self, setting: str) -> list[str]:
        return [self.split.classes[i] for i in self.setting_indices(setting)]


def _unit_rows(matrix: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms < DISTANCE_FLOOR):
        raise ValueError(f"zero-norm {what}")
    return matrix / norms[:, None]


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classification_scores(
    model: AlignmentModel, features: np.ndarray, setting: str
) -> np.ndarray:
    """Scaled cosine scores over the setting's classes plus background.

    The background column is last.  Accepts a single feature vector or a
    batch of rows.
    """
    feats = np.asarray(features, dtype=float)
    squeeze = feats.ndim == 1
    if squeeze:
        feats = feats[None, :]
    if feats.shape[1] != model.head.out_dim:
        raise ValueError(f"expected feature dim {model.head.out_dim}, got {feats.shape[1]}")
    rows = model.setting_indices(setting)
    projected = model.projected()[rows]
    unit_classes = _unit_rows(projected, "projected class embedding")
    unit_bg = _unit_rows(model.background[None, :], "background vector")
    unit_feats = _unit_rows(feats, "region feature")
    cos_classes = unit_feats @ unit_classes.T
    cos_bg = unit_feats @ unit_bg.T
    scores = model.score_scale * np.concatenate([cos_classes, cos_bg], axis=1)
    return scores[0] if squeeze else scores


def classification_loss(
    model: AlignmentModel, features: np.ndarray, labels: np.ndarray
) -> LossValue:
    """Mean cross entropy over seen classes plus background.

    Labels are integers in [0, n_seen]; n_seen denotes background.  The
    gradient blocks cover the head parameters (``head.w0`` ...), the
    ``background`` vector, and ``projected``, the gradient with respect to
    the full projected class matrix, whose unseen rows are exactly zero since
    unseen classes appear in no term of this loss.
    """
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[None, :]
    y = np.asarray(labels, dtype=int).ravel()
    if y.shape[0] != feats.shape[0]:
        raise ValueError("one label per feature row is required")
    n_seen = model.split.n_seen
    n_classes = model.split.n_classes
    if y.min(initial=0) < 0 or y.max(initial=0) > n_seen:
        raise ValueError(f"labels must lie in [0, {n_seen}] (background = {n_seen})")
    m = feats.shape[0]

    projected_full, cache = model.head.apply_cached(model.source_embeddings)
    seen = projected_full[:n_seen]
    seen_norms = np.linalg.norm(seen, axis=1)
    if np.any(seen_norms < DISTANCE_FLOOR):
        raise ValueError("zero-norm projected class embedding")
    bg_norm = float(np.linalg.norm(model.background))
    if bg_norm < DISTANCE_FLOOR:
        raise ValueError("zero-norm background vector")
    feat_norms = np.linalg.norm(feats, axis=1)
    if np.any(feat_norms < DISTANCE_FLOOR):
        raise ValueError("zero-norm region feature")

    unit_seen = seen / seen_norms[:, None]
    unit_bg = model.background / bg_norm
    unit_feats = feats / feat_norms[:, None]
    cos_seen = unit_feats @ unit_seen.T
    cos_bg = unit_feats @ unit_bg
    scores = model.score_scale * np.concatenate([cos_seen, cos_bg[:, None]], axis=1)
    probs = _softmax(scores)
    picked = probs[np.arange(m), y]
    value = float(-np.mean(np.log(np.clip(picked, 1e-300, None))))

    dscores = probs.copy()
    dscores[np.arange(m), y] -= 1.0
    dscores /= m
    dcos_seen = model.score_scale * dscores[:, :n_seen]
    dcos_bg = model.score_scale * dscores[:, n_seen]

    # d cos(w, v) / d w = (v_hat - cos * w_hat) / |w|
    lever = dcos_seen.T @ unit_feats
    inward = np.sum(dcos_seen * cos_seen, axis=0)
    dseen = (lever - inward[:, None] * unit_seen) / seen_norms[:, None]
    dprojected = np.zeros_like(projected_full)
    dprojected[:n_seen] = dseen
    dbackground = (dcos_bg @ unit_feats - float(dcos_bg @ cos_bg) * unit_bg) / bg_norm

    head_grads, _ = model.head.backward(dprojected, cache)
    gradients = {f"head.{k}": v for k, v in head_grads.items()}
    gradients["background"] = dbackground
    gradients["projected"] = dprojected
    return LossValue(value, gradients)


@dataclass
class EpochRecord:
    epoch: int
    cls_loss: float
    trip_loss: float
    seen_acc: float | None = None
    unseen_acc: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,cls_loss,trip_loss,seen_acc,unseen_acc"]
        for r in self.records:
            seen = "" if r.seen_acc is None else f"{r.seen_acc:.6f}"
            unseen = "" if r.unseen_acc is None else f"{r.unseen_acc:.6f}"
            lines.append(f"{r.epoch},{r.cls_loss:.6f},{r.trip_loss:.6f},{seen},{unseen}")
        return "\n".join(lines) + "\n"


def _region_arrays(
    regions: list[RegionSample], split: ClassSplit, seen_only: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Features and integer labels; background maps to n_seen (training) or
    n_classes (evaluation), unseen labels are rejected when ``seen_only``."""
    order = {name: i for i, name in enumerate(split.classes)}
    n_seen = split.n_seen
    bg_index = n_seen if seen_only else split.n_classes
    feats = []
    labels = []
    for region in regions:
        if region.is_background:
            labels.append(bg_index)
        elif region.label in order:
            index = order[region.label]
            if seen_only and index >= n_seen:
                raise ValueError(
                    f"training regions may not carry unseen class {region.label!r}"
                )
            labels.append(index)
        else:
            raise ValueError(f"region carries unknown class {region.label!r}")
        feats.append(region.feature)
    if not feats:
        raise ValueError("no regions given")
    return np.vstack(feats), np.array(labels, dtype=int)


def _held_out_accuracy(
    model: AlignmentModel, features: np.ndarray, labels: np.ndarray
) -> tuple[float | None, float | None]:
    """Argmax accuracy over all classes plus background, split by label group."""
    scores = classification_scores(model, features, "gzsd")
    predicted = np.argmax(scores, axis=1)
    n_seen = model.split.n_seen
    n_classes = model.split.n_classes
    seen_mask = labels < n_seen
    unseen_mask = (labels >= n_seen) & (labels < n_classes)
    seen_acc = float(np.mean(predicted[seen_mask] == labels[seen_mask])) if seen_mask.any() else None
    unseen_acc = (
        float(np.mean(predicted[unseen_mask] == labels[unseen_mask])) if unseen_mask.any() else None
    )
    return seen_acc, unseen_acc


def _regularizer_state(catalog: ClassCatalog, config) -> tuple[SimilarityMatrix | None, SamplingPolicy, str]:
    mode = config["reg.mode"]
    if mode == "off":
        return None, SamplingPolicy(), "adaptive"
    if mode == "diagonal":
        sim = diagonal_matrix(catalog.n_classes)
    else:
        sim = build_similarity(
            catalog.descriptions.vectors, config["reg.tau"], list(catalog.class_names)
        )
    policy = SamplingPolicy(
        mode=config["reg.sampling"],
        pos_pool=config["reg.pos_pool"],
        neg_pool=config["reg.neg_pool"],
        triplets_per_class=config["reg.triplets_per_class"],
    )
    margin_mode = "fixed" if mode == "fixed" else "adaptive"
    return sim, policy, margin_mode


def train_alignment(
    catalog: ClassCatalog,
    regions: list[RegionSample],
    config,
    val_regions: list[RegionSample] | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[AlignmentModel, TrainHistory]:
    """Train the projection head and background vector.

    ``regions`` must carry seen-class or background labels.  When
    ``val_regions`` are given (they may include unseen classes), each epoch
    records held-out seen and unseen accuracy under gzsd scoring.  The
    regularizer resamples triplets every optimization step from its own
    seeded stream (``reg.seed``), independent of the shuffling stream.
    """
    rng = np.random.default_rng(config["seed"]) if rng is None else rng
    features, labels = _region_arrays(regions, catalog.split, seen_only=True)
    val_arrays = (
        _region_arrays(val_regions, catalog.split, seen_only=False) if val_regions else None
    )
    source = config["embedding_source"]
    source_matrix = catalog.source_matrix(source)

    head = ProjectionHead.create(
        in_dim=source_matrix.shape[1],
        out_dim=features.shape[1],
        depth=config["head.depth"],
        hidden=config["head.hidden"],
        rng=rng,
    )
    background = rng.normal(0.0, BACKGROUND_INIT_SIGMA, size=features.shape[1])
    model = AlignmentModel(
        head=head,
        background=background,
        score_scale=config["score_scale"],
        split=catalog.split,
        source_embeddings=source_matrix.copy(),
        embedding_source=source,
    )

    params: dict[str, np.ndarray] = {"background": model.background}
    decay_keys = {"background"}
    for i in range(head.depth):
        params[f"head.w{i}"] = head.weights[i]
        params[f"head.b{i}"] = head.biases[i]
        decay_keys.add(f"head.w{i}")
    optimizer = MomentumSGD(
        params,
        lr=config["lr"],
        momentum=config["momentum"],
        weight_decay=config["weight_decay"],
        decay_keys=decay_keys,
    )

    mode = config["reg.mode"]
    sim, policy, margin_mode = _regularizer_state(catalog, config)
    reg_rng = np.random.default_rng(config["reg.seed"])
    lam = config["reg.lambda"]

    n_rows = features.shape[0]
    batch_size = config["batch"]
    history = TrainHistory()
    for epoch in range(config["epochs"]):
        order = rng.permutation(n_rows)
        cls_total = 0.0
        trip_values = []
        for start in range(0, n_rows, batch_size):
            rows = order[start : start + batch_size]
            loss = classification_loss(model, features[rows], labels[rows])
            grads = {k: v for k, v in loss.gradients.items() if k != "projected"}
            cls_total += loss.value * rows.size
            if sim is not None and lam > 0.0:
                projected, cache = head.apply_cached(model.source_embeddings)
                if mode == "direct_l2":
                    reg_loss = direct_similarity_reg(projected, sim)
                else:
                    reg_loss = triplet_loss_total(
                        projected,
                        sim,
                        policy,
                        reg_rng,
                        margin_mode=margin_mode,
                        fixed_margin=config["reg.fixed_margin"],
                    )
                head_grads, _ = head.backward(lam * reg_loss.gradients["projected"], cache)
                for key, grad in head_grads.items():
                    grads[f"head.{key}"] = grads[f"head.{key}"] + grad
                trip_values.append(reg_loss.value)
            else:
                trip_values.append(0.0)
            optimizer.step(grads)
        seen_acc = unseen_acc = None
        if val_arrays is not None:
            seen_acc, unseen_acc = _held_out_accuracy(model, *val_arrays)
        history.records.append(
            EpochRecord(
                epoch=epoch,
                cls_loss=cls_total / n_rows,
                trip_loss=float(np.mean(trip_values)),
                seen_acc=seen_acc,
                unseen_acc=unseen_acc,
            )
        )
    return model, history


def infer_detections(
    model: AlignmentModel, regions: list[RegionSample], setting: str
) -> list[Detection]:
    """One detection per region unless background wins the softmax.

    The detection score is the softmax probability of the winning class over
    the setting's class set plus background; region boxes pass through.
    """
    if setting not in ("zsd", "gzsd"):
        raise ValueError(f"unknown inference setting {setting!r}")
    if not regions:
        return []
    feats = np.vstack([r.feature for r in regions])
    scores = classification_scores(model, feats, setting)
    probs = _softmax(scores)
    names = model.setting_labels(setting)
    bg_column = len(names)
    out: list[Detection] = []
    for i, region in enumerate(regions):
        winner = int(np.argmax(probs[i]))
        if winner == bg_column:
            continue
        out.append(
            Detection(
                image_id=region.image_id,
                box=region.box,
                label=names[winner],
                score=float(probs[i, winner]),
            )
        )
    return out


def serialize_model(model: AlignmentModel) -> str:
    lines = [MODEL_HEADER]
    lines.append(f"source {model.embedding_source}")
    lines.append(f"scale {format_real(model.score_scale)}")
    lines.append(f"split {model.split.n_seen} {model.split.n_unseen}")
    lines.extend(f"seen {name}" for name in model.split.seen)
    lines.extend(f"unseen {name}" for name in model.split.unseen)
    emb = model.source_embeddings
    lines.append(f"embeddings {emb.shape[0]} {emb.shape[1]}")
    lines.extend(format_vector(row) for row in emb)
    lines.append(f"head {model.head.depth}")
    for w, b in zip(model.head.weights, model.head.biases):
        lines.append(f"layer {w.shape[0]} {w.shape[1]}")
        lines.extend(format_vector(row) for row in w)
        lines.append(f"bias {format_vector(b)}")
    lines.append(f"background {format_vector(model.background)}")
    return "\n".join(lines) + "\n"


class _LineReader:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.pos = 0

    @property
    def lineno(self) -> int:
        return self.pos + 1

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise FormatError(f"line {self.lineno}: unexpected end of file, expected {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line


def parse_model(text: str) -> AlignmentModel:
    lines = split_lines(text)
    require_header(lines, MODEL_HEADER)
    reader = _LineReader(lines)
    reader.next("header")

    def expect(prefix: str) -> list[str]:
        lineno = reader.lineno
        line = reader.next(f"'{prefix} ...'")
        parts = line.split(" ")
        if parts[0] != prefix:
            raise FormatError(f"line {lineno}: expected '{prefix} ...', got {line!r}")
        return parts[1:]

    source = " ".join(expect("source"))
    if source not in ("semantic", "description", "prototype"):
        raise FormatError(f"line {reader.lineno - 1}: unknown source {source!r}")
    scale = parse_real(" ".join(expect("scale")), reader.lineno - 1)
    counts = expect("split")
    if len(counts) != 2 or not all(c.isdigit() for c in counts):
        raise FormatError(f"line {reader.lineno - 1}: expected 'split <n_seen> <n_unseen>'")
    n_seen, n_unseen = int(counts[0]), int(counts[1])
    seen = []
    for _ in range(n_seen):
        lineno = reader.lineno
        line = reader.next("'seen <name>'")
        if not line.startswith("seen ") or line == "seen ":
            raise FormatError(f"line {lineno}: expected 'seen <name>'")
        seen.append(line[len("seen "):])
    unseen = []
    for _ in range(n_unseen):
        lineno = reader.lineno
        line = reader.next("'unseen <name>'")
        if not line.startswith("unseen ") or line == "unseen ":
            raise FormatError(f"line {lineno}: expected 'unseen <name>'")
        unseen.append(line[len("unseen "):])
    split = ClassSplit(tuple(seen), tuple(unseen))

    shape = expect("embeddings")
    if len(shape) != 2 or not all(c.isdigit() for c in shape):
        raise FormatError(f"line {reader.lineno - 1}: expected 'embeddings <n> <d>'")
    n_rows, emb_dim = int(shape[0]), int(shape[1])
    if n_rows != split.n_classes:
        raise FormatError(f"line {reader.lineno - 1}: embedding rows do not match the split")
    emb = np.vstack(
        [parse_vector(reader.next("embedding row"), reader.lineno - 1, emb_dim) for _ in range(n_rows)]
    ) if n_rows else np.zeros((0, emb_dim))

    depth_parts = expect("head")
    if len(depth_parts) != 1 or depth_parts[0] not in ("1", "2", "3"):
        raise FormatError(f"line {reader.lineno - 1}: expected 'head <depth in 1..3>'")
    depth = int(depth_parts[0])
    weights = []
    biases = []
    for _ in range(depth):
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
    background = parse_vector(" ".join(expect("background")), reader.lineno - 1)
    if reader.pos != len(reader.lines):
        raise FormatError(f"line {reader.lineno}: trailing content after the model")

    return AlignmentModel(
        head=ProjectionHead(weights, biases),
        background=background,
        score_scale=float(scale),
        split=split,
        source_embeddings=emb,
        embedding_source=source,
    )


def load_model(path) -> AlignmentModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def save_model(model: AlignmentModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_model(model))
