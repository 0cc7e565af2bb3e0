"""Description-similarity-regularized zero-shot classification heads.

The package aligns class embeddings to region features for zero-shot aerial
object detection, regularized by inter-class similarity distilled from
textual descriptions, and ships the surrounding toolkit: similarity
matrices, triplet regularizers, a feature synthesizer, detection metrics
(mAP / Recall@K / harmonic mean under ZSD and GZSD), a planted-similarity
synthetic data harness, crop planning, and cluster-based split proposals.
"""

from __future__ import annotations

from .alignment import (
    AlignmentModel,
    ProjectionHead,
    TrainHistory,
    classification_loss,
    classification_scores,
    infer_detections,
    load_model,
    save_model,
    train_alignment,
)
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
from .config import RunConfig, default_config, load_config, parse_config
from .datasets import BENCHMARK_SPLITS, DIOR_SPLIT, DOTA_SPLIT, XVIEW_SPLIT
from .detmetrics import (
    Detection,
    EvalReport,
    average_precision,
    evaluate,
    harmonic_mean,
    iou,
    match_detections,
    recall_at_k,
)
from .errors import ConfigError, DescRegError, FormatError
from .prep import CropPlan, cluster_split, crop_plan
from .regions import BACKGROUND_LABEL, GroundTruthBox, RegionSample, load_ground_truth, load_regions
from .regularizer import (
    LossValue,
    SamplingPolicy,
    TripletSample,
    direct_similarity_reg,
    sample_triplet,
    triplet_loss,
    triplet_loss_total,
)
from .simdata import ScenarioConfig, SimulatedDataset, generate_dataset, load_catalog_dir, write_dataset
from .similarity import (
    SimilarityMatrix,
    build_similarity,
    cosine_matrix,
    diagonal_matrix,
    self_excluding_softmax,
)
from .synthesizer import (
    Synthesizer,
    load_synthesizer,
    save_synthesizer,
    synthesize,
    train_classifier_from_synth,
    train_synthesizer,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AlignmentModel",
    "ProjectionHead",
    "TrainHistory",
    "classification_loss",
    "classification_scores",
    "infer_detections",
    "load_model",
    "save_model",
    "train_alignment",
    "ClassCatalog",
    "ClassSplit",
    "EmbeddingSet",
    "build_catalog",
    "load_embeddings",
    "load_split",
    "save_embeddings",
    "save_split",
    "RunConfig",
    "default_config",
    "load_config",
    "parse_config",
    "BENCHMARK_SPLITS",
    "DIOR_SPLIT",
    "DOTA_SPLIT",
    "XVIEW_SPLIT",
    "Detection",
    "EvalReport",
    "average_precision",
    "evaluate",
    "harmonic_mean",
    "iou",
    "match_detections",
    "recall_at_k",
    "ConfigError",
    "DescRegError",
    "FormatError",
    "CropPlan",
    "cluster_split",
    "crop_plan",
    "BACKGROUND_LABEL",
    "GroundTruthBox",
    "RegionSample",
    "load_ground_truth",
    "load_regions",
    "LossValue",
    "SamplingPolicy",
    "TripletSample",
    "direct_similarity_reg",
    "sample_triplet",
    "triplet_loss",
    "triplet_loss_total",
    "ScenarioConfig",
    "SimulatedDataset",
    "generate_dataset",
    "load_catalog_dir",
    "write_dataset",
    "SimilarityMatrix",
    "build_similarity",
    "cosine_matrix",
    "diagonal_matrix",
    "self_excluding_softmax",
    "Synthesizer",
    "load_synthesizer",
    "save_synthesizer",
    "synthesize",
    "train_classifier_from_synth",
    "train_synthesizer",
]
