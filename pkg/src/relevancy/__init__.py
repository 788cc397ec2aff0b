"""Context-conditioned relevancy: dataset construction, training, evaluation.

The pipeline mirrors a three-stage, failure-driven dataset build (formal
pairs with similarity-stratified negatives, oracle-labeled informal pairs,
constrained implicit generation) feeding a class-weighted cross-encoder
classifier with F1-based early stopping.
"""

from .corpus import (
    ContextRegistry,
    DatasetManifest,
    Label,
    LabelSource,
    PairExample,
    Register,
    Split,
    TextSample,
    TopicContext,
    build_manifest,
    dedup_samples,
    normalize_text,
    stratified_split,
)
from .errors import RelevancyError
from .metrics import ConfusionMatrix, MetricsReport, confusion, metrics
from .pairgen import (
    NegativeBudget,
    SimilarityMatrix,
    build_candidate_pairs,
    sample_negative_contexts,
    topic_similarity,
)
from .trainer import (
    ClassWeights,
    EncodedPair,
    TrainConfig,
    compute_class_weights,
    encode_pair,
    predict,
    train,
)

__all__ = [
    "ContextRegistry",
    "DatasetManifest",
    "Label",
    "LabelSource",
    "PairExample",
    "Register",
    "Split",
    "TextSample",
    "TopicContext",
    "build_manifest",
    "dedup_samples",
    "normalize_text",
    "stratified_split",
    "RelevancyError",
    "ConfusionMatrix",
    "MetricsReport",
    "confusion",
    "metrics",
    "NegativeBudget",
    "SimilarityMatrix",
    "build_candidate_pairs",
    "sample_negative_contexts",
    "topic_similarity",
    "ClassWeights",
    "EncodedPair",
    "TrainConfig",
    "compute_class_weights",
    "encode_pair",
    "predict",
    "train",
]

__version__ = "0.1.0"
