"""Explanation-augmented multiple-choice question answering.

A desk-scale, from-scratch pipeline: human-explanation data model and
quality gates, a conditional transformer language model that generates
explanations, a [CLS]-pooled choice classifier that consumes them, BLEU and
perplexity evaluation, an adversarial-explanation perturbation, and an
annotation-collection HTTP service.
"""

from .corpus import (
    Annotation, DatasetVariant, Example, is_limited, load_annotations,
    load_examples, materialize,
)
from .cage import (
    ConditioningMode, Datasets, ExplanationSource, PipelineSpec,
    build_classifier_input, build_context, finetune_lm, generate_explanations,
    perturb_misleading, run_pipeline, transfer_explanations,
)
from .metrics import MetricsReport, accuracy, bleu, perplexity, write_report
from .quality import overlap_stats, validate_annotation

__all__ = [
    "Annotation", "ConditioningMode", "Datasets", "DatasetVariant", "Example",
    "ExplanationSource", "MetricsReport", "PipelineSpec", "accuracy", "bleu",
    "build_classifier_input", "build_context", "finetune_lm",
    "generate_explanations", "is_limited", "load_annotations", "load_examples",
    "materialize", "overlap_stats", "perplexity", "perturb_misleading",
    "run_pipeline", "transfer_explanations", "validate_annotation",
    "write_report",
]

__version__ = "0.1.0"
