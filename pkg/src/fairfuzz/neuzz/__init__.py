"""Gradient-guided mutation: corpus collection, the byte-level MLP, mutators."""
from fairfuzz.neuzz.corpus import (
    CorpusConfigError,
    CorpusSizeWarning,
    Sample,
    TrainingCorpus,
    ValidationReport,
    collect_training_corpus,
    deterministic_variants,
    load_corpus,
    save_corpus,
    validate_corpus,
)
from fairfuzz.neuzz.model import (
    ByteGradient,
    ByteMLP,
    CorpusRejected,
    EdgeSelector,
    GradientKind,
    Hyper,
    ShapeError,
    gradient,
    load_model,
    predict,
    save_model,
    train,
)
from fairfuzz.neuzz.mutate import mutate_fixed_length, mutate_variant_length

__all__ = [
    "ByteGradient",
    "ByteMLP",
    "CorpusConfigError",
    "CorpusRejected",
    "CorpusSizeWarning",
    "EdgeSelector",
    "GradientKind",
    "Hyper",
    "Sample",
    "ShapeError",
    "TrainingCorpus",
    "ValidationReport",
    "collect_training_corpus",
    "deterministic_variants",
    "gradient",
    "load_corpus",
    "load_model",
    "mutate_fixed_length",
    "mutate_variant_length",
    "predict",
    "save_corpus",
    "save_model",
    "train",
    "validate_corpus",
]
