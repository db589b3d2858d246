"""rankmatch: compression-rank data selection for pretraining corpora.

Score documents by how well per-model bits-per-character rank-predicts model
capability rank, seed a linear n-gram classifier from the extremes of that
score, and filter large JSONL corpora with the classifier.
"""

from . import errors
from ._backend import available_backends, backend_name
from .classifier import (
    ClassifierModel,
    Hyperparams,
    Prediction,
    predict,
    predict_unigram_only,
    score_texts,
    tokenize,
    train,
    zero_eos,
)
from .compression import CharNgramLM, LossTable, bits_per_character, load_loss_table
from .corpus import CorpusReader, Document, extract_domain, sample_seed
from .model_io import load_model, save_model
from .pipeline import (
    SelectionConfig,
    SelectionReport,
    compute_threshold,
    filter_corpus,
    run_end_to_end,
)
from .seedset import SeedSet, emit_training_file, select_seed_examples
from .strength import (
    ModelRoster,
    StrengthTable,
    predictive_strength,
    score_corpus,
    strength_histogram,
)

__version__ = "0.1.0"

__all__ = [
    "CharNgramLM",
    "ClassifierModel",
    "CorpusReader",
    "Document",
    "Hyperparams",
    "LossTable",
    "ModelRoster",
    "Prediction",
    "SeedSet",
    "SelectionConfig",
    "SelectionReport",
    "StrengthTable",
    "available_backends",
    "backend_name",
    "bits_per_character",
    "compute_threshold",
    "errors",
    "extract_domain",
    "filter_corpus",
    "load_loss_table",
    "load_model",
    "predict",
    "predict_unigram_only",
    "predictive_strength",
    "run_end_to_end",
    "sample_seed",
    "save_model",
    "score_corpus",
    "score_texts",
    "select_seed_examples",
    "strength_histogram",
    "emit_training_file",
    "tokenize",
    "train",
    "zero_eos",
    "__version__",
]
