"""Linear bag-of-n-grams text classifier (2-class softmax).

Architecture: each document is tokenized on ASCII whitespace with an EOS
sentinel appended; features are in-vocab unigrams plus hashed bigrams; their
embedding rows are mean-pooled into a hidden vector; a 2-row output matrix
and a softmax give class probabilities. Training is plain SGD on the
cross-entropy loss with a linearly decaying learning rate, one update per
example per epoch, optionally lock-free across threads.
"""

from __future__ import annotations

import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import (
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    LabelError,
    RecordError,
)
from .seedset import LABEL_NEG, LABEL_POS

log = logging.getLogger(__name__)

EOS = "</s>"

# ASCII whitespace only: multibyte spaces are token characters, as in the
# reference tokenizer this mirrors.
_ASCII_WS = re.compile(r"[ \t\n\r\v\f]+")


def tokenize(text: str) -> list[str]:
    """Split on runs of ASCII whitespace and append the EOS sentinel."""
    # str.split() additionally breaks on \x1c-\x1f and non-ASCII whitespace;
    # when neither can occur it computes the identical split at C speed
    # (isascii is O(1) on CPython's compact strings)
    if text.isascii() and not (
        "\x1c" in text or "\x1d" in text or "\x1e" in text or "\x1f" in text
    ):
        tokens = text.split()
    else:
        tokens = [t for t in _ASCII_WS.split(text) if t]
    tokens.append(EOS)
    return tokens


@dataclass(frozen=True)
class Hyperparams:
    """Training hyperparameters. Defaults are the published recipe: lr 0.1,
    dim 100, 5 epochs, unigrams+bigrams, min_count 1, 2M hash buckets."""

    lr: float = 0.1
    dim: int = 100
    epochs: int = 5
    word_ngrams: int = 2
    min_count: int = 1
    buckets: int = 2_000_000
    min_n: int = 0
    max_n: int = 0
    seed: int = 17

    def validate(self) -> "Hyperparams":
        if not (self.lr > 0.0):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.word_ngrams not in (1, 2):
            raise ConfigError(f"word_ngrams must be 1 or 2, got {self.word_ngrams}")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        if self.buckets < 1:
            raise ConfigError(f"buckets must be >= 1, got {self.buckets}")
        if self.min_n != 0 or self.max_n != 0:
            raise ConfigError("subword n-grams are not supported; min_n and max_n must be 0")
        return self


@dataclass
class Prediction:
    p_pos: float
    p_neg: float


@dataclass
class ClassifierModel:
    """Trained model: vocab (token -> row id), token counts, input matrix A
    of shape (len(vocab)+buckets, dim), output matrix B of shape (2, dim),
    both float32. Row 0 of B is the positive class."""

    vocab: dict[str, int]
    token_counts: dict[str, int]
    A: np.ndarray
    B: np.ndarray
    hyperparams: Hyperparams
    eos_zeroed: bool = False
    lr_trace: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_words(self) -> int:
        return len(self.vocab)

    @property
    def buckets(self) -> int:
        return self.hyperparams.buckets

    @property
    def dim(self) -> int:
        return int(self.A.shape[1])


def featurize(tokens: Sequence[str], vocab: dict[str, int], buckets: int,
              word_ngrams: int = 2) -> np.ndarray:
    """Feature ids for a token sequence; see the kernel docs for the exact
    hashing scheme (documented in model_io's format notes)."""
    return _backend.kernel().featurize(list(tokens), vocab, buckets, word_ngrams)


def read_training_file(path) -> tuple[list[str], np.ndarray]:
    """Parse a labeled training file into (texts, labels int8).

    Each line is "__label__pos <text>" or "__label__neg <text>"; a malformed
    label raises RecordError, an empty file EmptyInputError, and a file where
    one class is absent LabelError.
    """
    path = Path(path)
    texts: list[str] = []
    labels: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                raise RecordError("blank line", path, line_no)
            if line == LABEL_POS or line.startswith(LABEL_POS + " "):
                labels.append(0)
                texts.append(line[len(LABEL_POS) + 1 :])
            elif line == LABEL_NEG or line.startswith(LABEL_NEG + " "):
                labels.append(1)
                texts.append(line[len(LABEL_NEG) + 1 :])
            else:
                raise RecordError(
                    f"expected a {LABEL_POS}/{LABEL_NEG} prefix", path, line_no
                )
    if not texts:
        raise EmptyInputError(f"training file is empty: {path}")
    arr = np.asarray(labels, dtype=np.int8)
    if (arr == 0).all() or (arr == 1).all():
        raise LabelError("training file contains a single class; need both")
    return texts, arr


def build_vocab(token_lists: Iterable[Sequence[str]], min_count: int) -> tuple[dict[str, int], dict[str, int]]:
    """Count unigrams and assign row ids by (count desc, token asc). EOS is
    always kept regardless of min_count."""
    counts = Counter()
    for toks in token_lists:
        counts.update(toks)
    kept = {t: c for t, c in counts.items() if c >= min_count or t == EOS}
    ordered = sorted(kept.items(), key=lambda tc: (-tc[1], tc[0]))
    vocab = {tok: i for i, (tok, _) in enumerate(ordered)}
    return vocab, dict(ordered)


def init_matrices(n_words: int, hp: Hyperparams) -> tuple[np.ndarray, np.ndarray]:
    """A ~ U[-1/dim, 1/dim) float32 seeded by hp.seed; B zeros."""
    rng = np.random.default_rng(hp.seed)
    rows = n_words + hp.buckets
    A = rng.random((rows, hp.dim), dtype=np.float32)
    span = np.float32(2.0 / hp.dim)
    half = np.float32(1.0 / hp.dim)
    A *= span
    A -= half
    B = np.zeros((2, hp.dim), dtype=np.float32)
    return A, B


def _worker_ranges(n: int, threads: int) -> list[tuple[int, int]]:
    base, extra = divmod(n, threads)
    ranges = []
    lo = 0
    for t in range(threads):
        hi = lo + base + (1 if t < extra else 0)
        ranges.append((lo, hi))
        lo = hi
    return ranges


def train(
    path,
    hp: Hyperparams | None = None,
    threads: int = 1,
    record_lr: bool = False,
) -> ClassifierModel:
    """Train a model on a labeled file.

    threads > 1 trains lock-free on shared matrices (results then vary run to
    run); threads == 1 is bit-deterministic for a fixed backend. record_lr
    stores the per-update learning rate on the returned model (single thread
    only; interleaving makes a global trace meaningless otherwise).
    """
    hp = (hp or Hyperparams()).validate()
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if record_lr and threads != 1:
        raise ConfigError("record_lr requires threads=1")

    texts, labels = read_training_file(path)
    token_lists = [tokenize(t) for t in texts]
    vocab, token_counts = build_vocab(token_lists, hp.min_count)

    kern = _backend.kernel()
    flat, offsets = kern.featurize_batch(token_lists, vocab, hp.buckets, hp.word_ngrams)
    A, B = init_matrices(len(vocab), hp)

    n = len(texts)
    total_updates = hp.epochs * n
    counter = np.zeros(1, dtype=np.int64)
    lr_trace = np.zeros(total_updates, dtype=np.float64) if record_lr else None

    log.info(
        "training: %d examples, %d vocab, dim %d, %d epochs, backend %s, %d thread(s)",
        n, len(vocab), hp.dim, hp.epochs, kern.BACKEND_NAME, threads,
    )
    if threads == 1:
        kern.train_supervised(
            flat, offsets, labels, A, B, hp.lr, hp.epochs, total_updates,
            counter, 0, n, lr_trace,
        )
    else:
        workers = [
            threading.Thread(
                target=kern.train_supervised,
                args=(flat, offsets, labels, A, B, hp.lr, hp.epochs,
                      total_updates, counter, lo, hi),
            )
            for lo, hi in _worker_ranges(n, threads)
            if hi > lo
        ]
        for w in workers:
            w.start()
        for w in workers:
            w.join()

    return ClassifierModel(
        vocab=vocab,
        token_counts=token_counts,
        A=A,
        B=B,
        hyperparams=hp,
        lr_trace=lr_trace,
    )


def _score_batch(model: ClassifierModel, texts: Sequence[str], word_ngrams: int) -> np.ndarray:
    kern = _backend.kernel()
    token_lists = [tokenize(t) for t in texts]
    flat, offsets = kern.featurize_batch(
        token_lists, model.vocab, model.hyperparams.buckets, word_ngrams
    )
    return kern.score_ids(flat, offsets, model.A, model.B)


def predict(model: ClassifierModel, text: str) -> Prediction:
    """Class probabilities for one document (full feature set)."""
    probs = _score_batch(model, [text], model.hyperparams.word_ngrams)[0]
    return Prediction(p_pos=float(probs[0]), p_neg=float(probs[1]))


def predict_unigram_only(model: ClassifierModel, text: str) -> Prediction:
    """Class probabilities using only in-vocab unigram features. With bigram
    rows untouched this is the interpretable approximation whose per-token
    influences decompose the logit exactly."""
    probs = _score_batch(model, [text], word_ngrams=1)[0]
    return Prediction(p_pos=float(probs[0]), p_neg=float(probs[1]))


def score_texts(model: ClassifierModel, texts: Sequence[str],
                unigram_only: bool = False) -> np.ndarray:
    """Vector of positive-class probabilities for a batch of documents."""
    wn = 1 if unigram_only else model.hyperparams.word_ngrams
    return _score_batch(model, texts, wn)[:, 0]


def zero_eos(model: ClassifierModel) -> ClassifierModel:
    """Zero the EOS embedding row in place.

    Every document carries exactly one EOS, so its row contributes 1/n_tokens
    of itself to every hidden vector, a pure length signal; zeroing it removes
    that bias while leaving all other features untouched. Idempotent; a second
    call only logs a warning.
    """
    if model.eos_zeroed:
        log.warning("EOS row already zeroed; nothing to do")
        return model
    eos_id = model.vocab.get(EOS)
    if eos_id is None:
        raise DegenerateInputError("model vocabulary lacks the EOS sentinel")
    model.A[eos_id, :] = 0.0
    model.eos_zeroed = True
    return model


def training_accuracy(model: ClassifierModel, path) -> float:
    """Fraction of training lines the model classifies correctly."""
    texts, labels = read_training_file(path)
    p_pos = score_texts(model, texts)
    predicted = (p_pos < 0.5).astype(np.int8)  # row 0 = positive
    return float((predicted == labels).mean())
