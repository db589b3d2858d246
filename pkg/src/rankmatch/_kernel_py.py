"""Pure numpy implementation of the classifier hot kernels.

Drop-in fallback for the compiled rankmatch._kernel module, used when the
extension is unavailable (or forced via RANKMATCH_BACKEND=python). Same
semantics, slower.

Arithmetic contract shared with the compiled kernel:
- embedding matrices are float32,
- hidden means, logits, softmax, and gradients are float64,
- the input-row SGD addend is rounded to float32 BEFORE being added, so both
  kernels perform identical f32+f32 additions,
- output-row updates are computed in float64 from the PRE-update rows, then
  rounded on store.
Per backend, single-threaded training is bit-deterministic. Across backends
float64 reduction order differs (numpy pairwise vs sequential), so scores
agree to ~1e-9, not bit-exactly.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

BACKEND_NAME = "python"
COMPILED = False

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_BIGRAM_MIX = 116049371
_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=1 << 18)
def token_hash(token: str) -> int:
    """FNV-1a 64-bit over the token's UTF-8 bytes."""
    h = _FNV_OFFSET
    for b in token.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def featurize(tokens, vocab: dict, buckets: int, word_ngrams: int) -> np.ndarray:
    """Feature ids for one token sequence: in-vocab unigram ids first (OOV
    dropped), then hashed-bigram ids over every adjacent pair (OOV included),
    offset by the vocab size. Returns int64."""
    ids = [vocab[t] for t in tokens if t in vocab]
    if word_ngrams >= 2 and len(tokens) >= 2:
        n_words = len(vocab)
        prev = token_hash(tokens[0])
        for tok in tokens[1:]:
            cur = token_hash(tok)
            ids.append(n_words + ((prev * _BIGRAM_MIX + cur) & _MASK64) % buckets)
            prev = cur
    return np.asarray(ids, dtype=np.int64)


def featurize_batch(token_lists, vocab: dict, buckets: int, word_ngrams: int):
    """Featurize many docs into (flat ids, offsets); doc k owns
    flat[offsets[k]:offsets[k+1]]."""
    arrs = [featurize(toks, vocab, buckets, word_ngrams) for toks in token_lists]
    offsets = np.zeros(len(arrs) + 1, dtype=np.int64)
    if arrs:
        np.cumsum([a.shape[0] for a in arrs], out=offsets[1:])
        flat = np.concatenate(arrs) if offsets[-1] else np.empty(0, dtype=np.int64)
    else:
        flat = np.empty(0, dtype=np.int64)
    return flat, offsets


def score_ids(flat, offsets, A, B) -> np.ndarray:
    """Softmax class probabilities for each doc in the batch.

    Returns (docs, 2) float64. A doc with no features scores (0.5, 0.5):
    an all-zero hidden state.
    """
    n_docs = offsets.shape[0] - 1
    out = np.empty((n_docs, 2), dtype=np.float64)
    B64 = B.astype(np.float64)
    for k in range(n_docs):
        seg = flat[offsets[k] : offsets[k + 1]]
        if seg.shape[0] == 0:
            out[k] = 0.5
            continue
        hidden = A[seg].sum(axis=0, dtype=np.float64) * (1.0 / seg.shape[0])
        logits = B64 @ hidden
        shift = np.exp(logits - logits.max())
        out[k] = shift / shift.sum()
    return out


def train_supervised(
    flat,
    offsets,
    labels,
    A,
    B,
    lr0: float,
    epochs: int,
    total_updates: int,
    counter,
    start: int,
    end: int,
    lr_trace=None,
) -> None:
    """Run one worker's share [start, end) of the shared SGD loop in place.

    counter is a shared int64[1] of updates done so far; the learning rate
    decays linearly from lr0 to 0 over total_updates steps of it. Docs with
    zero features still consume an update slot (the rate schedule depends
    only on corpus size), they just change nothing.
    """
    for _epoch in range(epochs):
        for k in range(start, end):
            step = int(counter[0])
            counter[0] = step + 1
            lr = lr0 * (1.0 - step / total_updates)
            if lr < 0.0:
                lr = 0.0
            if lr_trace is not None:
                lr_trace[step] = lr
            seg = flat[offsets[k] : offsets[k + 1]]
            n = seg.shape[0]
            if n == 0:
                continue
            inv = 1.0 / n
            hidden = A[seg].sum(axis=0, dtype=np.float64) * inv
            B64 = B.astype(np.float64)
            logits = B64 @ hidden
            shift = np.exp(logits - logits.max())
            probs = shift / shift.sum()
            target = np.array(
                [1.0, 0.0] if labels[k] == 0 else [0.0, 1.0], dtype=np.float64
            )
            err = target - probs
            grad_hidden32 = (lr * (err @ B64) * inv).astype(np.float32)
            B[:] = (B64 + lr * err[:, None] * hidden[None, :]).astype(np.float32)
            np.add.at(A, seg, grad_hidden32)
