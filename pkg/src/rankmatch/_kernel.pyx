# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled classifier hot kernels: token hashing, featurization, batch
scoring, and the SGD training loop.

Semantics mirror rankmatch._kernel_py exactly; see that module's docstring
for the shared arithmetic contract. Training and scoring release the GIL, so
multiple Python threads can drive lock-free shared-buffer training.
"""

import numpy as np

from cpython.dict cimport PyDict_GetItem
from cpython.object cimport PyObject
from libc.math cimport exp
from libc.stdint cimport int64_t, uint64_t

cdef extern from "Python.h":
    const char* PyUnicode_AsUTF8AndSize(object unicode, Py_ssize_t *size) except NULL

BACKEND_NAME = "cython"
COMPILED = True

cdef uint64_t FNV_OFFSET = 14695981039346656037ULL
cdef uint64_t FNV_PRIME = 1099511628211ULL
cdef uint64_t BIGRAM_MIX = 116049371ULL


cdef inline uint64_t _fnv1a64(const char* data, Py_ssize_t n) nogil:
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ <uint64_t><unsigned char>data[i]) * FNV_PRIME
    return h


def token_hash(str token):
    """FNV-1a 64-bit over the token's UTF-8 bytes."""
    cdef Py_ssize_t n = 0
    cdef const char* data = PyUnicode_AsUTF8AndSize(token, &n)
    return _fnv1a64(data, n)


def featurize(list tokens, dict vocab, int64_t buckets, int word_ngrams):
    """Feature ids for one token sequence: in-vocab unigram ids first (OOV
    dropped), then hashed-bigram ids over every adjacent pair (OOV included),
    offset by the vocab size. Returns int64."""
    cdef Py_ssize_t nt = len(tokens)
    cdef Py_ssize_t cap = 2 * nt if nt else 1
    out_arr = np.empty(cap, dtype=np.int64)
    cdef int64_t[::1] out = out_arr
    cdef uint64_t[::1] hashes = np.empty(nt if nt else 1, dtype=np.uint64)
    cdef Py_ssize_t k = 0, i, slen = 0
    cdef int64_t n_words = len(vocab)
    cdef const char* data
    cdef PyObject* item
    cdef object tok
    cdef bint want_bigrams = word_ngrams >= 2

    for i in range(nt):
        tok = tokens[i]
        if want_bigrams:
            data = PyUnicode_AsUTF8AndSize(tok, &slen)
            hashes[i] = _fnv1a64(data, slen)
        item = PyDict_GetItem(vocab, tok)
        if item != NULL:
            out[k] = <int64_t><object>item
            k += 1
    if want_bigrams:
        for i in range(1, nt):
            out[k] = n_words + <int64_t>(
                (hashes[i - 1] * BIGRAM_MIX + hashes[i]) % <uint64_t>buckets
            )
            k += 1
    return out_arr[:k].copy()


def featurize_batch(list token_lists, dict vocab, int64_t buckets, int word_ngrams):
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


def score_ids(const int64_t[::1] flat, const int64_t[::1] offsets,
              const float[:, ::1] A, const float[:, ::1] B):
    """Softmax class probabilities for each doc in the batch.

    Returns (docs, 2) float64. A doc with no features scores (0.5, 0.5).
    """
    cdef Py_ssize_t n_docs = offsets.shape[0] - 1
    cdef Py_ssize_t dim = A.shape[1]
    probs_arr = np.empty((n_docs, 2), dtype=np.float64)
    cdef double[:, ::1] out = probs_arr
    hidden_arr = np.zeros(dim, dtype=np.float64)
    cdef double[::1] hidden = hidden_arr
    cdef Py_ssize_t k, j, d
    cdef int64_t o0, o1, row
    cdef double n, inv, z0, z1, m, e0, e1, s

    with nogil:
        for k in range(n_docs):
            o0 = offsets[k]
            o1 = offsets[k + 1]
            if o1 == o0:
                out[k, 0] = 0.5
                out[k, 1] = 0.5
                continue
            for d in range(dim):
                hidden[d] = 0.0
            for j in range(o0, o1):
                row = flat[j]
                for d in range(dim):
                    hidden[d] += A[row, d]
            inv = 1.0 / <double>(o1 - o0)
            z0 = 0.0
            z1 = 0.0
            for d in range(dim):
                z0 += <double>B[0, d] * (hidden[d] * inv)
                z1 += <double>B[1, d] * (hidden[d] * inv)
            m = z0 if z0 > z1 else z1
            e0 = exp(z0 - m)
            e1 = exp(z1 - m)
            s = e0 + e1
            out[k, 0] = e0 / s
            out[k, 1] = e1 / s
    return probs_arr


def train_supervised(const int64_t[::1] flat, const int64_t[::1] offsets,
                     const signed char[::1] labels,
                     float[:, ::1] A, float[:, ::1] B,
                     double lr0, int epochs, int64_t total_updates,
                     int64_t[::1] counter, Py_ssize_t start, Py_ssize_t end,
                     object lr_trace=None):
    """Run one worker's share [start, end) of the shared SGD loop in place.

    counter is a shared int64[1] of updates done so far; the learning rate
    decays linearly from lr0 to 0 over total_updates steps of it. Runs
    without the GIL; concurrent workers update A and B lock-free.
    """
    cdef Py_ssize_t dim = A.shape[1]
    hidden_arr = np.zeros(dim, dtype=np.float64)
    grad_arr = np.zeros(dim, dtype=np.float32)
    cdef double[::1] hidden = hidden_arr
    cdef float[::1] grad32 = grad_arr
    cdef bint has_trace = lr_trace is not None
    cdef double[::1] trace
    if has_trace:
        trace = lr_trace
    else:
        trace = hidden  # unused; any buffer satisfies the typed slot
    cdef Py_ssize_t k, j, d
    cdef int64_t o0, o1, row, step
    cdef int epoch
    cdef double lr, inv, z0, z1, m, e0, e1, s, p0, p1, err0, err1
    cdef double b0, b1, hd

    with nogil:
        for epoch in range(epochs):
            for k in range(start, end):
                step = counter[0]
                counter[0] = step + 1
                lr = lr0 * (1.0 - <double>step / <double>total_updates)
                if lr < 0.0:
                    lr = 0.0
                if has_trace:
                    trace[step] = lr
                o0 = offsets[k]
                o1 = offsets[k + 1]
                if o1 == o0:
                    continue
                for d in range(dim):
                    hidden[d] = 0.0
                for j in range(o0, o1):
                    row = flat[j]
                    for d in range(dim):
                        hidden[d] += A[row, d]
                inv = 1.0 / <double>(o1 - o0)
                z0 = 0.0
                z1 = 0.0
                for d in range(dim):
                    z0 += <double>B[0, d] * (hidden[d] * inv)
                    z1 += <double>B[1, d] * (hidden[d] * inv)
                m = z0 if z0 > z1 else z1
                e0 = exp(z0 - m)
                e1 = exp(z1 - m)
                s = e0 + e1
                p0 = e0 / s
                p1 = e1 / s
                if labels[k] == 0:
                    err0 = 1.0 - p0
                    err1 = -p1
                else:
                    err0 = -p0
                    err1 = 1.0 - p1
                for d in range(dim):
                    b0 = <double>B[0, d]
                    b1 = <double>B[1, d]
                    grad32[d] = <float>(lr * (err0 * b0 + err1 * b1) * inv)
                    hd = hidden[d] * inv
                    B[0, d] = <float>(b0 + lr * err0 * hd)
                    B[1, d] = <float>(b1 + lr * err1 * hd)
                for j in range(o0, o1):
                    row = flat[j]
                    for d in range(dim):
                        A[row, d] = A[row, d] + grad32[d]
    return None
