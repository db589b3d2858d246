"""Classifier model binary serialization.

Layout (all integers little-endian):

    offset  size  field
    0       8     magic b"RNKMATCH"
    8       4     format version (uint32), currently 1
    12      4     header length H (uint32)
    16      H     header JSON (utf-8): hyperparams, eos_zeroed, n_words,
                  matrix shapes
    ..      *     vocab block: n_words entries of
                  uint32 token byte-length, token utf-8 bytes, uint64 count
                  (ids are implicit: entries are written in id order 0..V-1)
    ..      *     matrix A: rows*dim float32 little-endian, row-major
    ..      *     matrix B: 2*dim float32 little-endian, row-major
    end     32    sha256 of every preceding byte

Feature-id scheme the matrices are indexed by (fixed for version 1):
unigram id = vocab id; bigram id = n_words + bucket where
bucket = (h(t1) * 116049371 + h(t2)) mod 2^64 mod buckets and h is FNV-1a
64-bit over the token's UTF-8 bytes. Out-of-vocab unigrams contribute no
unigram id but do participate in bigrams; every tokenization appends one
EOS sentinel "</s>".

Distinct failure modes on load: FormatError for an unknown magic or version,
CorruptionError for checksum mismatch or truncation.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .classifier import ClassifierModel, Hyperparams
from .errors import CorruptionError, FormatError

MAGIC = b"RNKMATCH"
FORMAT_VERSION = 1
_CHECKSUM_BYTES = 32


def save_model(model: ClassifierModel, path) -> None:
    """Serialize a model; see the module docstring for the layout."""
    path = Path(path)
    header = {
        "hyperparams": vars(model.hyperparams),
        "eos_zeroed": model.eos_zeroed,
        "n_words": model.n_words,
        "a_shape": list(model.A.shape),
        "b_shape": list(model.B.shape),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    digest = hashlib.sha256()
    with open(path, "wb") as fh:

        def put(chunk: bytes):
            digest.update(chunk)
            fh.write(chunk)

        put(MAGIC)
        put(struct.pack("<II", FORMAT_VERSION, len(header_bytes)))
        put(header_bytes)
        id_to_token = sorted(model.vocab.items(), key=lambda kv: kv[1])
        for i, (token, vid) in enumerate(id_to_token):
            if vid != i:
                raise ValueError("vocab ids must be a permutation of 0..V-1")
            tok_bytes = token.encode("utf-8")
            put(struct.pack("<I", len(tok_bytes)))
            put(tok_bytes)
            put(struct.pack("<Q", model.token_counts.get(token, 0)))
        put(np.ascontiguousarray(model.A, dtype="<f4").tobytes())
        put(np.ascontiguousarray(model.B, dtype="<f4").tobytes())
        fh.write(digest.digest())


class _Cursor:
    """Bounds-checked sequential reader; any overrun means truncation."""

    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(f"{self.path}: truncated model file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path) -> ClassifierModel:
    """Read a model written by save_model, verifying the checksum first."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 8 + _CHECKSUM_BYTES:
        raise CorruptionError(f"{path}: file too short to be a model")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic; not a classifier model file")

    body, checksum = data[:-_CHECKSUM_BYTES], data[-_CHECKSUM_BYTES:]
    if hashlib.sha256(body).digest() != checksum:
        raise CorruptionError(f"{path}: checksum mismatch (corrupt or truncated)")

    cur = _Cursor(body, path)
    cur.take(len(MAGIC))
    version, header_len = cur.unpack("<II")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: format version {version} not supported "
            f"(this build reads version {FORMAT_VERSION})"
        )
    try:
        header = json.loads(cur.take(header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"{path}: unreadable header: {exc}") from None

    try:
        hp = Hyperparams(**header["hyperparams"])
        n_words = int(header["n_words"])
        a_shape = tuple(header["a_shape"])
        b_shape = tuple(header["b_shape"])
        eos_zeroed = bool(header["eos_zeroed"])
    except (KeyError, TypeError) as exc:
        raise CorruptionError(f"{path}: malformed header: {exc}") from None

    vocab: dict[str, int] = {}
    token_counts: dict[str, int] = {}
    for vid in range(n_words):
        (tok_len,) = cur.unpack("<I")
        token = cur.take(tok_len).decode("utf-8")
        (count,) = cur.unpack("<Q")
        vocab[token] = vid
        token_counts[token] = count

    def read_matrix(shape):
        n = int(np.prod(shape))
        raw = cur.take(n * 4)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)

    A = read_matrix(a_shape)
    B = read_matrix(b_shape)
    if cur.pos != len(body):
        raise CorruptionError(f"{path}: {len(body) - cur.pos} trailing bytes")
    return ClassifierModel(
        vocab=vocab,
        token_counts=token_counts,
        A=A,
        B=B,
        hyperparams=hp,
        eos_zeroed=eos_zeroed,
    )
