"""Bits-per-character accounting and a character n-gram oracle language model.

The oracle LM is a desk-scale stand-in for a ladder of increasingly capable
models: train several on nested slices of the same clean text and better-
trained ones compress held-out clean text strictly better.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateInputError,
    EmptyInputError,
    FormatError,
    RecordError,
)

LN2 = math.log(2.0)

# Sentinels live in the private-use plane so they cannot collide with corpus
# text; training text containing them is rejected.
BOT = ""
UNK = ""

LM_FORMAT_VERSION = 1


def bits_per_character(token_logprobs: Iterable[float], char_count: int) -> float:
    """Total negative log2 likelihood divided by character count.

    token_logprobs are natural-log probabilities, each <= 0 and finite.
    char_count counts Unicode scalar values (len of the str) and must be
    positive. Scale-invariant: the tokenization granularity does not matter,
    only the summed log mass and the character denominator.
    """
    if char_count <= 0:
        raise DegenerateInputError(f"char_count must be positive, got {char_count}")
    total = 0.0
    for lp in token_logprobs:
        lp = float(lp)
        if not math.isfinite(lp):
            raise ValueError(f"non-finite logprob: {lp}")
        if lp > 0.0:
            raise ValueError(f"logprob above 0: {lp}")
        total += lp
    return (-total / LN2) / char_count


@dataclass
class LossTable:
    """Rectangular (doc x model) table of bits-per-character values.

    entries maps (doc_id, model_id) -> bpc; doc_ids lists complete docs in
    first-seen order; quarantined counts docs dropped for missing some model;
    duplicates counts (doc, model) rows that were overwritten (last wins).
    """

    entries: dict[tuple[str, str], float]
    model_ids: list[str]
    doc_ids: list[str]
    quarantined: int = 0
    duplicates: int = 0

    def bpc_vector(self, doc_id: str, model_order: Sequence[str]) -> list[float]:
        return [self.entries[(doc_id, m)] for m in model_order]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, float]]) -> "LossTable":
        """Build a table from (doc_id, model_id, bpc) rows; see load_loss_table
        for the validation rules."""
        per_doc: dict[str, dict[str, float]] = {}
        model_ids: list[str] = []
        model_seen: set[str] = set()
        duplicates = 0
        for doc_id, model_id, bpc in rows:
            if model_id not in model_seen:
                model_seen.add(model_id)
                model_ids.append(model_id)
            bucket = per_doc.setdefault(doc_id, {})
            if model_id in bucket:
                duplicates += 1
            bucket[model_id] = bpc

        entries: dict[tuple[str, str], float] = {}
        doc_ids: list[str] = []
        quarantined = 0
        for doc_id, bucket in per_doc.items():
            if len(bucket) == len(model_ids):
                doc_ids.append(doc_id)
                for model_id, bpc in bucket.items():
                    entries[(doc_id, model_id)] = bpc
            else:
                quarantined += 1
        if not doc_ids:
            raise EmptyInputError("loss table has no complete documents")
        return cls(
            entries=entries,
            model_ids=model_ids,
            doc_ids=doc_ids,
            quarantined=quarantined,
            duplicates=duplicates,
        )


def load_loss_table(path) -> LossTable:
    """Read a JSONL loss table of {"doc_id","model_id","bpc"} rows.

    Rows with missing fields, non-finite, or negative bpc raise RecordError
    with the offending line number. Docs not covered by every model are
    quarantined (counted, dropped); duplicate (doc, model) rows keep the
    last value and are counted.
    """
    path = Path(path)
    rows: list[tuple[str, str, float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                raise RecordError("blank line", path, line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", path, line_no) from None
            if not isinstance(obj, dict):
                raise RecordError("row is not a JSON object", path, line_no)
            doc_id = obj.get("doc_id")
            model_id = obj.get("model_id")
            bpc = obj.get("bpc")
            if not isinstance(doc_id, str) or not doc_id:
                raise RecordError("missing or invalid 'doc_id'", path, line_no)
            if not isinstance(model_id, str) or not model_id:
                raise RecordError("missing or invalid 'model_id'", path, line_no)
            if isinstance(bpc, bool) or not isinstance(bpc, (int, float)):
                raise RecordError("missing or invalid 'bpc'", path, line_no)
            bpc = float(bpc)
            if not math.isfinite(bpc) or bpc < 0.0:
                raise RecordError(f"bpc must be finite and >= 0, got {bpc}", path, line_no)
            rows.append((doc_id, model_id, bpc))
    if not rows:
        raise EmptyInputError(f"loss table is empty: {path}")
    return LossTable.from_rows(rows)


def save_loss_table(table: LossTable, path) -> None:
    """Write a LossTable back to JSONL, one row per (doc, model), docs in
    table order and models in roster-file order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in table.doc_ids:
            for model_id in table.model_ids:
                row = {
                    "doc_id": doc_id,
                    "model_id": model_id,
                    "bpc": table.entries[(doc_id, model_id)],
                }
                fh.write(json.dumps(row, ensure_ascii=False))
                fh.write("\n")


class CharNgramLM:
    """Add-alpha smoothed character n-gram model.

    Contexts are the preceding order-1 characters; each text is padded with
    begin-of-text sentinels so the first characters are conditioned on a
    well-defined context. Characters never seen in training are scored as a
    single UNK symbol with a bare alpha pseudo-count; the smoothing
    denominator counts only the observed alphabet, so the distribution over
    that alphabet sums to 1.
    """

    def __init__(
        self,
        order: int,
        alpha: float,
        counts: Mapping[str, Mapping[str, int]],
        vocab: Iterable[str],
    ):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if not (alpha > 0.0 and math.isfinite(alpha)):
            raise ValueError(f"alpha must be a positive finite real, got {alpha}")
        self.order = order
        self.alpha = float(alpha)
        self.counts: dict[str, dict[str, int]] = {
            ctx: dict(c) for ctx, c in counts.items()
        }
        self.context_totals: dict[str, int] = {
            ctx: sum(c.values()) for ctx, c in self.counts.items()
        }
        self.vocab = frozenset(vocab)
        if not self.vocab:
            raise EmptyInputError("model has an empty alphabet")

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @classmethod
    def train(cls, texts: Iterable[str], order: int, alpha: float) -> "CharNgramLM":
        """Count n-grams over the given texts. Raises EmptyInputError if every
        text is empty and ValueError if any text contains a sentinel char."""
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        counts: dict[str, Counter] = defaultdict(Counter)
        vocab: set[str] = set()
        pad = BOT * (order - 1)
        any_text = False
        for text in texts:
            if not text:
                continue
            if BOT in text or UNK in text:
                raise ValueError("training text contains a reserved sentinel character")
            any_text = True
            padded = pad + text
            for i in range(order - 1, len(padded)):
                counts[padded[i - order + 1 : i]][padded[i]] += 1
            vocab.update(text)
        if not any_text:
            raise EmptyInputError("no non-empty training text")
        return cls(order=order, alpha=alpha, counts=counts, vocab=vocab)

    def prob(self, context: str, char: str) -> float:
        """Smoothed P(char | context). The context is used as-is (callers pad);
        unseen chars are folded into UNK."""
        if char not in self.vocab:
            char = UNK
        ctx_counts = self.counts.get(context)
        if ctx_counts is None:
            hits, total = 0, 0
        else:
            hits = ctx_counts.get(char, 0)
            total = self.context_totals[context]
        return (hits + self.alpha) / (total + self.alpha * len(self.vocab))

    def logprob2(self, context: str, char: str) -> float:
        """log2 of prob()."""
        return math.log2(self.prob(context, char))

    def bits_per_char(self, text: str) -> float:
        """Mean negative log2 probability per character of text."""
        if not text:
            raise DegenerateInputError("cannot score an empty text")
        padded = BOT * (self.order - 1) + text
        k = self.order - 1
        total = 0.0
        for i in range(k, len(padded)):
            total -= self.logprob2(padded[i - k : i], padded[i])
        return total / len(text)

    def to_json(self) -> str:
        payload = {
            "format_version": LM_FORMAT_VERSION,
            "order": self.order,
            "alpha": self.alpha,
            "vocab": sorted(self.vocab),
            "counts": {
                ctx: dict(sorted(c.items())) for ctx, c in sorted(self.counts.items())
            },
        }
        return json.dumps(payload, ensure_ascii=False, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "CharNgramLM":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc.msg}") from None
        if not isinstance(payload, dict):
            raise FormatError(f"{path}: not a JSON object")
        version = payload.get("format_version")
        if version != LM_FORMAT_VERSION:
            raise FormatError(
                f"{path}: format version {version!r} not supported "
                f"(this build reads version {LM_FORMAT_VERSION})"
            )
        try:
            return cls(
                order=payload["order"],
                alpha=payload["alpha"],
                counts=payload["counts"],
                vocab=payload["vocab"],
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: malformed model payload: {exc}") from None


def ladder_bpc_rows(
    docs,
    models: Mapping[str, CharNgramLM],
) -> list[tuple[str, str, float]]:
    """Score every document under every model, yielding loss-table rows.

    docs is an iterable of objects with .id and .text; empty texts raise
    DegenerateInputError (they cannot be assigned a per-char loss).
    """
    rows: list[tuple[str, str, float]] = []
    items = list(models.items())
    for doc in docs:
        for model_id, lm in items:
            rows.append((doc.id, model_id, lm.bits_per_char(doc.text)))
    if not rows:
        raise EmptyInputError("no documents to score")
    return rows
