"""Model introspection and corpus analytics.

Feature influence is measured on the pre-softmax logit margin: for a feature
row a, influence = (B_pos - B_neg) . a. Positive influence pushes toward the
positive class. Because hidden states are mean-pooled, the unigram-only logit
margin of a document equals the mean of its unigram influences exactly; that
identity is what influence_decomposition_check verifies.
"""

from __future__ import annotations

import html
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .classifier import ClassifierModel, featurize, tokenize
from .corpus import Document, domain_of
from .errors import EmptyInputError

_F64 = np.float64


def _margin_vector(model: ClassifierModel) -> np.ndarray:
    return model.B[0].astype(_F64) - model.B[1].astype(_F64)


@dataclass
class FeatureInfluence:
    token: str
    influence: float


def feature_influence(model: ClassifierModel, token: str) -> FeatureInfluence:
    """Influence of one in-vocab unigram. Unknown tokens raise LookupError."""
    row = model.vocab.get(token)
    if row is None:
        raise LookupError(f"token not in vocabulary: {token!r}")
    value = float(_margin_vector(model) @ model.A[row].astype(_F64))
    return FeatureInfluence(token=token, influence=value)


def top_features(model: ClassifierModel, k: int, sign: str = "positive") -> list[FeatureInfluence]:
    """The k most influential unigrams for one class.

    sign "positive" ranks by influence descending, "negative" ascending.
    Ties break by token ascending; k larger than the vocab returns all.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if sign not in ("positive", "negative"):
        raise ValueError(f"sign must be 'positive' or 'negative', got {sign!r}")
    margin = _margin_vector(model)
    values = model.A[: model.n_words].astype(_F64) @ margin
    tokens = sorted(model.vocab.items(), key=lambda kv: kv[1])
    items = [
        FeatureInfluence(token=tok, influence=float(values[row]))
        for tok, row in tokens
    ]
    reverse = sign == "positive"
    items.sort(key=lambda fi: ((-fi.influence if reverse else fi.influence), fi.token))
    return items[:k]


@dataclass
class DecompositionReport:
    """Comparison of the unigram-only logit margin against the mean of the
    per-feature influences; they must match to float tolerance."""

    logit_margin: float
    mean_influence: float
    n_features: int
    abs_deviation: float
    rel_deviation: float


def influence_decomposition_check(model: ClassifierModel, text: str) -> DecompositionReport:
    """Verify influence additivity on one document (unigram features only)."""
    ids = featurize(tokenize(text), model.vocab, model.hyperparams.buckets, word_ngrams=1)
    margin = _margin_vector(model)
    if ids.shape[0] == 0:
        return DecompositionReport(0.0, 0.0, 0, 0.0, 0.0)
    per_feature = model.A[ids].astype(_F64) @ margin
    hidden = model.A[ids].astype(_F64).mean(axis=0)
    logit_margin = float(margin @ hidden)
    mean_influence = float(per_feature.mean())
    abs_dev = abs(logit_margin - mean_influence)
    scale = max(abs(logit_margin), abs(mean_influence))
    rel_dev = 0.0 if scale == 0.0 else abs_dev / scale
    return DecompositionReport(
        logit_margin=logit_margin,
        mean_influence=mean_influence,
        n_features=int(ids.shape[0]),
        abs_deviation=abs_dev,
        rel_deviation=rel_dev,
    )


@dataclass
class DomainDensityRow:
    domain: str
    chars: int
    char_fraction: float


def domain_density(docs: Iterable[Document]) -> list[DomainDensityRow]:
    """Character mass per domain, sorted by share descending (ties by name).

    Docs without a usable URL land in the "(unknown)" bucket. Fractions sum
    to 1 over all rows. A corpus with zero total characters has no density
    and raises EmptyInputError.
    """
    chars: Counter[str] = Counter()
    for doc in docs:
        chars[domain_of(doc)] += doc.char_count
    total = sum(chars.values())
    if total == 0:
        raise EmptyInputError("corpus has zero total characters")
    rows = [
        DomainDensityRow(domain=dom, chars=c, char_fraction=c / total)
        for dom, c in chars.items()
    ]
    rows.sort(key=lambda r: (-r.chars, r.domain))
    return rows


@dataclass
class LengthHistogram:
    """Document-length histogram; the last bin is closed on the right."""

    bin_edges: list[float]
    counts: list[int]
    mean_chars: float
    total_docs: int


def length_histogram(docs: Iterable[Document], edges: Sequence[float]) -> LengthHistogram:
    """Histogram of char_count over explicit edges.

    Edges must be strictly increasing; a length outside [edges[0], edges[-1]]
    raises ValueError so the counts always sum to the document count.
    """
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(a >= b for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be strictly increasing with >= 2 entries")
    lengths = np.asarray([doc.char_count for doc in docs], dtype=np.float64)
    if lengths.size:
        lo, hi = lengths.min(), lengths.max()
        if lo < edges[0] or hi > edges[-1]:
            raise ValueError(
                f"lengths span [{lo:g}, {hi:g}] outside the edges "
                f"[{edges[0]:g}, {edges[-1]:g}]"
            )
    counts, _ = np.histogram(lengths, bins=edges)
    mean = float(lengths.mean()) if lengths.size else 0.0
    return LengthHistogram(
        bin_edges=edges,
        counts=[int(c) for c in counts],
        mean_chars=mean,
        total_docs=int(lengths.size),
    )


def covering_edges(lengths: Iterable[int], bins: int = 16) -> list[float]:
    """Equal-width edges spanning [0, max+1]; a safe default for reports."""
    top = max(lengths, default=0) + 1
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    return [i * top / bins for i in range(bins + 1)]


def influence_table_text(items: Sequence[FeatureInfluence]) -> str:
    """Render feature influences as an aligned two-column table."""
    if not items:
        return "(no features)\n"
    width = max(len(fi.token) for fi in items)
    lines = [f"{fi.token:<{width}}  {fi.influence:+.4f}" for fi in items]
    return "\n".join(lines) + "\n"


def density_table_text(rows: Sequence[DomainDensityRow], top: int | None = None) -> str:
    """Render domain density as an aligned table; top limits the row count."""
    shown = rows if top is None else rows[:top]
    if not shown:
        return "(no domains)\n"
    width = max(len(r.domain) for r in shown)
    lines = [
        f"{r.domain:<{width}}  {r.char_fraction * 100:6.2f}%  {r.chars:>12d}"
        for r in shown
    ]
    return "\n".join(lines) + "\n"


def histogram_text(edges: Sequence[float], counts: Sequence[int], width: int = 50) -> str:
    """ASCII bar chart of a histogram."""
    peak = max(counts, default=0)
    lines = []
    for i, c in enumerate(counts):
        bar = "#" * (round(c / peak * width) if peak else 0)
        lines.append(f"[{edges[i]:>10.4g}, {edges[i + 1]:>10.4g}{']' if i == len(counts) - 1 else ')'} {c:>8d} {bar}")
    return "\n".join(lines) + "\n"


def histogram_svg(
    edges: Sequence[float],
    counts: Sequence[int],
    *,
    title: str = "",
    x_label: str = "",
    width: int = 640,
    height: int = 360,
) -> str:
    """Self-contained SVG bar chart (no plotting dependency)."""
    n = len(counts)
    if n == 0 or len(edges) != n + 1:
        raise ValueError("need len(edges) == len(counts) + 1 with counts non-empty")
    margin_l, margin_r, margin_t, margin_b = 50, 15, 30, 45
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    peak = max(max(counts), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{html.escape(title)}</text>'
        )
    bar_w = plot_w / n
    for i, c in enumerate(counts):
        h = plot_h * c / peak
        x = margin_l + i * bar_w
        y = margin_t + plot_h - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{max(bar_w - 1, 1):.2f}" '
            f'height="{h:.2f}" fill="#4878a8"/>'
        )
    axis_y = margin_t + plot_h
    parts.append(
        f'<line x1="{margin_l}" y1="{axis_y}" x2="{margin_l + plot_w}" y2="{axis_y}" '
        f'stroke="black"/>'
    )
    parts.append(
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{axis_y}" '
        f'stroke="black"/>'
    )
    # A few x ticks: first, middle, last edge.
    for frac, edge in ((0.0, edges[0]), (0.5, edges[n // 2]), (1.0, edges[-1])):
        x = margin_l + frac * plot_w
        parts.append(
            f'<text x="{x:.1f}" y="{axis_y + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{edge:g}</text>'
        )
    parts.append(
        f'<text x="{margin_l - 8}" y="{margin_t + 4}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">{peak}</text>'
    )
    parts.append(
        f'<text x="{margin_l - 8}" y="{axis_y}" text-anchor="end" '
        f'font-family="sans-serif" font-size="11">0</text>'
    )
    if x_label:
        parts.append(
            f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{html.escape(x_label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
