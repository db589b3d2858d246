"""Predictive-strength scoring: how well per-model compression rank-predicts
model capability rank.

Given a roster of N models ordered by ascending benchmark score and one BPC
value per model for a document, the strength is the fraction of model pairs
(i worse than j) where the worse model compresses the document strictly worse
read off as bpc_i > bpc_j. 1.0 means compression order inverts capability
order exactly (better models compress this doc better), 0.0 means it tracks
it; ties count as 0.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .compression import LossTable
from .corpus import sidecar_manifest_path
from .errors import (
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    FormatError,
    RecordError,
    SchemaError,
)


def pair_count(n: int) -> int:
    """Number of unordered model pairs, the strength denominator."""
    return n * (n - 1) // 2


def predictive_strength(bpc_by_model: Sequence[float], n_models: int | None = None) -> float:
    """Strength of one document from its per-model BPC vector.

    The vector must be ordered worst model first (ascending benchmark
    score). Requires at least 2 finite values; n_models, when given, is
    cross-checked against the vector length. Result is in [0, 1] and, absent
    ties, a multiple of 1/pair_count(N).
    """
    values = [float(v) for v in bpc_by_model]
    n = len(values)
    if n_models is not None and n_models != n:
        raise ValueError(f"expected {n_models} values, got {n}")
    if n < 2:
        raise DegenerateInputError(f"need at least 2 models, got {n}")
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite bpc value: {v}")
    hits = 0
    for i in range(n - 1):
        vi = values[i]
        for j in range(i + 1, n):
            if vi > values[j]:
                hits += 1
    return hits / pair_count(n)


def score_matrix(bpc: np.ndarray) -> np.ndarray:
    """Vectorized strength over a (docs, N) BPC matrix, columns ordered worst
    model first. Returns a float64 vector of per-doc strengths."""
    bpc = np.asarray(bpc, dtype=np.float64)
    if bpc.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {bpc.shape}")
    n = bpc.shape[1]
    if n < 2:
        raise DegenerateInputError(f"need at least 2 models, got {n}")
    if not np.isfinite(bpc).all():
        raise ValueError("non-finite bpc value in matrix")
    hits = np.zeros(bpc.shape[0], dtype=np.int64)
    for i in range(n - 1):
        for j in range(i + 1, n):
            hits += bpc[:, i] > bpc[:, j]
    return hits / float(pair_count(n))


@dataclass(frozen=True)
class ModelRoster:
    """Models with strictly increasing benchmark scores, worst first."""

    models: tuple[tuple[str, float], ...]

    def __post_init__(self):
        if len(self.models) < 2:
            raise ConfigError(f"roster needs at least 2 models, got {len(self.models)}")
        ordered = tuple(sorted(self.models, key=lambda ms: ms[1]))
        seen_ids = set()
        for model_id, score in ordered:
            if not isinstance(model_id, str) or not model_id:
                raise ConfigError(f"invalid model id: {model_id!r}")
            if model_id in seen_ids:
                raise ConfigError(f"duplicate model id: {model_id!r}")
            seen_ids.add(model_id)
            if not math.isfinite(float(score)):
                raise ConfigError(f"non-finite benchmark score for {model_id!r}")
        for (_, a), (_, b) in zip(ordered, ordered[1:]):
            if not (a < b):
                raise ConfigError(
                    f"tied benchmark scores ({a}); a strict capability order is required"
                )
        object.__setattr__(self, "models", ordered)

    @property
    def n(self) -> int:
        return len(self.models)

    @property
    def model_ids(self) -> list[str]:
        return [m for m, _ in self.models]

    @property
    def roster_hash(self) -> str:
        payload = json.dumps([[m, s] for m, s in self.models], sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]]) -> "ModelRoster":
        return cls(models=tuple((m, float(s)) for m, s in pairs))


def load_roster(path) -> ModelRoster:
    """Read a roster JSON list of {"model_id","benchmark_score"} objects."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc.msg}") from None
    if not isinstance(payload, list):
        raise FormatError(f"{path}: roster must be a JSON list")
    pairs = []
    for i, obj in enumerate(payload):
        if not isinstance(obj, dict) or "model_id" not in obj or "benchmark_score" not in obj:
            raise FormatError(f"{path}: entry {i} must have model_id and benchmark_score")
        score = obj["benchmark_score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)):
            raise FormatError(f"{path}: entry {i} benchmark_score is not a number")
        pairs.append((obj["model_id"], float(score)))
    return ModelRoster.from_pairs(pairs)


def save_roster(roster: ModelRoster, path) -> None:
    payload = [
        {"model_id": m, "benchmark_score": s} for m, s in roster.models
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


@dataclass
class StrengthTable:
    """Per-document strengths plus the roster fingerprint they were computed
    under. scores is ordered by doc_id ascending so serialization is
    byte-stable no matter how the loss rows were ordered."""

    scores: dict[str, float]
    roster_hash: str
    n_models: int

    def __post_init__(self):
        self.scores = dict(sorted(self.scores.items()))

    @property
    def z(self) -> int:
        return pair_count(self.n_models)


def score_corpus(losses: LossTable, roster: ModelRoster) -> StrengthTable:
    """Strength for every complete document in the loss table.

    Every roster model must be present in the table (SchemaError otherwise);
    extra models in the table are ignored.
    """
    table_models = set(losses.model_ids)
    missing = [m for m in roster.model_ids if m not in table_models]
    if missing:
        raise SchemaError(
            f"roster model(s) absent from loss table: {', '.join(missing)}"
        )
    order = roster.model_ids
    doc_ids = sorted(losses.doc_ids)
    bpc = np.empty((len(doc_ids), roster.n), dtype=np.float64)
    for r, doc_id in enumerate(doc_ids):
        for c, model_id in enumerate(order):
            bpc[r, c] = losses.entries[(doc_id, model_id)]
    strengths = score_matrix(bpc)
    return StrengthTable(
        scores={doc_id: float(s) for doc_id, s in zip(doc_ids, strengths)},
        roster_hash=roster.roster_hash,
        n_models=roster.n,
    )


def save_strength_table(table: StrengthTable, path) -> Path:
    """Write strengths as JSONL rows {"doc_id","strength"} (doc_id ascending)
    plus a sidecar manifest {"roster_hash","n_models","pair_count"}."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, strength in table.scores.items():
            fh.write(json.dumps({"doc_id": doc_id, "strength": strength}))
            fh.write("\n")
    manifest_path = sidecar_manifest_path(path)
    manifest = {
        "kind": "strength_table",
        "roster_hash": table.roster_hash,
        "N": table.n_models,
        "Z": table.z,
        "n_documents": len(table.scores),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_strength_table(path) -> StrengthTable:
    """Inverse of save_strength_table; requires the sidecar manifest."""
    path = Path(path)
    manifest_path = sidecar_manifest_path(path)
    if not manifest_path.exists():
        raise FormatError(f"missing strength manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{manifest_path}: not valid JSON: {exc.msg}") from None
    scores: dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                raise RecordError("blank line", path, line_no)
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON: {exc.msg}", path, line_no) from None
            doc_id = obj.get("doc_id")
            strength = obj.get("strength")
            if not isinstance(doc_id, str) or not isinstance(strength, (int, float)):
                raise RecordError("row needs string doc_id and numeric strength", path, line_no)
            if not (0.0 <= float(strength) <= 1.0):
                raise RecordError(f"strength out of [0,1]: {strength}", path, line_no)
            scores[doc_id] = float(strength)
    if not scores:
        raise EmptyInputError(f"strength table is empty: {path}")
    try:
        return StrengthTable(
            scores=scores,
            roster_hash=manifest["roster_hash"],
            n_models=int(manifest["N"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{manifest_path}: malformed manifest: {exc}") from None


@dataclass
class Histogram:
    """Equal-width histogram; the last bin is closed on the right."""

    bin_edges: list[float]
    counts: list[int]

    @property
    def total(self) -> int:
        return sum(self.counts)


def strength_histogram(scores, bins: int = 20) -> Histogram:
    """Histogram of strengths over [0, 1]. scores may be a StrengthTable, a
    mapping, or an iterable of floats."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if isinstance(scores, StrengthTable):
        values = list(scores.scores.values())
    elif isinstance(scores, Mapping):
        values = list(scores.values())
    else:
        values = [float(s) for s in scores]
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and ((arr < 0.0) | (arr > 1.0)).any():
        raise ValueError("strength values must lie in [0, 1]")
    counts, edges = np.histogram(arr, bins=bins, range=(0.0, 1.0))
    return Histogram(bin_edges=[float(e) for e in edges], counts=[int(c) for c in counts])
