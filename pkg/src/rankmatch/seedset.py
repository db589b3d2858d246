"""Turn a strength table into a labeled classifier training set.

Positives are drawn from the top of the strength distribution, negatives
from the bottom. Strengths are discrete (multiples of 1/pair_count), so many
documents tie at each level; whole levels are taken while they fit and the
boundary level is uniformly subsampled with a seeded RNG.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from .corpus import sidecar_manifest_path
from .errors import CapacityError, EmptyInputError, OverlapError
from .strength import StrengthTable

LABEL_POS = "__label__pos"
LABEL_NEG = "__label__neg"


@dataclass
class SeedSet:
    """Selected doc ids per class plus the score cutoffs actually used.

    pos_cutoff is the lowest strength any positive has; neg_cutoff is the
    highest strength any negative has; pos_cutoff >= neg_cutoff always.
    """

    positives: list[str]
    negatives: list[str]
    pos_cutoff: float
    neg_cutoff: float
    rng_seed: int


def _take_levels(levels: list[tuple[float, list[str]]], target: int):
    """Take whole levels in the given order while they fit.

    Returns (taken_ids, boundary_index, remaining). boundary_index is the
    level that did not fully fit (None when whole levels covered the target).
    """
    taken: list[str] = []
    for idx, (_value, ids) in enumerate(levels):
        need = target - len(taken)
        if need == 0:
            return taken, None, 0
        if len(ids) <= need:
            taken.extend(ids)
        else:
            return taken, idx, need
    need = target - len(taken)
    if need > 0:
        raise CapacityError(f"ran out of documents with {need} still needed")
    return taken, None, 0


def select_seed_examples(
    table: StrengthTable,
    pos_target: int,
    neg_target: int,
    rng_seed: int,
) -> SeedSet:
    """Pick pos_target ids from the top strengths and neg_target from the
    bottom, disjointly.

    Deterministic in (table, targets, rng_seed). Whole score levels are
    consumed outside-in; each boundary level is subsampled uniformly. When
    both classes land on the same boundary level one shuffle splits it
    front/back, so the sets stay disjoint; the capacity check guarantees the
    split fits.
    """
    if pos_target < 1 or neg_target < 1:
        raise ValueError("pos_target and neg_target must be >= 1")
    n = len(table.scores)
    if n == 0:
        raise EmptyInputError("strength table is empty")
    if pos_target + neg_target > n:
        raise CapacityError(
            f"requested {pos_target}+{neg_target} examples from {n} documents"
        )

    by_level: dict[float, list[str]] = {}
    for doc_id, score in table.scores.items():
        by_level.setdefault(score, []).append(doc_id)
    for ids in by_level.values():
        ids.sort()
    desc = [(v, by_level[v]) for v in sorted(by_level, reverse=True)]
    asc = list(reversed(desc))

    pos_full, pos_boundary, pos_need = _take_levels(desc, pos_target)
    neg_full, neg_boundary, neg_need = _take_levels(asc, neg_target)

    rng = random.Random(rng_seed)
    positives = list(pos_full)
    negatives = list(neg_full)

    pos_level = desc[pos_boundary][0] if pos_boundary is not None else None
    neg_level = asc[neg_boundary][0] if neg_boundary is not None else None

    if pos_level is not None and neg_level is not None and pos_level < neg_level:
        # Unreachable when the capacity check holds; kept as a guard against
        # double-spending a level.
        raise OverlapError(
            f"positive boundary {pos_level} fell below negative boundary {neg_level}"
        )

    if pos_level is not None and pos_level == neg_level:
        ids = list(desc[pos_boundary][1])
        if pos_need + neg_need > len(ids):
            raise OverlapError(
                f"boundary level {pos_level} has {len(ids)} docs; "
                f"need {pos_need}+{neg_need}"
            )
        rng.shuffle(ids)
        positives.extend(sorted(ids[:pos_need]))
        negatives.extend(sorted(ids[len(ids) - neg_need :]))
    else:
        if pos_level is not None:
            ids = list(desc[pos_boundary][1])
            rng.shuffle(ids)
            positives.extend(sorted(ids[:pos_need]))
        if neg_level is not None:
            ids = list(asc[neg_boundary][1])
            rng.shuffle(ids)
            negatives.extend(sorted(ids[:neg_need]))

    pos_cutoff = min(table.scores[d] for d in positives)
    neg_cutoff = max(table.scores[d] for d in negatives)
    if set(positives) & set(negatives):
        raise OverlapError("positive and negative selections overlap")
    return SeedSet(
        positives=positives,
        negatives=negatives,
        pos_cutoff=pos_cutoff,
        neg_cutoff=neg_cutoff,
        rng_seed=rng_seed,
    )


def emit_training_file(
    seedset: SeedSet,
    text_lookup: Mapping[str, str] | Callable[[str], str],
    path,
) -> int:
    """Write one labeled line per selected document and a sidecar manifest.

    Line format: "__label__pos <text>" / "__label__neg <text>" with newlines
    flattened to spaces. Lines from both classes are shuffled together with
    the seed-set RNG seed so training order is deterministic. Returns the
    number of lines written. An id the lookup cannot resolve raises
    LookupError naming it.
    """
    if callable(text_lookup) and not isinstance(text_lookup, Mapping):
        get_text = text_lookup
    else:
        get_text = text_lookup.__getitem__

    entries = [(LABEL_POS, doc_id) for doc_id in seedset.positives]
    entries += [(LABEL_NEG, doc_id) for doc_id in seedset.negatives]
    rng = random.Random(seedset.rng_seed)
    rng.shuffle(entries)

    path = Path(path)
    written = 0
    with open(path, "w", encoding="utf-8") as fh:
        for label, doc_id in entries:
            try:
                text = get_text(doc_id)
            except KeyError:
                raise LookupError(f"no text found for doc id {doc_id!r}") from None
            if not isinstance(text, str):
                raise LookupError(f"no text found for doc id {doc_id!r}")
            flat = text.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
            fh.write(f"{label} {flat}\n")
            written += 1

    manifest = {
        "kind": "seed_set",
        "pos_target": len(seedset.positives),
        "neg_target": len(seedset.negatives),
        "pos_cutoff": seedset.pos_cutoff,
        "neg_cutoff": seedset.neg_cutoff,
        "rng_seed": seedset.rng_seed,
    }
    sidecar_manifest_path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return written
