"""Throughput comparison of the compiled and pure-Python kernels.

Measures the two hot paths (batch scoring and supervised training) under
each loadable backend and prints an aligned table. Scoring outputs are
cross-checked between backends so the numbers compare identical work.

Usage:
    python3 benchmarks/bench_backends.py [--score-docs N] [--train-docs N] ...
"""

from __future__ import annotations

import argparse
import random
import tempfile
import time
from pathlib import Path

import numpy as np

from rankmatch import _backend
from rankmatch.classifier import Hyperparams, score_texts, train

WORD_CHARS = "abcdefghijklmnopqrstuvwxyz"


def make_words(rng: random.Random, n: int) -> list[str]:
    return ["".join(rng.choices(WORD_CHARS, k=rng.randint(2, 7))) for _ in range(n)]


def make_docs(rng: random.Random, n_docs: int, n_chars: int, words: list[str]) -> list[str]:
    weights = [1.0 / (i + 3) for i in range(len(words))]
    docs = []
    for _ in range(n_docs):
        docs.append(" ".join(rng.choices(words, weights, k=max(1, n_chars // 5)))[:n_chars])
    return docs


def write_training_file(rng: random.Random, n_docs: int, path: Path) -> Path:
    # two disjoint vocabularies make the task separable but the cost realistic
    pos_words = make_words(rng, 120)
    neg_words = [w.upper() for w in make_words(rng, 120)]
    lines = []
    for i in range(n_docs):
        label = "__label__pos" if i % 2 == 0 else "__label__neg"
        words = pos_words if i % 2 == 0 else neg_words
        lines.append(f"{label} {' '.join(rng.choices(words, k=120))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def bench_scoring(model, docs: list[str], repeats: int) -> tuple[float, np.ndarray]:
    best = float("inf")
    probs = None
    for _ in range(repeats):
        start = time.perf_counter()
        probs = score_texts(model, docs)
        best = min(best, time.perf_counter() - start)
    return len(docs) / best, probs


def bench_training(path: Path, hp: Hyperparams, n_docs: int) -> tuple[float, object]:
    start = time.perf_counter()
    model = train(path, hp)
    elapsed = time.perf_counter() - start
    return n_docs * hp.epochs / elapsed, model


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--score-docs", type=int, default=2000,
                        help="documents per scoring pass (default 2000)")
    parser.add_argument("--doc-chars", type=int, default=1000,
                        help="characters per document (default 1000)")
    parser.add_argument("--train-docs", type=int, default=400,
                        help="training documents (default 400)")
    parser.add_argument("--dim", type=int, default=100)
    parser.add_argument("--buckets", type=int, default=65536)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--repeats", type=int, default=3,
                        help="scoring repeats; the best run counts (default 3)")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    backends = _backend.available_backends()
    rng = random.Random(args.seed)
    words = make_words(rng, 200)
    docs = make_docs(rng, args.score_docs, args.doc_chars, words)
    hp = Hyperparams(dim=args.dim, buckets=args.buckets, epochs=args.epochs)

    with tempfile.TemporaryDirectory() as tmp:
        train_path = write_training_file(
            random.Random(args.seed + 1), args.train_docs, Path(tmp) / "train.txt"
        )
        print(f"backends: {', '.join(backends)}; scoring {args.score_docs} docs "
              f"x {args.doc_chars} chars; training {args.train_docs} docs "
              f"x {args.epochs} epochs (dim {args.dim}, {args.buckets} buckets)")
        print()
        header = f"{'backend':<8} {'score docs/s':>14} {'us/doc':>8} {'train updates/s':>16} {'train s':>9}"
        print(header)
        print("-" * len(header))

        results = {}
        for name in backends:
            _backend.activate(name)
            train_rate, model = bench_training(train_path, hp, args.train_docs)
            train_seconds = args.train_docs * args.epochs / train_rate
            score_rate, probs = bench_scoring(model, docs, args.repeats)
            results[name] = (model, probs)
            print(f"{name:<8} {score_rate:>14,.0f} {1e6 / score_rate:>8.1f} "
                  f"{train_rate:>16,.0f} {train_seconds:>9.2f}")
        _backend.activate(backends[0])

        if len(results) == 2:
            (m_a, p_a), (m_b, p_b) = results.values()
            scores_ok = bool(np.allclose(p_a, p_b, atol=1e-9))
            matrices_ok = bool(
                np.allclose(m_a.A, m_b.A, atol=1e-6) and np.allclose(m_a.B, m_b.B, atol=1e-6)
            )
            print()
            print(f"cross-check: scores agree (1e-9) = {scores_ok}; "
                  f"trained matrices agree (1e-6) = {matrices_ok}")
            if not (scores_ok and matrices_ok):
                return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
