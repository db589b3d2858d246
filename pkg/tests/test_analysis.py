import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rankmatch.analysis import (
    DomainDensityRow,
    covering_edges,
    density_table_text,
    domain_density,
    feature_influence,
    histogram_svg,
    histogram_text,
    influence_decomposition_check,
    influence_table_text,
    length_histogram,
    top_features,
)
from rankmatch.classifier import EOS, ClassifierModel, Hyperparams
from rankmatch.corpus import Document
from rankmatch.errors import EmptyInputError

import synthdata


def hand_model(vocab, A_rows, B, buckets=4):
    """A model with exact float32 integer-valued matrices."""
    n = len(vocab)
    A = np.zeros((n + buckets, len(A_rows[0])), dtype=np.float32)
    A[:n] = np.asarray(A_rows, dtype=np.float32)
    return ClassifierModel(
        vocab=dict(vocab),
        token_counts={t: 1 for t in vocab},
        A=A,
        B=np.asarray(B, dtype=np.float32),
        hyperparams=Hyperparams(dim=len(A_rows[0]), buckets=buckets),
    )


class TestFeatureInfluence:
    def test_hand_computed_margin_dot(self):
        # margin = B0 - B1 = (1, -1); influence("a") = 1*1 + 2*(-1) = -1
        model = hand_model(
            {"a": 0, "b": 1},
            [[1.0, 2.0], [3.0, 1.0]],
            [[2.0, 0.0], [1.0, 1.0]],
        )
        assert feature_influence(model, "a").influence == -1.0
        assert feature_influence(model, "b").influence == 2.0

    def test_oov_token_raises(self):
        model = hand_model({"a": 0}, [[1.0]], [[1.0], [0.0]])
        with pytest.raises(LookupError, match="zzz"):
            feature_influence(model, "zzz")


class TestTopFeatures:
    def _model(self):
        # influences: a -> 3, b -> -2, c -> 3 (tie with a), d -> 0
        return hand_model(
            {"a": 0, "b": 1, "c": 2, "d": 3},
            [[3.0], [-2.0], [3.0], [0.0]],
            [[1.0], [0.0]],
        )

    def test_positive_ranking_with_tie_break(self):
        out = top_features(self._model(), k=3, sign="positive")
        assert [(fi.token, fi.influence) for fi in out] == [
            ("a", 3.0), ("c", 3.0), ("d", 0.0),
        ]

    def test_negative_ranking(self):
        out = top_features(self._model(), k=2, sign="negative")
        assert [fi.token for fi in out] == ["b", "d"]

    def test_k_beyond_vocab_returns_all(self):
        assert len(top_features(self._model(), k=99)) == 4

    def test_bucket_rows_excluded(self):
        model = self._model()
        model.A[model.n_words :] = 1e6  # hashed rows must never rank
        out = top_features(model, k=4)
        assert {fi.token for fi in out} == {"a", "b", "c", "d"}

    def test_bad_args(self):
        with pytest.raises(ValueError):
            top_features(self._model(), k=0)
        with pytest.raises(ValueError):
            top_features(self._model(), k=1, sign="sideways")


class TestInfluenceDecomposition:
    def test_exact_on_integer_model(self):
        model = hand_model(
            {"a": 0, "b": 1, EOS: 2},
            [[1.0, 2.0], [3.0, 4.0], [0.0, 0.0]],
            [[1.0, 0.0], [0.0, 1.0]],
        )
        report = influence_decomposition_check(model, "a b")
        # margin (1,-1); per-token: -1, -1, 0; hidden mean ((4,6)/3)
        assert report.n_features == 3
        assert report.logit_margin == pytest.approx(-2 / 3, rel=1e-15)
        assert report.mean_influence == pytest.approx(-2 / 3, rel=1e-15)
        assert report.rel_deviation <= 1e-12

    def test_zero_feature_text(self):
        model = hand_model({"a": 0}, [[1.0]], [[1.0], [0.0]])  # no EOS row
        report = influence_decomposition_check(model, "zzz qqq")
        assert report.n_features == 0
        assert report.logit_margin == 0.0
        assert report.rel_deviation == 0.0

    def test_holds_on_trained_model(self, small_model, rng):
        for frac in (0.0, 0.3, 0.6, 1.0):
            text = synthdata.words_text(rng, 400, frac)
            report = influence_decomposition_check(small_model, text)
            assert report.rel_deviation <= 1e-6
            assert report.n_features > 0


class TestDomainDensity:
    def _docs(self):
        return [
            Document(id="1", text="x" * 60, url="https://big.example/a"),
            Document(id="2", text="x" * 20, url="https://big.example/b"),
            Document(id="3", text="x" * 15, url="https://small.example/c"),
            Document(id="4", text="x" * 5),
        ]

    def test_counts_fractions_and_order(self):
        rows = domain_density(self._docs())
        assert [r.domain for r in rows] == ["big.example", "small.example", "(unknown)"]
        assert [r.chars for r in rows] == [80, 15, 5]
        assert sum(r.char_fraction for r in rows) == pytest.approx(1.0, abs=1e-12)
        assert rows[0].char_fraction == pytest.approx(0.8)

    def test_tie_breaks_by_name(self):
        docs = [
            Document(id="1", text="xx", url="https://b.example/"),
            Document(id="2", text="xx", url="https://a.example/"),
        ]
        rows = domain_density(docs)
        assert [r.domain for r in rows] == ["a.example", "b.example"]

    def test_zero_chars_rejected(self):
        with pytest.raises(EmptyInputError):
            domain_density([Document(id="1", text="")])

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyInputError):
            domain_density([])


class TestLengthHistogram:
    def _docs(self, *lengths):
        return [Document(id=str(i), text="x" * n) for i, n in enumerate(lengths)]

    def test_counts_and_mean(self):
        hist = length_histogram(self._docs(1, 5, 5, 9), [0, 5, 10])
        assert hist.counts == [1, 3]  # 5 sits on the internal edge, goes right
        assert hist.mean_chars == 5.0
        assert hist.total_docs == 4

    def test_max_value_lands_in_last_closed_bin(self):
        hist = length_histogram(self._docs(10), [0, 5, 10])
        assert hist.counts == [0, 1]

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="outside"):
            length_histogram(self._docs(11), [0, 5, 10])
        with pytest.raises(ValueError, match="outside"):
            length_histogram(self._docs(3), [5, 10])

    def test_bad_edges_rejected(self):
        for edges in ([], [1.0], [0, 5, 5], [0, 9, 3]):
            with pytest.raises(ValueError):
                length_histogram([], edges)

    def test_empty_corpus_is_zero_counts(self):
        hist = length_histogram([], [0, 10])
        assert hist.counts == [0]
        assert hist.mean_chars == 0.0
        assert hist.total_docs == 0

    def test_covering_edges_always_cover(self):
        lengths = [0, 3, 17, 400]
        edges = covering_edges(lengths, bins=8)
        assert len(edges) == 9
        assert edges[0] == 0.0
        assert edges[-1] == 401.0
        hist = length_histogram(self._docs(*lengths), edges)
        assert sum(hist.counts) == len(lengths)

    def test_covering_edges_validation(self):
        with pytest.raises(ValueError):
            covering_edges([1, 2], bins=0)
        assert covering_edges([], bins=2) == [0.0, 0.5, 1.0]


class TestTextRenderers:
    def test_influence_table(self):
        from rankmatch.analysis import FeatureInfluence

        text = influence_table_text(
            [FeatureInfluence("longtoken", 1.25), FeatureInfluence("x", -0.5)]
        )
        lines = text.splitlines()
        assert lines[0] == "longtoken  +1.2500"
        assert lines[1] == "x          -0.5000"

    def test_influence_table_empty(self):
        assert "no features" in influence_table_text([])

    def test_density_table_with_top(self):
        rows = [
            DomainDensityRow("a.example", 80, 0.8),
            DomainDensityRow("b.example", 20, 0.2),
        ]
        text = density_table_text(rows, top=1)
        assert "a.example" in text
        assert "b.example" not in text
        assert "80.00%" in text

    def test_histogram_text_scales_bars(self):
        text = histogram_text([0, 1, 2], [2, 4], width=10)
        lines = text.splitlines()
        assert lines[0].endswith("#" * 5)
        assert lines[1].endswith("#" * 10)
        assert lines[0].count("[") == 1 and lines[0].rstrip("#").rstrip().endswith("2")

    def test_histogram_text_all_zero(self):
        text = histogram_text([0, 1], [0])
        assert "#" not in text


class TestHistogramSvg:
    def test_well_formed_and_complete(self):
        svg = histogram_svg([0, 1, 2, 3], [5, 0, 2], title="t", x_label="chars")
        root = ET.fromstring(svg)
        assert root.tag.endswith("svg")
        rects = [el for el in root.iter() if el.tag.endswith("rect")]
        assert len(rects) == 1 + 3  # background + one bar per bin

    def test_title_is_escaped(self):
        svg = histogram_svg([0, 1], [1], title="<b> & more")
        assert "<b>" not in svg
        assert "&lt;b&gt;" in svg
        ET.fromstring(svg)

    def test_edge_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            histogram_svg([0, 1], [1, 2])
        with pytest.raises(ValueError):
            histogram_svg([0, 1], [])
