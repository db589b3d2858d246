import logging
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankmatch import _backend
from rankmatch.classifier import (
    EOS,
    ClassifierModel,
    Hyperparams,
    build_vocab,
    featurize,
    init_matrices,
    predict,
    predict_unigram_only,
    read_training_file,
    score_texts,
    tokenize,
    train,
    training_accuracy,
    zero_eos,
)
from rankmatch.errors import (
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    LabelError,
    RecordError,
)
from rankmatch.seedset import LABEL_NEG, LABEL_POS

import synthdata

# tiny corpora need more passes and a hotter rate than the full-scale recipe
TINY_HP = Hyperparams(dim=16, buckets=512, epochs=15, lr=0.5, seed=17)


class TestTokenize:
    def test_splits_on_ascii_whitespace_runs(self):
        assert tokenize("a b\tc\nd\r\ne") == ["a", "b", "c", "d", "e", EOS]
        assert tokenize("  padded   out  ") == ["padded", "out", EOS]

    def test_appends_eos(self):
        assert tokenize("word")[-1] == EOS

    def test_empty_text_is_just_eos(self):
        assert tokenize("") == [EOS]
        assert tokenize(" \t ") == [EOS]

    def test_non_ascii_whitespace_stays_inside_tokens(self):
        # NBSP and EM SPACE are not separators
        assert tokenize("a b") == ["a b", EOS]
        assert tokenize("a b") == ["a b", EOS]

    def test_punctuation_is_not_special(self):
        assert tokenize("end. start") == ["end.", "start", EOS]

    def test_information_separator_controls_are_token_chars(self):
        # \x1c-\x1f are whitespace to str.split() but not to this tokenizer
        assert tokenize("a\x1cb \x1d\x1e\x1f c") == ["a\x1cb", "\x1d\x1e\x1f", "c", EOS]

    @given(
        st.text(
            alphabet=st.sampled_from(list("ab\x1c\x1f\xa0 xyz.?") + list(" \t\n\r\x0b\x0c")),
            max_size=80,
        )
    )
    def test_fast_and_reference_paths_agree(self, text):
        reference = [t for t in re.split(r"[ \t\n\r\v\f]+", text) if t] + [EOS]
        assert tokenize(text) == reference


class TestHyperparams:
    def test_published_defaults(self):
        hp = Hyperparams()
        assert hp.lr == 0.1
        assert hp.dim == 100
        assert hp.epochs == 5
        assert hp.word_ngrams == 2
        assert hp.min_count == 1
        assert hp.buckets == 2_000_000
        assert hp.min_n == 0
        assert hp.max_n == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lr": 0.0},
            {"lr": -0.1},
            {"dim": 0},
            {"epochs": 0},
            {"word_ngrams": 3},
            {"word_ngrams": 0},
            {"min_count": 0},
            {"buckets": 0},
            {"min_n": 1},
            {"max_n": 2},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            Hyperparams(**kwargs).validate()

    def test_subword_rejection_message_is_explicit(self):
        with pytest.raises(ConfigError, match="subword"):
            Hyperparams(min_n=2, max_n=4).validate()


class TestReadTrainingFile:
    def test_labels_and_texts(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text(
            f"{LABEL_POS} good text\n{LABEL_NEG} bad text\n{LABEL_POS} more\n"
        )
        texts, labels = read_training_file(path)
        assert texts == ["good text", "bad text", "more"]
        assert labels.tolist() == [0, 1, 0]
        assert labels.dtype == np.int8

    def test_label_only_line_keeps_empty_text(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text(f"{LABEL_POS}\n{LABEL_NEG} x\n")
        texts, labels = read_training_file(path)
        assert texts == ["", "x"]

    def test_malformed_label_raises_with_line(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text(f"{LABEL_POS} fine\n__label__maybe odd\n")
        with pytest.raises(RecordError, match=r":2"):
            read_training_file(path)

    def test_blank_line_rejected(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text(f"{LABEL_POS} a\n\n{LABEL_NEG} b\n")
        with pytest.raises(RecordError, match="blank"):
            read_training_file(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text("")
        with pytest.raises(EmptyInputError):
            read_training_file(path)

    def test_single_class_rejected(self, tmp_path):
        path = tmp_path / "t.txt"
        path.write_text(f"{LABEL_POS} a\n{LABEL_POS} b\n")
        with pytest.raises(LabelError):
            read_training_file(path)


class TestBuildVocab:
    def test_ids_by_count_desc_then_token(self):
        lists = [["b", "a", "b", EOS], ["a", "b", EOS]]
        vocab, counts = build_vocab(lists, min_count=1)
        # b:3, a:2, EOS:2 -> b first; "</s>" < "a" lexicographically
        assert vocab == {"b": 0, EOS: 1, "a": 2}
        assert counts == {"b": 3, EOS: 2, "a": 2}

    def test_min_count_filters(self):
        lists = [["common", "rare", EOS], ["common", EOS]]
        vocab, _ = build_vocab(lists, min_count=2)
        assert "rare" not in vocab
        assert "common" in vocab

    def test_eos_survives_min_count(self):
        vocab, _ = build_vocab([["x", EOS]], min_count=5)
        assert EOS in vocab
        assert "x" not in vocab


class TestInitMatrices:
    def test_shapes_dtypes_and_range(self):
        hp = Hyperparams(dim=8, buckets=100, seed=3)
        A, B = init_matrices(7, hp)
        assert A.shape == (107, 8)
        assert A.dtype == np.float32
        assert B.shape == (2, 8)
        assert not B.any()
        assert float(A.max()) < 1 / 8
        assert float(A.min()) >= -1 / 8

    def test_seed_determinism(self):
        hp = Hyperparams(dim=4, buckets=50, seed=11)
        A1, _ = init_matrices(3, hp)
        A2, _ = init_matrices(3, hp)
        assert A1.tobytes() == A2.tobytes()
        A3, _ = init_matrices(3, Hyperparams(dim=4, buckets=50, seed=12))
        assert A1.tobytes() != A3.tobytes()

    def test_matches_reference_construction(self):
        hp = Hyperparams(dim=10, buckets=20, seed=17)
        A, _ = init_matrices(5, hp)
        rng = np.random.default_rng(17)
        ref = rng.random((25, 10), dtype=np.float32)
        ref *= np.float32(2.0 / 10)
        ref -= np.float32(1.0 / 10)
        np.testing.assert_array_equal(A, ref)


class TestTrain:
    def test_separates_training_data(self, backend, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 40, seed=11)
        model = train(path, TINY_HP)
        assert training_accuracy(model, path) >= 0.99

    def test_repeat_run_is_byte_identical(self, backend, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 30, seed=12)
        m1 = train(path, TINY_HP)
        m2 = train(path, TINY_HP)
        assert m1.A.tobytes() == m2.A.tobytes()
        assert m1.B.tobytes() == m2.B.tobytes()
        assert m1.vocab == m2.vocab

    def test_model_shape_metadata(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 10, seed=13)
        model = train(path, TINY_HP)
        assert model.A.shape == (model.n_words + TINY_HP.buckets, TINY_HP.dim)
        assert model.B.shape == (2, TINY_HP.dim)
        assert model.buckets == TINY_HP.buckets
        assert model.dim == TINY_HP.dim
        assert not model.eos_zeroed

    def test_record_lr_schedule(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 5, seed=14)
        texts, _ = read_training_file(path)
        model = train(path, TINY_HP, record_lr=True)
        n = len(texts)
        total = TINY_HP.epochs * n
        assert model.lr_trace.shape == (total,)
        expected = TINY_HP.lr * (1.0 - np.arange(total) / total)
        np.testing.assert_allclose(model.lr_trace, expected, rtol=1e-15)

    def test_record_lr_needs_single_thread(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 5, seed=15)
        with pytest.raises(ConfigError):
            train(path, TINY_HP, threads=2, record_lr=True)

    def test_bad_thread_count(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 5, seed=15)
        with pytest.raises(ConfigError):
            train(path, TINY_HP, threads=0)

    def test_multithreaded_training_still_separates(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 40, seed=16)
        model = train(path, TINY_HP, threads=4)
        assert training_accuracy(model, path) >= 0.99

    def test_invalid_hyperparams_rejected_before_reading(self, tmp_path):
        with pytest.raises(ConfigError):
            train(tmp_path / "absent.txt", Hyperparams(lr=-1.0))


class TestPredict:
    def test_probabilities_complement(self, small_model):
        pred = predict(small_model, "some words here")
        assert pred.p_pos + pred.p_neg == pytest.approx(1.0, abs=1e-12)
        assert 0.0 <= pred.p_pos <= 1.0

    def test_class_direction(self, small_model, rng):
        clean = synthdata.clean_text(rng, 400)
        noise = synthdata.noise_text(rng, 400)
        assert predict(small_model, clean).p_pos > 0.9
        assert predict(small_model, noise).p_pos < 0.1

    def test_score_texts_matches_predict(self, small_model, rng):
        texts = [synthdata.words_text(rng, 200, f) for f in (0.0, 0.4, 1.0)]
        batch = score_texts(small_model, texts)
        singles = [predict(small_model, t).p_pos for t in texts]
        np.testing.assert_allclose(batch, singles, atol=1e-12)

    def test_unigram_only_path(self, small_model, rng):
        text = synthdata.words_text(rng, 300, 0.3)
        uni = predict_unigram_only(small_model, text)
        batch = score_texts(small_model, [text], unigram_only=True)
        assert batch[0] == pytest.approx(uni.p_pos, abs=1e-12)
        # small model: unigram-only should stay close to the full score
        full = predict(small_model, text)
        assert abs(full.p_pos - uni.p_pos) < 0.25

    def test_backends_agree_on_scoring(self, small_model, rng):
        if "cython" not in _backend.available_backends():
            pytest.skip("compiled kernel not built")
        texts = [synthdata.words_text(rng, 250, f) for f in (0.0, 0.2, 0.5, 0.8, 1.0)]
        prev = _backend.backend_name()
        try:
            _backend.activate("cython")
            p_c = score_texts(small_model, texts)
            _backend.activate("python")
            p_p = score_texts(small_model, texts)
        finally:
            _backend.activate(prev)
        np.testing.assert_allclose(p_c, p_p, atol=1e-9, rtol=0)


class TestZeroEos:
    def _fresh_model(self, tmp_path):
        path = synthdata.write_training_file(tmp_path / "t.txt", 20, seed=19)
        return train(path, TINY_HP)

    def test_zeroes_row_and_flags(self, tmp_path):
        model = self._fresh_model(tmp_path)
        eos_id = model.vocab[EOS]
        assert model.A[eos_id].any()  # trained row is nonzero before
        zero_eos(model)
        assert not model.A[eos_id].any()
        assert model.eos_zeroed

    def test_idempotent_with_warning(self, tmp_path, caplog):
        model = self._fresh_model(tmp_path)
        zero_eos(model)
        snapshot = model.A.tobytes()
        with caplog.at_level(logging.WARNING):
            zero_eos(model)
        assert "already" in caplog.text
        assert model.A.tobytes() == snapshot

    def test_empty_text_scores_uniform_after_zeroing(self, tmp_path):
        model = self._fresh_model(tmp_path)
        zero_eos(model)
        pred = predict(model, "")
        assert (pred.p_pos, pred.p_neg) == (0.5, 0.5)

    def test_missing_eos_row_rejected(self):
        hp = Hyperparams(dim=2, buckets=4)
        model = ClassifierModel(
            vocab={"x": 0},
            token_counts={"x": 1},
            A=np.ones((5, 2), dtype=np.float32),
            B=np.zeros((2, 2), dtype=np.float32),
            hyperparams=hp,
        )
        with pytest.raises(DegenerateInputError):
            zero_eos(model)


class TestFeaturizeWrapper:
    def test_uses_active_backend(self, backend, small_model):
        ids = featurize(["</s>"], small_model.vocab, small_model.buckets)
        assert ids.tolist() == [small_model.vocab[EOS]]
