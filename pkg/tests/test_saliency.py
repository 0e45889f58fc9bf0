"""Token quality maps: gradients, binning, and the two renderers."""

import hashlib
import re

import numpy as np
import pytest

from essayscore.corpus import ScoreRange, Vocabulary
from essayscore.errors import DataError
from essayscore.lstm import forward_essay
from essayscore.saliency import (ANSI_SCALE, HEX_SCALE, QualityMap,
                                 TokenQuality, input_gradients, quality_bins,
                                 quality_map, quality_map_spans, render_ansi,
                                 render_html)

from conftest import finite_difference, make_essay, max_relative_error
from test_lstm import build_model


def words_vocab():
    return Vocabulary([f"w{k}" for k in range(8)])


def model_digest(model):
    h = hashlib.sha256()
    for name, arr in model.named_arrays():
        h.update(name.encode())
        h.update(arr.tobytes())
    return h.hexdigest()


class TestInputGradients:
    def test_matches_finite_differences_on_embedding_columns(self):
        model = build_model(vocab=8, embed_dim=3, seed=50, lstm_dim=2,
                            boost=8.0, mscale=1.0, peepholes="full")
        tokens = [3, 5, 7]  # distinct, so each column maps to one position
        pseudo = 1.0
        d_inputs = input_gradients(model, tokens, pseudo)

        def loss():
            y, _ = forward_essay(model, tokens)
            return (y - pseudo) ** 2

        numeric = finite_difference(loss, {"M": model.M})["M"]
        analytic = np.zeros_like(model.M)
        for t, tok in enumerate(tokens):
            analytic[:, tok] = d_inputs[t]
        assert max_relative_error({"M": analytic}, {"M": numeric},
                                  floor=1e-6) <= 1e-4

    def test_gradients_for_two_pseudo_scores_are_parallel(self):
        # d(y-p)^2/ds = 2(y-p) dy/ds, so the two maps differ by a scalar
        model = build_model(vocab=8, seed=51, boost=5.0)
        tokens = [1, 4, 2, 6]
        y, _ = forward_essay(model, tokens)
        d_max = input_gradients(model, tokens, 1.0)
        d_min = input_gradients(model, tokens, 0.0)
        assert np.allclose(d_max * (y - 0.0), d_min * (y - 1.0), rtol=1e-10)

    def test_zero_when_prediction_equals_pseudo_score(self):
        model = build_model(vocab=8, seed=52)
        tokens = [2, 3, 4]
        y, _ = forward_essay(model, tokens)
        assert np.all(input_gradients(model, tokens, y) == 0.0)

    def test_model_is_left_untouched(self):
        model = build_model(vocab=11, seed=53, bidirectional=True,
                            peepholes="diagonal")
        vocab = words_vocab()
        before = model_digest(model)
        essay = make_essay([3, 5, 7, 4, 6], raw=6.0)
        quality_map(model, essay, vocab)
        quality_map_spans(model, essay, vocab, span_len=2)
        assert model_digest(model) == before


class TestBins:
    def test_eight_distinct_values_fill_all_bins(self):
        q = np.array([3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0, 3.5])
        bins = quality_bins(q)
        # worst value 1.0 lands in bin 0, best 9.0 in bin 7
        assert bins[1] == 0
        assert bins[4] == 7
        assert sorted(bins) == list(range(8))

    def test_sixteen_values_give_pairs(self):
        q = np.arange(16.0)
        bins = quality_bins(q)
        assert list(bins) == [k // 2 for k in range(16)]

    def test_ties_split_by_position(self):
        bins = quality_bins(np.zeros(8))
        assert list(bins) == list(range(8))

    def test_short_essays_use_low_bins(self):
        assert list(quality_bins(np.array([0.5]))) == [0]
        assert list(quality_bins(np.array([2.0, 1.0]))) == [4, 0]
        assert list(quality_bins(np.array([1.0, 2.0, 3.0]))) == [0, 2, 5]

    def test_bins_are_monotone_in_quality(self):
        rng = np.random.default_rng(7)
        q = rng.normal(size=37)
        bins = quality_bins(q)
        order = np.argsort(q, kind="stable")
        assert list(bins[order]) == sorted(bins)

    def test_bins_ignore_positive_affine_rescaling(self):
        rng = np.random.default_rng(8)
        q = rng.normal(size=23)
        assert np.array_equal(quality_bins(q), quality_bins(3.0 * q + 11.0))

    def test_last_bin_is_clamped(self):
        assert max(quality_bins(np.arange(9.0))) == 7


class TestQualityMap:
    def test_entries_follow_gradient_magnitudes(self):
        model = build_model(vocab=11, seed=54, boost=5.0)
        vocab = words_vocab()
        tokens = [3, 5, 7, 5, 9]
        essay = make_essay(tokens, essay_id=17, raw=4.0)
        qmap = quality_map(model, essay, vocab)

        d_max = input_gradients(model, tokens, 1.0)
        d_min = input_gradients(model, tokens, 0.0)
        mag_max = np.linalg.norm(d_max, axis=1)
        mag_min = np.linalg.norm(d_min, axis=1)
        assert qmap.essay_id == 17
        assert qmap.tokens() == vocab.decode(tokens)
        for t, e in enumerate(qmap.entries):
            assert e.mag_max == pytest.approx(mag_max[t], rel=1e-12)
            assert e.mag_min == pytest.approx(mag_min[t], rel=1e-12)
            assert e.quality == pytest.approx(mag_min[t] - mag_max[t],
                                              rel=1e-12)
        assert qmap.mean_quality == pytest.approx(
            float(np.mean(mag_min - mag_max)), rel=1e-12)

    def test_predicted_score_is_clamped_and_unscaled(self):
        model = build_model(vocab=8, seed=55)
        model.W_yh[...] = 0.0
        vocab = words_vocab()
        essay = make_essay([3, 4], raw=5.0)
        model.b_y[0] = 0.25
        assert quality_map(model, essay, vocab).predicted == 0.25
        got = quality_map(model, essay, vocab,
                          score_range=ScoreRange(0, 10)).predicted
        assert got == 2.5
        model.b_y[0] = 1.4
        got = quality_map(model, essay, vocab,
                          score_range=ScoreRange(0, 10)).predicted
        assert got == 10.0

    def test_empty_essay_rejected(self):
        model = build_model(vocab=8)
        essay = make_essay([], raw=5.0)
        with pytest.raises(DataError):
            quality_map(model, essay, words_vocab())


class TestSpans:
    def test_long_span_reduces_to_whole_essay_map(self):
        model = build_model(vocab=11, seed=56, boost=5.0)
        vocab = words_vocab()
        essay = make_essay([3, 5, 7, 4], essay_id=9, raw=6.0)
        whole = quality_map(model, essay, vocab)
        for span_len in (4, 5, 100):
            spans = quality_map_spans(model, essay, vocab, span_len)
            assert spans.entries == whole.entries
            assert spans.predicted == whole.predicted

    def test_tiles_are_scored_in_isolation(self):
        model = build_model(vocab=11, seed=57, boost=5.0)
        vocab = words_vocab()
        tokens = [3, 5, 7, 4, 6]
        essay = make_essay(tokens, essay_id=4, raw=6.0)
        got = quality_map_spans(model, essay, vocab, span_len=2)
        assert got.tokens() == vocab.decode(tokens)
        assert got.predicted == quality_map(model, essay, vocab).predicted
        chunks = [tokens[0:2], tokens[2:4], tokens[4:5]]
        expected = []
        for chunk in chunks:
            sub = quality_map(model, make_essay(chunk, essay_id=4, raw=6.0),
                              vocab)
            expected.extend(sub.entries)
        assert got.entries == expected

    def test_bins_are_assigned_within_each_tile(self):
        model = build_model(vocab=11, seed=58, boost=5.0)
        vocab = words_vocab()
        essay = make_essay([3, 5, 7, 4, 6, 8], raw=6.0)
        got = quality_map_spans(model, essay, vocab, span_len=3)
        for start in (0, 3):
            tile = got.entries[start:start + 3]
            assert sorted(e.bin for e in tile) == [0, 2, 5]

    def test_bad_span_length_rejected(self):
        model = build_model(vocab=8)
        essay = make_essay([1, 2], raw=5.0)
        with pytest.raises(DataError):
            quality_map_spans(model, essay, words_vocab(), span_len=0)


def tiny_map():
    entries = [TokenQuality("alpha", 0.5, 0.1, -0.4, 0),
               TokenQuality("beta", 0.2, 0.3, 0.1, 3),
               TokenQuality("gamma", 0.1, 0.9, 0.8, 7)]
    return QualityMap(essay_id=12, predicted=0.62, entries=entries)


class TestRenderAnsi:
    def test_colored_output_uses_octile_codes(self):
        text = render_ansi(tiny_map())
        assert f"\x1b[38;5;{ANSI_SCALE[0]}malpha\x1b[0m" in text
        assert f"\x1b[38;5;{ANSI_SCALE[3]}mbeta\x1b[0m" in text
        assert f"\x1b[38;5;{ANSI_SCALE[7]}mgamma\x1b[0m" in text

    def test_stripping_codes_recovers_the_text(self):
        text = render_ansi(tiny_map())
        stripped = re.sub(r"\x1b\[[0-9;]*m", "", text)
        assert stripped == "alpha beta gamma"

    def test_monochrome_mode(self):
        assert render_ansi(tiny_map(), monochrome=True) == \
            "alpha[0] beta[3] gamma[7]"


class TestRenderHtml:
    def test_page_structure(self, tmp_path):
        path = tmp_path / "essay_12.html"
        render_html(tiny_map(), path, config_hash="cafe0123cafe0123")
        doc = path.read_text()
        assert doc.startswith("<!DOCTYPE html>")
        assert "essay 12, predicted 0.62" in doc
        assert '<meta name="config" content="cafe0123cafe0123">' in doc
        for word, bin_ in (("alpha", 0), ("beta", 3), ("gamma", 7)):
            assert word in doc
            assert HEX_SCALE[bin_] in doc

    def test_dark_bins_get_light_text(self, tmp_path):
        path = tmp_path / "out.html"
        render_html(tiny_map(), path)
        doc = path.read_text()
        assert doc.count("color:#f0f0f0") == 2  # bins 0 and 7
        assert doc.count("color:#111111") == 1  # bin 3
        assert '<meta name="config"' not in doc

    def test_tokens_are_escaped(self, tmp_path):
        entries = [TokenQuality("<script>", 0.1, 0.2, 0.1, 4)]
        qmap = QualityMap(essay_id=1, predicted=0.5, entries=entries)
        path = tmp_path / "esc.html"
        render_html(qmap, path)
        doc = path.read_text()
        assert "<script>" not in doc
        assert "&lt;script&gt;" in doc

    def test_empty_map_rejected(self, tmp_path):
        qmap = QualityMap(essay_id=1, predicted=0.5, entries=[])
        with pytest.raises(DataError):
            render_html(qmap, tmp_path / "never.html")
