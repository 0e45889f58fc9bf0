import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from essayscore.corpus import (
    BOUNDARY_ID,
    N_SPECIALS,
    PAD_ID,
    UNK_ID,
    Corpus,
    ScoreRange,
    SplitSpec,
    Vocabulary,
    build_vocabulary,
    corrupt_window,
    encode_essays,
    extract_windows,
    ingest_asap_tsv,
    load_corpus,
    load_corpus_cache,
    read_manifest,
    read_range_table,
    save_corpus_cache,
    split_corpus,
    tokenize,
    write_manifest,
)
from essayscore.errors import ConfigError, DataError

from conftest import make_essay


class TestTokenize:
    def test_lowercases_and_splits_words(self):
        assert tokenize("Being patience is being") == \
            ["being", "patience", "is", "being"]

    def test_punctuation_is_standalone(self):
        assert tokenize("I hope you feel the same way .") == \
            ["i", "hope", "you", "feel", "the", "same", "way", "."]
        assert tokenize("Well, yes!") == ["well", ",", "yes", "!"]

    def test_anonymization_placeholders_kept_verbatim(self):
        assert tokenize("Dear @CAPS3, hello") == \
            ["Dear".lower(), "@CAPS3", ",", "hello"]
        assert tokenize("@LOCATION1 and @NUM2") == \
            ["@LOCATION1", "and", "@NUM2"]

    def test_lone_at_sign_is_not_a_placeholder(self):
        assert tokenize("a@b") == ["a", "@", "b"]

    def test_empty_text(self):
        assert tokenize("") == []
        assert tokenize("   ") == []

    def test_numbers_are_words(self):
        assert tokenize("in 1984 I was") == ["in", "1984", "i", "was"]


class TestVocabulary:
    def test_specials_occupy_first_ids(self):
        v = Vocabulary(["cat"])
        assert v.id_to_token[:N_SPECIALS] == ["<pad>", "<unk>", "<edge>"]
        assert v.id_of("cat") == N_SPECIALS

    def test_encode_maps_oov_to_unk(self):
        v = Vocabulary(["cat"])
        assert v.encode(["cat", "dog"]) == [3, UNK_ID]

    def test_decode_round_trip(self, tiny_vocab):
        ids = tiny_vocab.encode(["the", "cat", "sat"])
        assert tiny_vocab.decode(ids) == ["the", "cat", "sat"]

    def test_id_of_unknown_raises(self, tiny_vocab):
        with pytest.raises(KeyError):
            tiny_vocab.id_of("missing")

    def test_build_orders_by_frequency_then_token(self):
        seqs = [["b", "a", "a", "c", "c", "b", "a"]]
        v = build_vocabulary(seqs, min_count=1)
        assert v.id_to_token[N_SPECIALS:] == ["a", "b", "c"]

    def test_build_drops_rare_tokens(self):
        v = build_vocabulary([["a", "a", "b"]], min_count=2)
        assert "a" in v
        assert "b" not in v

    def test_build_rejects_bad_min_count(self):
        with pytest.raises(ConfigError):
            build_vocabulary([], min_count=0)

    def test_build_is_deterministic(self):
        seqs = [["x", "y", "z", "y"], ["z", "z", "x"]]
        a = build_vocabulary(seqs, min_count=1)
        b = build_vocabulary(list(reversed(seqs)), min_count=1)
        assert a.id_to_token == b.id_to_token


class TestScoreRange:
    def test_scale_endpoints(self):
        r = ScoreRange(2, 12)
        assert r.scale(2) == 0.0
        assert r.scale(12) == 1.0

    def test_round_trip_tight(self):
        r = ScoreRange(0, 60)
        for raw in np.linspace(0, 60, 121):
            assert abs(raw - r.unscale(r.scale(raw))) <= 1e-12

    def test_degenerate_range_maps_to_midpoint(self):
        r = ScoreRange(4, 4)
        assert r.scale(4) == 0.5
        assert r.unscale(r.scale(4)) == 4.0

    def test_clamp(self):
        r = ScoreRange(0, 10)
        assert r.clamp(-1) == 0
        assert r.clamp(11) == 10
        assert r.clamp(7) == 7


FIXTURE_TSV = """essay_id\tessay_set\tessay\tdomain1_score
1\t1\tDear local newspaper , I think effects computers have on people are great\t8
2\t1\tI hope you feel the same way .\t4
3\t2\tBeing patience is being understanding .\t3
"""


class TestIngest:
    def test_field_mapping(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text(FIXTURE_TSV)
        result = ingest_asap_tsv(p)
        assert len(result.essays) == 3
        first = result.essays[0]
        assert (first.essay_id, first.set_id, first.raw_score) == (1, 1, 8.0)
        assert first.tokens[:3] == ["dear", "local", "newspaper"]
        assert result.row_errors == []

    def test_observed_ranges_per_set(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text(FIXTURE_TSV)
        result = ingest_asap_tsv(p)
        assert result.ranges[1] == ScoreRange(4.0, 8.0)
        assert result.ranges[2] == ScoreRange(3.0, 3.0)

    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text("essay_id\tessay\n1\thello\n")
        with pytest.raises(DataError, match="essay_set"):
            ingest_asap_tsv(p)

    def test_bad_score_reported_with_line_number(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text("essay_id\tessay_set\tessay\tdomain1_score\n"
                     "1\t1\tfine essay here\t7\n"
                     "2\t1\tbroken essay\tN/A\n")
        result = ingest_asap_tsv(p)
        assert len(result.essays) == 1
        assert len(result.row_errors) == 1
        assert result.row_errors[0].line == 3
        assert "N/A" in result.row_errors[0].message

    def test_empty_essay_rejected(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text("essay_id\tessay_set\tessay\tdomain1_score\n"
                     "1\t1\t\t7\n")
        result = ingest_asap_tsv(p)
        assert result.essays == []
        assert result.row_errors[0].line == 2

    def test_supplied_ranges_filter_out_of_range_rows(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text(FIXTURE_TSV)
        result = ingest_asap_tsv(p, ranges={1: ScoreRange(0, 5),
                                            2: ScoreRange(0, 5)})
        assert [e.essay_id for e in result.essays] == [2, 3]
        assert len(result.row_errors) == 1

    def test_extra_columns_ignored(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text("essay_id\tessay_set\tessay\trater1\tdomain1_score\n"
                     "1\t1\tan essay\t9\t6\n")
        result = ingest_asap_tsv(p)
        assert result.essays[0].raw_score == 6.0

    def test_encode_essays_scales_scores(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text(FIXTURE_TSV)
        result = ingest_asap_tsv(p)
        vocab = build_vocabulary((e.tokens for e in result.essays), min_count=1)
        essays = encode_essays(result.essays, vocab, result.ranges)
        assert essays[0].scaled_score == 1.0
        assert essays[1].scaled_score == 0.0
        assert essays[2].scaled_score == 0.5


class TestRangeTable:
    def test_parse(self, tmp_path):
        p = tmp_path / "ranges.tsv"
        p.write_text("# set\tmin\tmax\n1\t2\t12\n8\t0\t60\n")
        ranges = read_range_table(p)
        assert ranges == {1: ScoreRange(2, 12), 8: ScoreRange(0, 60)}

    def test_rejects_inverted_range(self, tmp_path):
        p = tmp_path / "ranges.tsv"
        p.write_text("1\t10\t2\n")
        with pytest.raises(DataError):
            read_range_table(p)


def _essays(n, set_id=1):
    return [make_essay([3, 4, 5], essay_id=i, set_id=set_id, raw=i % 11)
            for i in range(1, n + 1)]


class TestSplit:
    def test_default_ratios_on_100(self):
        train, val, test = split_corpus(_essays(100))
        assert (len(train), len(val), len(test)) == (64, 16, 20)

    def test_partition(self):
        essays = _essays(37)
        train, val, test = split_corpus(essays)
        ids = sorted(e.essay_id for part in (train, val, test) for e in part)
        assert ids == sorted(e.essay_id for e in essays)

    def test_remainder_goes_to_train(self):
        train, val, test = split_corpus(_essays(7))
        assert len(val) == int(0.16 * 7)
        assert len(test) == int(0.20 * 7)
        assert len(train) == 7 - len(val) - len(test)

    def test_same_seed_same_split(self):
        a = split_corpus(_essays(50), SplitSpec(seed=3))
        b = split_corpus(_essays(50), SplitSpec(seed=3))
        assert [[e.essay_id for e in part] for part in a] == \
            [[e.essay_id for e in part] for part in b]

    def test_different_seed_different_split(self):
        a = split_corpus(_essays(100), SplitSpec(seed=0))
        b = split_corpus(_essays(100), SplitSpec(seed=1))
        assert {e.essay_id for e in a[2]} != {e.essay_id for e in b[2]}

    def test_order_insensitive(self):
        essays = _essays(40)
        a = split_corpus(essays)
        b = split_corpus(list(reversed(essays)))
        assert {e.essay_id for e in a[1]} == {e.essay_id for e in b[1]}
        assert {e.essay_id for e in a[2]} == {e.essay_id for e in b[2]}

    def test_stratified_by_set(self):
        essays = _essays(50, set_id=1) + \
            [make_essay([3], essay_id=i, set_id=2) for i in range(100, 150)]
        train, val, test = split_corpus(essays)
        for part in (val, test):
            by_set = {s: sum(1 for e in part if e.set_id == s) for s in (1, 2)}
            assert by_set[1] == by_set[2]

    def test_bad_ratios_rejected(self):
        with pytest.raises(ConfigError):
            split_corpus(_essays(10), SplitSpec(ratios=(0.5, 0.2, 0.2)))
        with pytest.raises(ConfigError):
            split_corpus(_essays(10), SplitSpec(ratios=(1.2, -0.1, -0.1)))

    def test_output_preserves_input_order(self):
        essays = _essays(30)
        train, _, _ = split_corpus(essays)
        ids = [e.essay_id for e in train]
        assert ids == sorted(ids)


class TestWindows:
    def test_three_token_essay_n3(self):
        e = make_essay([10, 11, 12])
        wins = extract_windows(e, 3)
        assert [w.context for w in wins] == [
            (BOUNDARY_ID, 10, 11), (10, 11, 12), (11, 12, BOUNDARY_ID)]
        assert all(w.center_index == 1 for w in wins)
        assert [w.target for w in wins] == [10, 11, 12]

    def test_one_window_per_token(self):
        e = make_essay(list(range(10, 27)))
        assert len(extract_windows(e, 9)) == 17

    def test_short_essay_mostly_boundary(self):
        e = make_essay([10, 11, 12, 13])
        for w in extract_windows(e, 9):
            assert sum(1 for t in w.context if t == BOUNDARY_ID) >= 4

    def test_even_or_tiny_n_rejected(self):
        e = make_essay([10, 11])
        with pytest.raises(ConfigError):
            extract_windows(e, 4)
        with pytest.raises(ConfigError):
            extract_windows(e, 1)

    def test_score_carried_on_every_window(self):
        e = make_essay([10, 11], raw=8.0)
        assert all(w.scaled_score == 0.8 for w in extract_windows(e, 3))


class TestCorruption:
    def test_only_center_differs(self, tiny_vocab):
        e = make_essay(tiny_vocab.encode(["the", "cat", "sat", "mat", "dog"]))
        sample = extract_windows(e, 5)[2]
        rng = np.random.default_rng(0)
        for ctx in corrupt_window(sample, 50, rng, tiny_vocab):
            assert ctx[:2] == sample.context[:2]
            assert ctx[3:] == sample.context[3:]
            assert ctx[2] != sample.target

    def test_replacements_are_real_words(self, tiny_vocab):
        e = make_essay([3, 4, 5])
        sample = extract_windows(e, 3)[1]
        rng = np.random.default_rng(1)
        for ctx in corrupt_window(sample, 100, rng, tiny_vocab):
            assert ctx[1] >= N_SPECIALS

    def test_uniform_over_candidates(self, tiny_vocab):
        # chi-square against uniform over the 9 non-target words
        e = make_essay([3, 4, 5])
        sample = extract_windows(e, 3)[1]
        rng = np.random.default_rng(2)
        draws = 9000
        counts = np.zeros(len(tiny_vocab))
        for ctx in corrupt_window(sample, draws, rng, tiny_vocab):
            counts[ctx[1]] += 1
        assert counts[sample.target] == 0
        candidates = counts[N_SPECIALS:]
        candidates = candidates[np.arange(N_SPECIALS, len(tiny_vocab))
                                != sample.target]
        expected = draws / candidates.size
        chi2 = float(((candidates - expected) ** 2 / expected).sum())
        # 8 degrees of freedom; the 0.999 quantile is about 26.12
        assert chi2 < 26.12

    def test_vocab_of_one_word_cannot_corrupt(self):
        vocab = Vocabulary(["only"])
        e = make_essay([3])
        sample = extract_windows(e, 3)[0]
        with pytest.raises(DataError):
            corrupt_window(sample, 1, np.random.default_rng(0), vocab)


class TestManifests:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "ids.txt"
        write_manifest(p, [5, 2, 9], config_hash="abc123")
        assert read_manifest(p) == [5, 2, 9]
        assert p.read_text().startswith("# config abc123\n")

    def test_rejects_garbage(self, tmp_path):
        p = tmp_path / "ids.txt"
        p.write_text("1\nxyz\n")
        with pytest.raises(DataError, match="xyz"):
            read_manifest(p)


class TestCorpusCache:
    def test_round_trip(self, tmp_path):
        tsv = tmp_path / "f.tsv"
        tsv.write_text(FIXTURE_TSV)
        corpus, _ = load_corpus(tsv, min_count=1)
        cache = tmp_path / "cache.json"
        save_corpus_cache(cache, corpus, config_hash="deadbeef")
        loaded, chash = load_corpus_cache(cache)
        assert chash == "deadbeef"
        assert loaded.vocab.id_to_token == corpus.vocab.id_to_token
        assert loaded.ranges == corpus.ranges
        assert [(e.essay_id, e.tokens, e.scaled_score) for e in loaded.essays] \
            == [(e.essay_id, e.tokens, e.scaled_score) for e in corpus.essays]

    def test_corrupt_cache_rejected(self, tmp_path):
        p = tmp_path / "cache.json"
        p.write_text("{not json")
        with pytest.raises(DataError):
            load_corpus_cache(p)

    def test_by_id_and_subset(self, tmp_path):
        tsv = tmp_path / "f.tsv"
        tsv.write_text(FIXTURE_TSV)
        corpus, _ = load_corpus(tsv, min_count=1)
        assert corpus.by_id(2).essay_id == 2
        with pytest.raises(KeyError):
            corpus.by_id(99)
        assert [e.essay_id for e in corpus.subset([3, 1])] == [1, 3]
        with pytest.raises(DataError):
            corpus.subset([1, 99])


@given(st.floats(min_value=0.0, max_value=60.0,
                 allow_nan=False, allow_infinity=False))
def test_scaling_round_trip_property(raw):
    r = ScoreRange(0, 60)
    assert abs(raw - r.unscale(r.scale(raw))) <= 1e-12


@given(st.lists(st.text(alphabet="abc @.X3", min_size=0, max_size=12),
                max_size=8))
def test_tokenize_never_emits_empty_tokens(texts):
    for text in texts:
        for tok in tokenize(text):
            assert tok
            assert " " not in tok


@settings(max_examples=30)
@given(st.lists(st.integers(min_value=1, max_value=10_000),
                min_size=1, max_size=120, unique=True),
       st.integers(min_value=0, max_value=2 ** 40))
def test_split_is_always_a_partition(ids, seed):
    essays = [make_essay([3, 4], essay_id=i) for i in ids]
    train, val, test = split_corpus(essays, SplitSpec(seed=seed))
    combined = sorted(e.essay_id for part in (train, val, test) for e in part)
    assert combined == sorted(ids)
    n = len(ids)
    assert len(test) == int(np.floor(0.20 * n + 1e-9))
    assert len(val) == int(np.floor(0.16 * n + 1e-9))
