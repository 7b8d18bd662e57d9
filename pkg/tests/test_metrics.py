import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import edit_ops, macro_prf, rates_from_ops
from ssdkit import _kernels, metrics
from ssdkit.metrics import (
    AlignmentCounts,
    align,
    asr_rates,
    cer,
    confusion_matrix,
    contains_vowel_description,
    evaluate_pairs,
    exact_match,
    macro_f1,
    macro_recall,
    normalize_transcript,
    token_f1,
)


class TestAlign:
    def test_identical(self):
        c = align(["x", "y"], ["x", "y"])
        assert (c.hits, c.substitutions, c.deletions, c.insertions) == (2, 0, 0, 0)

    def test_deletion_case(self):
        c = align("a b c".split(), "a c".split())
        assert (c.hits, c.substitutions, c.deletions, c.insertions) == (2, 0, 1, 0)

    def test_empty_ref(self):
        c = align([], ["x", "y"])
        assert (c.hits, c.substitutions, c.deletions, c.insertions) == (0, 0, 0, 2)

    def test_tiebreak_prefers_substitution(self):
        c = align(["a"], ["b"])
        assert (c.substitutions, c.insertions, c.deletions) == (1, 0, 0)

    def test_matches_oracle_on_random_pairs(self):
        rng = np.random.default_rng(123)
        for _ in range(300):
            ref = [str(v) for v in rng.integers(0, 5, rng.integers(0, 13))]
            hyp = [str(v) for v in rng.integers(0, 5, rng.integers(0, 13))]
            c = align(ref, hyp)
            assert (c.hits, c.substitutions, c.deletions, c.insertions) == edit_ops(ref, hyp)

    def test_numpy_and_numba_backends_agree(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            ref = rng.integers(0, 4, rng.integers(0, 15)).astype(np.int32)
            hyp = rng.integers(0, 4, rng.integers(0, 15)).astype(np.int32)
            expected = _kernels.levenshtein_counts_numpy(ref, hyp)
            if _kernels.levenshtein_counts_numba is not None:
                assert _kernels.levenshtein_counts_numba(ref, hyp) == expected
            assert _kernels.levenshtein_counts(ref, hyp) == expected


class TestRates:
    def test_identical(self):
        assert asr_rates(align(["a"], ["a"])) == (0.0, 0.0, 1.0)

    def test_deletion_example(self):
        wer, mer, wip = asr_rates(align("a b c".split(), "a c".split()))
        assert wer == pytest.approx(1 / 3)
        assert mer == pytest.approx(1 / 3)
        assert wip == pytest.approx((2 / 3) * (2 / 2))

    def test_empty_hyp(self):
        wer, mer, wip = asr_rates(align("a b c".split(), []))
        assert (wer, mer, wip) == (1.0, 1.0, 0.0)

    def test_empty_ref_nonempty_hyp(self):
        wer, mer, wip = asr_rates(align([], ["x"]))
        assert math.isnan(wer)
        assert (mer, wip) == (1.0, 0.0)

    def test_both_empty(self):
        assert asr_rates(align([], [])) == (0.0, 0.0, 1.0)

    def test_wer_above_one_is_representable(self):
        wer, _, _ = asr_rates(align(["a"], ["b", "c", "d"]))
        assert wer == 3.0

    def test_mer_wip_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            ref = [str(v) for v in rng.integers(0, 3, rng.integers(0, 10))]
            hyp = [str(v) for v in rng.integers(0, 3, rng.integers(0, 10))]
            wer, mer, wip = asr_rates(align(ref, hyp))
            assert 0.0 <= mer <= 1.0
            assert 0.0 <= wip <= 1.0


class TestCer:
    def test_identical(self):
        assert cer("same text", "same text") == 0.0

    def test_single_substitution(self):
        assert cer("cat", "cut") == pytest.approx(1 / 3)

    def test_empty_ref_flagged(self):
        assert math.isnan(cer("", "ab"))

    def test_normalization_applies(self):
        assert cer("The CAT!", "the cat") == 0.0


class TestEmTokenF1:
    def test_identical(self):
        assert exact_match("a b", "a b") == 1
        assert token_f1("a b", "a b") == 1.0

    def test_partial_overlap(self):
        assert exact_match("the cat sat", "the cat") == 0
        assert token_f1("the cat sat", "the cat") == pytest.approx(0.8)

    def test_disjoint(self):
        assert token_f1("a b", "c d") == 0.0

    def test_both_empty(self):
        assert exact_match("", "  ") == 1
        assert token_f1("", "") == 1.0

    def test_multiplicity_counts(self):
        # "a a" vs "a": common 1, precision 1, recall 1/2
        assert token_f1("a a", "a") == pytest.approx(2 * (1 * 0.5) / 1.5)


class TestNormalize:
    def test_punctuation_and_case(self):
        assert normalize_transcript("The CAT, sat.") == ["the", "cat", "sat"]

    def test_hyphen_compound_survives(self):
        assert normalize_transcript("close-front-round-vowel") == ["close-front-round-vowel"]

    def test_whitespace_only(self):
        assert normalize_transcript("  ") == []

    def test_apostrophes_kept_inside_words(self):
        assert normalize_transcript("don't stop") == ["don't", "stop"]

    def test_edge_punct_stripped(self):
        assert normalize_transcript("-dash 'quote'") == ["dash", "quote"]

    @given(st.text(max_size=80))
    @settings(max_examples=200, deadline=None)
    def test_idempotent(self, text):
        once = normalize_transcript(text)
        again = normalize_transcript(" ".join(once))
        assert once == again


class TestVowelDescription:
    def test_paper_style_annotation(self):
        assert contains_vowel_description("close-front-round-vowel post-test no-context")

    def test_plain_sentence(self):
        assert not contains_vowel_description("the cat sat on the mat")

    def test_bare_vowel_token(self):
        assert not contains_vowel_description("vowel")

    def test_markers_alone(self):
        assert contains_vowel_description("post-test")
        assert contains_vowel_description("speech no-context speech")

    def test_repeated_term_compound_not_flagged(self):
        assert not contains_vowel_description("they stood back-to-back")

    def test_two_feature_compound_flagged(self):
        assert contains_vowel_description("a mid-back sound")


class TestMacroScores:
    def test_perfect(self):
        assert macro_f1(["a", "b"], ["a", "b"], ["a", "b"]) == 1.0
        assert macro_recall(["a", "b"], ["a", "b"], ["a", "b"]) == 1.0

    def test_all_one_class(self):
        preds = ["a"] * 4
        golds = ["a", "a", "b", "b"]
        assert macro_f1(preds, golds, ["a", "b"]) == pytest.approx(1 / 3)
        assert macro_recall(preds, golds, ["a", "b"]) == pytest.approx(0.5)

    def test_matches_oracle_on_random_fixtures(self):
        rng = np.random.default_rng(31)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            classes = [f"c{i}" for i in range(k)]
            n = int(rng.integers(1, 60))
            golds = [classes[i] for i in rng.integers(0, k, n)]
            preds = [classes[i] if rng.random() > 0.1 else None for i in rng.integers(0, k, n)]
            of1, orec = macro_prf(preds, golds, classes)
            assert macro_f1(preds, golds, classes) == pytest.approx(of1, abs=1e-12)
            assert macro_recall(preds, golds, classes) == pytest.approx(orec, abs=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        classes = ["a", "b", "c"]
        golds = [classes[i] for i in rng.integers(0, 3, 50)]
        preds = [classes[i] for i in rng.integers(0, 3, 50)]
        mapping = {"a": "z", "b": "x", "c": "y"}
        assert macro_f1(preds, golds, classes) == pytest.approx(
            macro_f1([mapping[p] for p in preds], [mapping[g] for g in golds],
                     [mapping[c] for c in classes]),
            abs=1e-12,
        )

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            macro_f1([], [], ["a"])

    def test_confusion_matrix_basics(self):
        cm = confusion_matrix(["a", "a", "b"], ["a", "b", "b"], ["a", "b"])
        assert cm.tolist() == [[1, 1], [0, 1]]
        assert cm.sum() == 3

    def test_confusion_matrix_rejects_unknown(self):
        with pytest.raises(ValueError):
            confusion_matrix(["a"], ["z"], ["a", "b"])


class TestEvaluatePairs:
    def test_identical_pairs(self):
        pairs = [{"id": "1", "reference": "a b", "hypothesis": "a b"}]
        result = evaluate_pairs(pairs)
        assert result.corpus["wer_pooled"] == 0.0
        assert result.corpus["em"] == 1.0

    def test_empty_raises(self):
        with pytest.raises(ValueError, match="no utterances"):
            evaluate_pairs([])

    def test_exclusion_counts(self):
        pairs = [
            {"id": "1", "reference": "close-front-round-vowel post-test no-context",
             "hypothesis": "anything"},
            {"id": "2", "reference": "hello there", "hypothesis": "hello there"},
        ]
        result = evaluate_pairs(pairs, exclude_vowel_descriptions=True)
        assert result.n_excluded == 1
        assert result.n_utterances == 1

    def test_pooled_vs_mean_distinct(self):
        pairs = [
            {"id": "1", "reference": "a", "hypothesis": "b"},  # wer 1.0 over 1 word
            {"id": "2", "reference": "c d e f", "hypothesis": "c d e f"},  # wer 0 over 4
        ]
        result = evaluate_pairs(pairs)
        assert result.corpus["wer_mean"] == pytest.approx(0.5)
        assert result.corpus["wer_pooled"] == pytest.approx(1 / 5)

    def test_pooled_rates_match_oracle_counts(self):
        rng = np.random.default_rng(17)
        pairs = []
        totals = [0, 0, 0, 0]
        for i in range(60):
            ref = [str(v) for v in rng.integers(0, 5, rng.integers(0, 9))]
            hyp = [str(v) for v in rng.integers(0, 5, rng.integers(0, 9))]
            pairs.append({"id": str(i), "reference": " ".join(ref), "hypothesis": " ".join(hyp)})
            for k, v in enumerate(edit_ops(ref, hyp)):
                totals[k] += v
        result = evaluate_pairs(pairs)
        wer, mer, wip = rates_from_ops(*totals)
        assert result.corpus["wer_pooled"] == pytest.approx(wer, abs=1e-12)
        assert result.corpus["mer_pooled"] == pytest.approx(mer, abs=1e-12)
        assert result.corpus["wip_pooled"] == pytest.approx(wip, abs=1e-12)
