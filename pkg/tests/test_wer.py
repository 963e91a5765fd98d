"""Edit-distance scoring against a plain tuple-cost reference DP."""

import numpy as np
import pytest

from beamfuse.wer import WerReport, score_utterances, tokenize, wer


def reference_wer(ref, hyp):
    """Independent quadratic DP over (distance, insertions) tuples."""
    n, m = len(ref), len(hyp)
    row = [(j, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        new = [(i, 0)]
        for j in range(1, m + 1):
            diag = (row[j - 1][0] + (ref[i - 1] != hyp[j - 1]), row[j - 1][1])
            up = (row[j][0] + 1, row[j][1])
            left = (new[j - 1][0] + 1, new[j - 1][1] + 1)
            new.append(min(diag, up, left))
        row = new
    dist, ins = row[m]
    dels = ins + n - m
    return dist - ins - dels, dels, ins


class TestWer:
    def test_identical(self):
        report = wer(["a", "b", "c"], ["a", "b", "c"])
        assert (report.substitutions, report.deletions, report.insertions) == (0, 0, 0)
        assert report.wer == 0.0
        assert report.ref_words == 3

    def test_single_substitution(self):
        report = wer(["a", "b", "c"], ["a", "x", "c"])
        assert report.substitutions == 1
        assert report.errors == 1
        assert report.wer == pytest.approx(1.0 / 3.0)

    def test_pure_deletions(self):
        report = wer(["a", "b", "c", "d"], ["b", "c"])
        assert (report.substitutions, report.deletions, report.insertions) == (0, 2, 0)
        assert report.wer == 0.5

    def test_pure_insertions(self):
        report = wer(["a", "b"], ["a", "x", "b", "y"])
        assert (report.substitutions, report.deletions, report.insertions) == (0, 0, 2)
        assert report.wer == 1.0

    def test_empty_hypothesis_is_all_deletions(self):
        report = wer(["a", "b"], [])
        assert (report.substitutions, report.deletions, report.insertions) == (0, 2, 0)

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError, match="at least one word"):
            wer([], ["a"])

    def test_tie_prefers_fewer_insertions(self):
        # "a b" vs "b a" costs 2 either as two substitutions or as one
        # deletion plus one insertion; the former must be reported
        report = wer(["a", "b"], ["b", "a"])
        assert (report.substitutions, report.deletions, report.insertions) == (2, 0, 0)

    def test_swap_exchanges_insertions_and_deletions(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            ref = [str(w) for w in rng.integers(0, 4, size=rng.integers(1, 12))]
            hyp = [str(w) for w in rng.integers(0, 4, size=rng.integers(1, 12))]
            fwd = wer(ref, hyp)
            rev = wer(hyp, ref)
            assert fwd.substitutions == rev.substitutions
            assert fwd.insertions == rev.deletions
            assert fwd.deletions == rev.insertions

    def test_relabeling_words_preserves_counts(self):
        rng = np.random.default_rng(1)
        mapping = {"0": "x", "1": "y", "2": "z"}
        for _ in range(30):
            ref = [str(w) for w in rng.integers(0, 3, size=rng.integers(1, 10))]
            hyp = [str(w) for w in rng.integers(0, 3, size=rng.integers(0, 10))]
            direct = wer(ref, hyp)
            renamed = wer([mapping[w] for w in ref], [mapping[w] for w in hyp])
            assert direct == renamed

    def test_matches_reference_dp(self):
        rng = np.random.default_rng(2)
        for _ in range(400):
            vocab = rng.integers(2, 5)
            ref = [str(w) for w in rng.integers(0, vocab, size=rng.integers(1, 13))]
            hyp = [str(w) for w in rng.integers(0, vocab, size=rng.integers(0, 13))]
            report = wer(ref, hyp)
            expect = reference_wer(ref, hyp)
            got = (report.substitutions, report.deletions, report.insertions)
            assert got == expect, (ref, hyp)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError, match="non-negative"):
            WerReport(-1, 0, 0, 3)

    def test_tokenize_lowercases_and_splits(self):
        assert tokenize("  Hello   WORLD\tagain\n") == ["hello", "world", "again"]


class TestScoreUtterances:
    def test_identical_corpora_score_zero(self):
        refs = {"u1": ["a", "b"], "u2": ["c"]}
        corpus, per_utt = score_utterances(refs, dict(refs))
        assert corpus.errors == 0
        assert corpus.ref_words == 3
        assert set(per_utt) == {"u1", "u2"}

    def test_pooled_counts(self):
        refs = {"u1": ["a", "b", "c"], "u2": ["d", "e", "f", "g", "h", "i", "j"]}
        hyps = {"u1": ["a", "x", "c"], "u2": ["d", "e", "f", "g", "h", "i", "x"]}
        corpus, per_utt = score_utterances(refs, hyps)
        assert corpus.wer == pytest.approx(0.2)
        assert corpus.ref_words == 10
        assert per_utt["u1"].substitutions == 1

    def test_pooling_equals_summed_reports(self):
        rng = np.random.default_rng(3)
        refs, hyps = {}, {}
        for i in range(40):
            refs[f"u{i}"] = [str(w) for w in rng.integers(0, 5, size=rng.integers(1, 15))]
            hyps[f"u{i}"] = [str(w) for w in rng.integers(0, 5, size=rng.integers(0, 15))]
        corpus, per_utt = score_utterances(refs, hyps)
        total = WerReport(0, 0, 0, 0)
        for report in per_utt.values():
            total = total + report
        assert corpus == total

    def test_missing_hypothesis_listed(self):
        with pytest.raises(ValueError, match=r"missing hypotheses for \['u2'\]"):
            score_utterances({"u1": ["a"], "u2": ["b"]}, {"u1": ["a"]})

    def test_unknown_hypothesis_listed(self):
        with pytest.raises(ValueError, match=r"unknown ids \['zz'\]"):
            score_utterances({"u1": ["a"]}, {"u1": ["a"], "zz": ["b"]})
