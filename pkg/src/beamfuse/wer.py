"""Word error rate via minimum edit distance with deterministic counts.

Among all minimum-distance alignments the one with the fewest insertions
is reported.  Because reference and hypothesis lengths fix the difference
D - I, that choice also minimizes deletions, so the (S, D, I) breakdown
is unique and reruns are bit-stable.  The DP packs (distance, insertions)
into one int64 per cell, which keeps the whole recurrence in vectorized
numpy including the within-row scan.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

_BIG = np.int64(1) << 32
_INS = _BIG + 1  # one insertion: distance 1, insertion count 1


@dataclass(frozen=True)
class WerReport:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    def __post_init__(self):
        if min(self.substitutions, self.deletions, self.insertions) < 0:
            raise ValueError("error counts must be non-negative")
        if self.ref_words < 0:
            raise ValueError("reference word count must be non-negative")

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_words

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(self.substitutions + other.substitutions,
                         self.deletions + other.deletions,
                         self.insertions + other.insertions,
                         self.ref_words + other.ref_words)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace; the only normalization applied."""
    return text.lower().split()


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerReport:
    """Align hypothesis to a non-empty reference with unit edit costs."""
    n, m = len(reference), len(hypothesis)
    if n == 0:
        raise ValueError("reference must contain at least one word")

    codes = {}
    ref = np.array([codes.setdefault(w, len(codes)) for w in reference],
                   dtype=np.int64)
    hyp = np.array([codes.setdefault(w, len(codes)) for w in hypothesis],
                   dtype=np.int64)

    offsets = np.arange(m + 1, dtype=np.int64) * _INS
    prev = offsets.copy()
    base = np.empty(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        sub = np.where(hyp == ref[i - 1], 0, _BIG)
        base[0] = i * _BIG
        if m:
            np.minimum(prev[:-1] + sub, prev[1:] + _BIG, out=base[1:])
        # left-to-right insertion scan as a prefix minimum
        prev = np.minimum.accumulate(base - offsets) + offsets

    packed = int(prev[m])
    distance, insertions = divmod(packed, int(_BIG))
    deletions = insertions + n - m
    substitutions = distance - insertions - deletions
    return WerReport(substitutions, deletions, insertions, n)


def score_utterances(references: Mapping[str, Sequence[str]],
                     hypotheses: Mapping[str, Sequence[str]],
                     ) -> tuple[WerReport, dict[str, WerReport]]:
    """Pooled corpus report plus per-utterance reports.

    The two id sets must match exactly; mismatches are reported by id so
    a truncated hypothesis file is caught rather than silently skipped.
    Corpus WER pools raw counts over utterances, it is not a mean of
    per-utterance rates.
    """
    missing = sorted(set(references) - set(hypotheses))
    unknown = sorted(set(hypotheses) - set(references))
    if missing or unknown:
        parts = []
        if missing:
            parts.append(f"missing hypotheses for {missing}")
        if unknown:
            parts.append(f"hypotheses for unknown ids {unknown}")
        raise ValueError("; ".join(parts))
    per_utt = {utt_id: wer(references[utt_id], hypotheses[utt_id])
               for utt_id in sorted(references)}
    corpus = WerReport(0, 0, 0, 0)
    for report in per_utt.values():
        corpus = corpus + report
    return corpus, per_utt
