"""Log-linear multi-scorer beam decoding.

A hypothesis is scored by a weighted sum of smoothed log-probabilities from
any number of LM scorers and acoustic scorers, plus two completion-time
terms: a coverage credit counting frames whose best attention weight exceeds
a threshold, and a length reward proportional to the number of emitted
tokens (end marker included).

Search is position-synchronous.  At every position each live hypothesis is
extended by every token; all extensions, finished or not, compete for the
`beam` survivor slots on accumulated weighted log-probability alone.
Surviving finished hypotheses retire to a finals pool where the completion
terms are added; survivors that are still open continue.  With beam 1 this
reduces exactly to greedy decoding, and with a beam at least as large as
the number of possible extensions nothing is ever pruned, so the result
equals exhaustive enumeration.

Everything is deterministic: score ties are broken lexicographically by
token ids, and equal finished scores by earlier retirement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scorers.base import Scorer, smooth


@dataclass(frozen=True)
class FusionWeights:
    """Interpolation weights, one entry per registered scorer.

    lam_lm may contain negative entries (an internal LM applied as a
    divisor).  lam_ct and tau have one entry per acoustic scorer.  Smoothing
    exponents default to 1 (no reshaping).
    """

    lam_lm: tuple = ()
    lam_e2e: tuple = (1.0,)
    lam_ct: tuple = ()
    tau: tuple = ()
    lam_len: float = 0.0
    beta_lm: tuple = ()
    beta_e2e: tuple = ()

    def __post_init__(self):
        coerce = lambda v: tuple(float(x) for x in v)  # noqa: E731
        object.__setattr__(self, "lam_lm", coerce(self.lam_lm))
        object.__setattr__(self, "lam_e2e", coerce(self.lam_e2e))
        n_e2e = len(self.lam_e2e)
        object.__setattr__(self, "lam_ct",
                           coerce(self.lam_ct) if self.lam_ct else (0.0,) * n_e2e)
        object.__setattr__(self, "tau",
                           coerce(self.tau) if self.tau else (0.5,) * n_e2e)
        object.__setattr__(self, "beta_lm",
                           coerce(self.beta_lm) if self.beta_lm else (1.0,) * len(self.lam_lm))
        object.__setattr__(self, "beta_e2e",
                           coerce(self.beta_e2e) if self.beta_e2e else (1.0,) * n_e2e)
        if len(self.lam_ct) != n_e2e or len(self.tau) != n_e2e or len(self.beta_e2e) != n_e2e:
            raise ValueError("lam_ct, tau and beta_e2e must have one entry per "
                             "acoustic scorer")
        if len(self.beta_lm) != len(self.lam_lm):
            raise ValueError("beta_lm must have one entry per LM scorer")
        if any(not 0.0 < t < 1.0 for t in self.tau):
            raise ValueError("coverage thresholds must lie strictly between 0 and 1")
        if any(b < 0.0 for b in self.beta_lm + self.beta_e2e):
            raise ValueError("smoothing exponents must be >= 0")

    @property
    def all_nonnegative(self) -> bool:
        """True when every per-position weight is >= 0, which makes the
        early-stop bound in decode() admissible."""
        return (all(w >= 0.0 for w in self.lam_lm + self.lam_e2e + self.lam_ct)
                and self.lam_len >= 0.0)


@dataclass
class Hypothesis:
    """One partial or complete decode, self-contained and relocatable."""

    tokens: tuple
    lm_states: tuple
    e2e_states: tuple
    raw_score: float
    term_lm: tuple
    term_e2e: tuple
    coverage_max: tuple  # per acoustic scorer: running per-frame max, or None
    finished: bool = False


@dataclass
class NBestEntry:
    tokens: tuple
    total: float
    breakdown: dict
    unterminated: bool = False


@dataclass
class NBest:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def coverage_credit(attention_rows, tau: float) -> int:
    """Count frames whose best attention over the emitted positions beats tau."""
    rows = np.asarray(attention_rows, dtype=np.float64)
    if rows.size == 0:
        return 0
    return int(np.sum(rows.max(axis=0) > tau))


def _cov_count(cov: np.ndarray | None, tau: float) -> int:
    if cov is None:
        return 0
    return int(np.sum(cov > tau))


def _finite(x: float) -> float:
    return -math.inf if math.isnan(x) else x


def _check_scorers(e2e_scorers, lm_scorers, weights: FusionWeights):
    if len(lm_scorers) != len(weights.lam_lm):
        raise ValueError(f"{len(lm_scorers)} LM scorers but {len(weights.lam_lm)} weights")
    if len(e2e_scorers) != len(weights.lam_e2e):
        raise ValueError(f"{len(e2e_scorers)} acoustic scorers but "
                         f"{len(weights.lam_e2e)} weights")
    if not e2e_scorers and not lm_scorers:
        raise ValueError("no scorers registered")
    scorers = list(e2e_scorers) + list(lm_scorers)
    vocab = scorers[0].vocab
    for s in scorers[1:]:
        if s.vocab != vocab:
            raise ValueError("all scorers must share one vocabulary")
    return vocab


def score_hypothesis(tokens, e2e_scorers, lm_scorers, weights: FusionWeights,
                     acoustics=None, context=()) -> tuple[float, dict]:
    """Exact total and per-term breakdown for one complete token sequence.

    tokens are vocabulary ids ending with the end marker.  This is the
    reference evaluation decode() is compared against, and the scorer behind
    N-best rescoring.
    """
    vocab = _check_scorers(e2e_scorers, lm_scorers, weights)
    tokens = tuple(tokens)
    if not tokens or tokens[-1] != vocab.eos_id:
        raise ValueError("a complete hypothesis must end with the end marker")
    if vocab.bos_id in tokens or vocab.eos_id in tokens[:-1]:
        raise ValueError("sequence markers may not appear inside the hypothesis")

    lm_states = [lm.start(context=context) for lm in lm_scorers]
    e2e_states = [m.start(acoustics=acoustics) for m in e2e_scorers]
    term_lm = [0.0] * len(lm_scorers)
    term_e2e = [0.0] * len(e2e_scorers)
    coverage = [None] * len(e2e_scorers)
    total = 0.0
    for tok in tokens:
        position = 0.0
        for k, lm in enumerate(lm_scorers):
            if weights.lam_lm[k] == 0.0:
                continue
            logp, _ = lm.score(lm_states[k])
            c = weights.lam_lm[k] * smooth(logp, weights.beta_lm[k])[tok]
            term_lm[k] += c
            position += c
        for l, m in enumerate(e2e_scorers):
            logp, att = m.score(e2e_states[l])
            if att is not None:
                coverage[l] = (np.array(att) if coverage[l] is None
                               else np.maximum(coverage[l], att))
            if weights.lam_e2e[l] == 0.0:
                continue
            c = weights.lam_e2e[l] * smooth(logp, weights.beta_e2e[l])[tok]
            term_e2e[l] += c
            position += c
        total += _finite(position)
        if tok != vocab.eos_id:
            lm_states = [lm.advance(s, tok) for lm, s in zip(lm_scorers, lm_states)]
            e2e_states = [m.advance(s, tok) for m, s in zip(e2e_scorers, e2e_states)]

    breakdown = {}
    for k in range(len(lm_scorers)):
        breakdown[f"lm{k}"] = term_lm[k]
    for l in range(len(e2e_scorers)):
        breakdown[f"e2e{l}"] = term_e2e[l]
        credit = weights.lam_ct[l] * _cov_count(coverage[l], weights.tau[l])
        breakdown[f"coverage{l}"] = credit
        total += credit
    length_term = weights.lam_len * len(tokens)
    breakdown["length"] = length_term
    total += length_term
    return _finite(total), breakdown


def decode(e2e_scorers, lm_scorers, weights: FusionWeights, acoustics=None,
           context=(), beam: int = 16, max_len: int = 64, nbest: int = 1,
           incremental_coverage: bool = False) -> NBest:
    """Beam decoding of the full log-linear objective.

    context conditions the LM scorers only; acoustic scorers always start
    from a bare begin-of-sequence.  With incremental_coverage, coverage and
    length terms also join the pruning comparison (they always join the
    final ranking).  Returns up to nbest complete hypotheses; if nothing
    finishes within max_len, the best open hypotheses are returned flagged
    unterminated.
    """
    if beam < 1 or max_len < 1 or nbest < 1:
        raise ValueError("beam, max_len and nbest must all be >= 1")
    vocab = _check_scorers(e2e_scorers, lm_scorers, weights)
    n_vocab = len(vocab)

    root = Hypothesis(
        tokens=(),
        lm_states=tuple(lm.start(context=context) for lm in lm_scorers),
        e2e_states=tuple(m.start(acoustics=acoustics) for m in e2e_scorers),
        raw_score=0.0,
        term_lm=(0.0,) * len(lm_scorers),
        term_e2e=(0.0,) * len(e2e_scorers),
        coverage_max=(None,) * len(e2e_scorers),
    )
    live = [root]
    finals: list[tuple[float, Hypothesis]] = []
    frame_counts: list[int | None] = [None] * len(e2e_scorers)

    def completion_terms(cov_max, n_tokens):
        credit = sum(weights.lam_ct[l] * _cov_count(cov_max[l], weights.tau[l])
                     for l in range(len(e2e_scorers)))
        return credit, weights.lam_len * n_tokens

    for position in range(max_len):
        if not live:
            break

        # admissible optimism: no future position can add positive
        # log-probability when every weight is >= 0, so a finished score
        # beyond every live hypothesis's best reachable total is settled
        if weights.all_nonnegative and len(finals) >= nbest:
            kth = sorted((t for t, _ in finals), reverse=True)[nbest - 1]
            full_cov = sum(weights.lam_ct[l] * (frame_counts[l] or 0)
                           for l in range(len(e2e_scorers)))
            best_bound = max(h.raw_score + full_cov + weights.lam_len * max_len
                             for h in live)
            if kth > best_bound:
                break

        candidates = []  # (sort key, parent index, token, per-scorer data)
        per_parent = []
        for pi, hyp in enumerate(live):
            combined = np.zeros(n_vocab)
            lm_vecs = []
            with np.errstate(invalid="ignore"):
                for k, lm in enumerate(lm_scorers):
                    if weights.lam_lm[k] == 0.0:
                        lm_vecs.append(None)
                        continue
                    logp, _ = lm.score(hyp.lm_states[k])
                    vec = smooth(logp, weights.beta_lm[k])
                    lm_vecs.append(vec)
                    combined = combined + weights.lam_lm[k] * vec
                e2e_vecs = []
                att_rows = []
                for l, m in enumerate(e2e_scorers):
                    logp, att = m.score(hyp.e2e_states[l])
                    att_rows.append(att)
                    if att is not None and frame_counts[l] is None:
                        frame_counts[l] = len(att)
                    if weights.lam_e2e[l] == 0.0:
                        e2e_vecs.append(None)
                        continue
                    vec = smooth(logp, weights.beta_e2e[l])
                    e2e_vecs.append(vec)
                    combined = combined + weights.lam_e2e[l] * vec
                new_scores = hyp.raw_score + combined
            new_scores[np.isnan(new_scores)] = -np.inf
            new_scores[vocab.bos_id] = -np.inf

            new_cov = tuple(
                att_rows[l] if hyp.coverage_max[l] is None else (
                    np.maximum(hyp.coverage_max[l], att_rows[l])
                    if att_rows[l] is not None else hyp.coverage_max[l])
                for l in range(len(e2e_scorers)))
            per_parent.append((lm_vecs, e2e_vecs, new_cov))

            rank_scores = new_scores
            if incremental_coverage:
                credit, length_term = completion_terms(new_cov, len(hyp.tokens) + 1)
                rank_scores = new_scores + credit + length_term
            for w in range(n_vocab):
                if w == vocab.bos_id:
                    continue
                if w == vocab.eos_id and new_scores[w] == -np.inf:
                    # a zero-probability finish is no finish at all; keep the
                    # slot for candidates that can still complete
                    continue
                key = (-rank_scores[w], hyp.tokens + (w,))
                candidates.append((key, pi, w, new_scores[w]))

        candidates.sort(key=lambda c: c[0])
        next_live = []
        for key, pi, w, raw in candidates[:beam]:
            parent = live[pi]
            lm_vecs, e2e_vecs, new_cov = per_parent[pi]
            term_lm = tuple(
                parent.term_lm[k] + (weights.lam_lm[k] * lm_vecs[k][w]
                                     if lm_vecs[k] is not None else 0.0)
                for k in range(len(lm_scorers)))
            term_e2e = tuple(
                parent.term_e2e[l] + (weights.lam_e2e[l] * e2e_vecs[l][w]
                                      if e2e_vecs[l] is not None else 0.0)
                for l in range(len(e2e_scorers)))
            tokens = parent.tokens + (w,)
            if w == vocab.eos_id:
                credit, length_term = completion_terms(new_cov, len(tokens))
                hyp = Hypothesis(tokens, (), (), raw, term_lm, term_e2e,
                                 new_cov, finished=True)
                finals.append((_finite(raw + credit + length_term), hyp))
            else:
                hyp = Hypothesis(
                    tokens,
                    tuple(lm.advance(s, w) for lm, s in zip(lm_scorers, parent.lm_states)),
                    tuple(m.advance(s, w) for m, s in zip(e2e_scorers, parent.e2e_states)),
                    raw, term_lm, term_e2e, new_cov)
                next_live.append(hyp)
        live = next_live

    if finals:
        order = sorted(range(len(finals)),
                       key=lambda i: (-finals[i][0], finals[i][1].tokens, i))
        entries = [_make_entry(finals[i][1], finals[i][0], weights) for i in order[:nbest]]
        return NBest(entries)

    # nothing terminated: report the best open hypotheses with the
    # completion terms they have earned so far
    scored = []
    for hyp in live:
        credit, length_term = completion_terms(hyp.coverage_max, len(hyp.tokens))
        scored.append((_finite(hyp.raw_score + credit + length_term), hyp))
    scored.sort(key=lambda sh: (-sh[0], sh[1].tokens))
    return NBest([_make_entry(h, t, weights, unterminated=True)
                  for t, h in scored[:nbest]])


def _make_entry(hyp: Hypothesis, total: float, weights: FusionWeights,
                unterminated: bool = False) -> NBestEntry:
    breakdown = {}
    for k, term in enumerate(hyp.term_lm):
        breakdown[f"lm{k}"] = term
    for l, term in enumerate(hyp.term_e2e):
        breakdown[f"e2e{l}"] = term
        breakdown[f"coverage{l}"] = weights.lam_ct[l] * _cov_count(hyp.coverage_max[l],
                                                                   weights.tau[l])
    breakdown["length"] = weights.lam_len * len(hyp.tokens)
    return NBestEntry(hyp.tokens, total, breakdown, unterminated)
