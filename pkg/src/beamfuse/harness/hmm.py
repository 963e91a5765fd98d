"""Exactly solvable synthetic recognition tasks.

A task is a Markov chain over labels with an explicit frames-per-label
duration model and per-label emission distributions over a discrete
symbol alphabet.  Because every distribution is a small table, the
posterior quantities a trained encoder-decoder would only approximate
can be computed here in closed form:

  * exact_e2e_scorer returns the true next-label posterior
    p(w_n | w_1^{n-1}, x_1^T) by forward/backward dynamic programming
    over label boundaries, together with the posterior alignment
    occupancy that stands in for an attention row;
  * exact_internal_lm returns the chain's own label bigram, which is
    precisely the marginal of the generative model over acoustics.

Probabilities are handled in the linear domain, which keeps the code
close to the defining recursions; with at least one emission probability
per frame this is safe for utterances up to a few hundred frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..configio import read_toml
from ..errors import ConfigError
from ..scorers import BOS, EOS, UNK, BigramTableScorer, Scorer, Vocabulary

NORM_TOL = 1e-9

#: Hard ceiling on sampled labels per utterance; with end-of-sequence
#: reachable from every label the cap is astronomically unlikely to bind.
_MAX_LABELS = 1000


@dataclass(frozen=True)
class Utterance:
    """One sampled utterance plus the metadata a manifest row needs."""

    utt_id: str
    labels: tuple[str, ...]
    symbols: tuple[int, ...]
    conversation: str
    channel: str
    order: int

    @property
    def transcript(self) -> str:
        return " ".join(self.labels)


@dataclass
class HmmTask:
    """Label chain, emission tables, and a shared duration distribution.

    transitions is a dense (V, V) row-stochastic matrix over vocabulary
    ids: rows are meaningful for the begin marker and for labels, and
    columns carry mass only on labels and the end marker.  emissions is
    (V, n_symbols) with rows for labels.  duration_probs[i] is the
    probability that a label occupies i+1 frames.
    """

    vocab: Vocabulary
    labels: tuple[str, ...]
    n_symbols: int
    transitions: np.ndarray
    emissions: np.ndarray
    duration_probs: np.ndarray

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.emissions = np.asarray(self.emissions, dtype=np.float64)
        self.duration_probs = np.asarray(self.duration_probs, dtype=np.float64)
        self.validate()

    @property
    def label_ids(self) -> tuple[int, ...]:
        return tuple(self.vocab.id(w) for w in self.labels)

    @property
    def max_duration(self) -> int:
        return len(self.duration_probs)

    def validate(self) -> None:
        vocab = self.vocab
        if not self.labels:
            raise ValueError("a task needs at least one label")
        for w in self.labels:
            if w in (BOS, EOS, UNK):
                raise ValueError(f"{w!r} cannot be used as a label")
        n = len(vocab)
        if self.transitions.shape != (n, n):
            raise ValueError(f"transition matrix shape {self.transitions.shape} "
                             f"does not match vocabulary size {n}")
        if self.emissions.shape != (n, self.n_symbols):
            raise ValueError(f"emission matrix shape {self.emissions.shape} does "
                             f"not match ({n}, {self.n_symbols})")
        if np.any(self.transitions < 0) or np.any(self.emissions < 0) \
                or np.any(self.duration_probs < 0):
            raise ValueError("probabilities must be non-negative")
        if self.duration_probs.ndim != 1 or len(self.duration_probs) < 1:
            raise ValueError("duration model must list at least one probability")
        if abs(self.duration_probs.sum() - 1.0) > NORM_TOL:
            raise ValueError("duration probabilities must sum to one")
        if np.any(self.transitions[:, vocab.bos_id] > 0) \
                or np.any(self.transitions[:, vocab.unk_id] > 0):
            raise ValueError("transitions may only target labels and the end marker")
        if self.transitions[vocab.bos_id, vocab.eos_id] > 0:
            raise ValueError("empty utterances are not allowed: the begin marker "
                             "must not transition straight to the end marker")
        rows = [vocab.bos_id] + list(self.label_ids)
        for row in rows:
            total = self.transitions[row].sum()
            if abs(total - 1.0) > NORM_TOL:
                raise ValueError(f"transition row for {vocab.token(row)!r} sums "
                                 f"to {total!r}, expected 1")
        for label_id in self.label_ids:
            total = self.emissions[label_id].sum()
            if abs(total - 1.0) > NORM_TOL:
                raise ValueError(f"emission row for {vocab.token(label_id)!r} "
                                 f"sums to {total!r}, expected 1")
        self._check_end_reachable()

    def _check_end_reachable(self) -> None:
        """Every label must have a positive-probability path to the end."""
        vocab = self.vocab
        reach_end = {vocab.eos_id}
        changed = True
        while changed:
            changed = False
            for v in self.label_ids:
                if v in reach_end:
                    continue
                succ = np.flatnonzero(self.transitions[v] > 0)
                if any(s in reach_end for s in succ):
                    reach_end.add(v)
                    changed = True
        stuck = [vocab.token(v) for v in self.label_ids if v not in reach_end]
        if stuck:
            raise ValueError(f"labels {stuck} can never reach the end marker")

    @classmethod
    def from_tables(cls, labels: Sequence[str],
                    transitions: Mapping[str, Mapping[str, float]],
                    emissions: Mapping[str, Sequence[float]],
                    duration_probs: Sequence[float]) -> "HmmTask":
        """Build from nested word-keyed dictionaries (the TOML layout)."""
        labels = tuple(labels)
        vocab = Vocabulary(labels)
        n = len(vocab)
        rows = set(transitions)
        expected_rows = {BOS, *labels}
        if rows != expected_rows:
            missing = sorted(expected_rows - rows)
            extra = sorted(rows - expected_rows)
            raise ValueError(f"transition rows missing {missing}, unexpected {extra}")
        trans = np.zeros((n, n))
        for prev, row in transitions.items():
            for word, p in row.items():
                if word not in vocab.tokens:
                    raise ValueError(f"transition target {word!r} is not in the vocabulary")
                trans[vocab.id(prev), vocab.id(word)] = float(p)
        if set(emissions) != set(labels):
            raise ValueError("emission table must list every label exactly once")
        n_symbols = len(next(iter(emissions.values())))
        emis = np.zeros((n, n_symbols))
        for word, row in emissions.items():
            if len(row) != n_symbols:
                raise ValueError(f"emission row for {word!r} has {len(row)} entries, "
                                 f"expected {n_symbols}")
            emis[vocab.id(word)] = [float(p) for p in row]
        return cls(vocab=vocab, labels=labels, n_symbols=n_symbols,
                   transitions=trans, emissions=emis,
                   duration_probs=np.asarray([float(p) for p in duration_probs]))


def task_from_dict(data: Mapping) -> HmmTask:
    """Build a task from a parsed TOML mapping, raising ConfigError."""
    try:
        head = data["task"]
        labels = head["labels"]
        transitions = data["transitions"]
        emissions = data["emissions"]
        duration = data["duration"]["probs"]
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"task config is missing section or key: {exc}") from None
    try:
        task = HmmTask.from_tables(labels, transitions, emissions, duration)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    declared = head.get("n_symbols")
    if declared is not None and int(declared) != task.n_symbols:
        raise ConfigError(f"task declares {declared} symbols but emission rows "
                          f"have {task.n_symbols}")
    return task


def load_task(path) -> HmmTask:
    """Read a task description from a TOML file."""
    return task_from_dict(read_toml(path))


def expected_label_unigram(task: HmmTask) -> np.ndarray:
    """Analytic per-utterance label frequencies implied by the chain.

    Expected visit counts solve v = q0 + M' v for the label-to-label
    transition block M; the unigram is the normalized visit vector,
    aligned with task.labels.
    """
    ids = list(task.label_ids)
    q0 = task.transitions[task.vocab.bos_id, ids]
    m = task.transitions[np.ix_(ids, ids)]
    visits = np.linalg.solve(np.eye(len(ids)) - m.T, q0)
    return visits / visits.sum()


def _sampler(rng: np.random.Generator):
    def draw(cum_row: np.ndarray) -> int:
        return int(np.searchsorted(cum_row, rng.random() * cum_row[-1], side="right"))
    return draw


def generate(task: HmmTask, seed: int, n_utterances: int,
             utts_per_conversation: int = 4) -> list[Utterance]:
    """Ancestral sampling of a corpus with conversation/channel metadata.

    Utterances are grouped into conversations of utts_per_conversation;
    within a conversation they alternate between channels A and B, and
    order indices count per channel, so (conversation, channel, order)
    reconstructs the original interleaving.
    """
    if n_utterances < 0:
        raise ValueError("n_utterances must be >= 0")
    if utts_per_conversation < 1:
        raise ValueError("utts_per_conversation must be >= 1")
    rng = np.random.default_rng(seed)
    draw = _sampler(rng)
    trans_cum = np.cumsum(task.transitions, axis=1)
    emis_cum = np.cumsum(task.emissions, axis=1)
    dur_cum = np.cumsum(task.duration_probs)
    eos = task.vocab.eos_id

    out = []
    for i in range(n_utterances):
        prev = task.vocab.bos_id
        label_ids: list[int] = []
        while len(label_ids) < _MAX_LABELS:
            nxt = draw(trans_cum[prev])
            if nxt == eos:
                break
            label_ids.append(nxt)
            prev = nxt
        symbols: list[int] = []
        for v in label_ids:
            frames = 1 + draw(dur_cum)
            row = emis_cum[v]
            u = rng.random(frames) * row[-1]
            symbols.extend(int(s) for s in np.searchsorted(row, u, side="right"))
        slot = i % utts_per_conversation
        out.append(Utterance(
            utt_id=f"utt-{i:06d}",
            labels=tuple(task.vocab.token(v) for v in label_ids),
            symbols=tuple(symbols),
            conversation=f"conv-{i // utts_per_conversation:05d}",
            channel="A" if slot % 2 == 0 else "B",
            order=slot // 2,
        ))
    return out


@dataclass(frozen=True)
class AlignmentState:
    """Decoded prefix plus its forward vector over consumed-frame counts."""

    tokens: tuple[int, ...]
    alpha: tuple[float, ...]


class ExactE2eScorer(Scorer):
    """True next-label posterior for one utterance of a synthetic task.

    The forward vector alpha[t] is the joint probability that the decoded
    prefix is exactly the state's token sequence and that it occupies the
    first t frames.  The completion table b[w, t] sums every way to
    consume the remaining frames starting after label w and end the
    sequence at the last frame.  score() combines the two into the exact
    conditional distribution over the next label (or the end marker) and
    the posterior occupancy of the position being predicted, which is
    returned as the attention row.  When the sequence can only terminate,
    the occupancy has no mass and a uniform row is returned instead.
    """

    needs_acoustics = False

    def __init__(self, task: HmmTask, symbols: Sequence[int]):
        super().__init__(task.vocab)
        symbols = tuple(int(s) for s in symbols)
        if not symbols:
            raise ValueError("an utterance needs at least one acoustic symbol")
        bad = [s for s in symbols if not 0 <= s < task.n_symbols]
        if bad:
            raise ValueError(f"symbols {bad} fall outside the task alphabet "
                             f"of size {task.n_symbols}")
        self._task = task
        self._symbols = symbols
        t_frames = len(symbols)
        d_max = task.max_duration
        n = len(task.vocab)

        # per-frame emission probabilities and segment products:
        # seg[v, s, d-1] = prod of emissions of frames s .. s+d-1 under v
        frame_p = task.emissions[:, list(symbols)]
        seg = np.zeros((n, t_frames, d_max))
        seg[:, :, 0] = frame_p
        for d in range(2, d_max + 1):
            seg[:, : t_frames - d + 1, d - 1] = (
                seg[:, : t_frames - d + 1, d - 2] * frame_p[:, d - 1:])

        # completion table over (last token, frames consumed)
        b = np.zeros((n, t_frames + 1))
        b[:, t_frames] = task.transitions[:, task.vocab.eos_id]
        dur = task.duration_probs
        for t in range(t_frames - 1, -1, -1):
            inner = np.zeros(n)
            for d in range(1, min(d_max, t_frames - t) + 1):
                inner += dur[d - 1] * seg[:, t, d - 1] * b[:, t + d]
            b[:, t] = task.transitions @ inner

        self._seg = seg
        self._b = b
        self._t_frames = t_frames

    @property
    def n_frames(self) -> int:
        return self._t_frames

    def _initial_state(self, acoustics) -> AlignmentState:
        alpha = np.zeros(self._t_frames + 1)
        alpha[0] = 1.0
        return AlignmentState((), tuple(alpha))

    def _last(self, state: AlignmentState) -> int:
        return state.tokens[-1] if state.tokens else self.vocab.bos_id

    def advance(self, state: AlignmentState, token_id: int) -> AlignmentState:
        self._check_token(token_id)
        last = self._last(state)
        if last == self.vocab.eos_id:
            raise ValueError("cannot advance past the end marker")
        if token_id == self.vocab.eos_id:
            return AlignmentState(state.tokens + (token_id,), state.alpha)
        t_frames, d_max = self._t_frames, self._task.max_duration
        alpha = np.asarray(state.alpha)
        new = np.zeros(t_frames + 1)
        if token_id in self._task.label_ids:
            dur = self._task.duration_probs
            for d in range(1, d_max + 1):
                stop = t_frames + 1 - d
                new[d:] += alpha[:stop] * dur[d - 1] * self._seg[token_id, :stop, d - 1]
            new *= self._task.transitions[last, token_id]
        return AlignmentState(state.tokens + (token_id,), tuple(new))

    def score(self, state: AlignmentState):
        vocab = self.vocab
        last = self._last(state)
        if last == vocab.eos_id:
            raise ValueError("cannot score past the end marker")
        t_frames, d_max = self._t_frames, self._task.max_duration
        alpha = np.asarray(state.alpha)
        dur = self._task.duration_probs
        num = np.zeros(len(vocab))
        occupancy = np.zeros(t_frames)
        for v in self._task.label_ids:
            step_in = self._task.transitions[last, v]
            if step_in == 0.0:
                continue
            total_v = 0.0
            for d in range(1, d_max + 1):
                stop = t_frames + 1 - d
                weight = alpha[:stop] * dur[d - 1] * self._seg[v, :stop, d - 1]
                path = weight * self._b[v, d:]
                total_v += path.sum()
                for j in range(d):
                    occupancy[j : j + stop] += step_in * path
            num[v] = step_in * total_v
        num[vocab.eos_id] = alpha[t_frames] * self._task.transitions[last, vocab.eos_id]
        denominator = num.sum()
        if denominator <= 0.0:
            return (np.full(len(vocab), -np.inf),
                    np.full(t_frames, 1.0 / t_frames))
        with np.errstate(divide="ignore"):
            logp = np.log(num / denominator)
        mass = occupancy.sum()
        if mass > 0.0:
            attention = occupancy / mass
        else:
            attention = np.full(t_frames, 1.0 / t_frames)
        return logp, attention


def exact_e2e_scorer(task: HmmTask, symbols: Sequence[int]) -> ExactE2eScorer:
    """Scorer whose conditionals are the task's true label posteriors."""
    return ExactE2eScorer(task, symbols)


def exact_internal_lm(task: HmmTask) -> BigramTableScorer:
    """The chain's label bigram: the generative model's marginal over acoustics."""
    n = len(task.vocab)
    log_matrix = np.zeros((n, n))
    rows = [task.vocab.bos_id, *task.label_ids]
    with np.errstate(divide="ignore"):
        log_matrix[rows] = np.log(task.transitions[rows])
    return BigramTableScorer(task.vocab, log_matrix)
