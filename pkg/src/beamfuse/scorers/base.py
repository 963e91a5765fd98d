"""Scorer abstraction shared by language models and acoustic models.

A Scorer walks a hypothesis left to right: start() positions it after the
begin-of-sequence marker (plus any cross-utterance context), score() returns
the log-distribution over the next token, advance() consumes one token.
States are plain values with well-defined equality, so hypotheses can be
copied, compared, and moved between threads freely.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Hashable, Iterable, Sequence

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

ScorerState = Hashable


class Vocabulary:
    """Ordered token inventory with begin/end/unknown markers.

    Tokens keep the order they were given in; any missing special marker is
    prepended.  Ids are dense and stable for the life of the object.
    """

    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        seen = set(tokens)
        if len(seen) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        specials = [t for t in (BOS, EOS, UNK) if t not in seen]
        self._tokens = tuple(specials + tokens)
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self.bos_id = self._ids[BOS]
        self.eos_id = self._ids[EOS]
        self.unk_id = self._ids[UNK]

    def __len__(self) -> int:
        return len(self._tokens)

    def __iter__(self):
        return iter(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __hash__(self) -> int:
        return hash(self._tokens)

    @property
    def tokens(self) -> tuple[str, ...]:
        return self._tokens

    def id(self, token: str) -> int:
        """Strict lookup; raises KeyError for unknown tokens."""
        return self._ids[token]

    def token(self, token_id: int) -> str:
        return self._tokens[token_id]

    def encode(self, words: Sequence[str]) -> list[int]:
        """Map words to ids, sending out-of-vocabulary words to unknown."""
        return [self._ids.get(w, self.unk_id) for w in words]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._tokens[i] for i in ids]


class Scorer(ABC):
    """Left-to-right next-token scorer over a fixed vocabulary."""

    #: True for scorers conditioned on an acoustic observation.
    needs_acoustics = False

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    @abstractmethod
    def _initial_state(self, acoustics) -> ScorerState:
        """State positioned right after the begin-of-sequence marker."""

    @abstractmethod
    def score(self, state: ScorerState) -> tuple[np.ndarray, np.ndarray | None]:
        """Return (log-probabilities over the vocabulary, attention or None).

        The log-probabilities are natural logs and sum to one in the linear
        domain.  Acoustic scorers also return the attention column for the
        position about to be emitted; pure LMs return None.
        """

    @abstractmethod
    def advance(self, state: ScorerState, token_id: int) -> ScorerState:
        """Deterministic successor state after emitting token_id."""

    def start(self, context: Sequence[int] = (), acoustics=None) -> ScorerState:
        """State after begin-of-sequence plus the given context tokens."""
        if self.needs_acoustics and acoustics is None:
            raise ValueError(f"{type(self).__name__} requires acoustics")
        state = self._initial_state(acoustics)
        for token_id in context:
            state = self.advance(state, token_id)
        return state

    def _check_token(self, token_id: int) -> int:
        if not 0 <= token_id < len(self.vocab):
            raise ValueError(f"token id {token_id} outside vocabulary of size {len(self.vocab)}")
        return token_id


def log_normalize(logp: np.ndarray) -> np.ndarray:
    """Shift log-values so they sum to one in the linear domain."""
    logp = np.asarray(logp, dtype=np.float64)
    total = logsumexp(logp)
    if not np.isfinite(total):
        raise ValueError("cannot normalize a distribution with zero total mass")
    return logp - total


def logsumexp(logp: np.ndarray) -> float:
    m = np.max(logp)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(logp - m))))


def smooth(logp: np.ndarray, beta: float) -> np.ndarray:
    """Sharpen (beta > 1) or flatten (beta < 1) a log-distribution.

    Raises each probability to the beta-th power and renormalizes.  beta = 1
    is the identity; beta = 0 yields the exact uniform distribution.
    """
    if beta < 0.0:
        raise ValueError("smoothing exponent must be >= 0")
    logp = np.asarray(logp, dtype=np.float64)
    if beta == 0.0:
        return np.full_like(logp, -math.log(logp.shape[0]))
    if beta == 1.0:
        return logp.copy()
    return log_normalize(beta * logp)


def probability_ratio(acoustic: Scorer, internal_lm: Scorer, lam_int: float
                      ) -> tuple[tuple[Scorer, float], tuple[Scorer, float]]:
    """Pair an acoustic scorer with its internal LM at negative weight.

    Subtracting lam_int times the internal LM log-probability converts the
    acoustic model's posterior into a likelihood-like quantity that an
    external LM can then reweight cleanly.  Returns two (scorer, weight)
    entries ready to drop into a decoding setup; the caller owns the weight
    on the acoustic side.
    """
    if lam_int < 0.0:
        raise ValueError("internal LM weight must be >= 0 (it is applied negatively)")
    return (acoustic, 1.0), (internal_lm, -lam_int)


def build_cross_utterance_context(utterances: Sequence[Sequence], current_index: int,
                                  limit_words: int = 150) -> list:
    """Concatenate the transcripts preceding current_index, newest kept.

    utterances are the time-ordered turns of one conversation channel.  The
    concatenation is truncated from the oldest side so at most limit_words
    tokens remain.
    """
    if current_index < 0 or current_index > len(utterances):
        raise ValueError("current_index outside the conversation")
    if limit_words <= 0:
        return []
    words: list = []
    for utt in utterances[:current_index]:
        words.extend(utt)
    return words[-limit_words:]
