"""Table-driven scorers: JSON acoustic tables and in-memory bigram LMs.

The JSON format stands in for a trained encoder-decoder.  It stores
next-token distributions keyed by the emitted prefix, plus one attention
matrix per utterance (row n is the attention over subsampled frames when
emitting position n).  Schema, with probabilities in the linear domain:

    {
      "vocab": ["a", "b"],
      "tables": {"": {"a": 0.9, "b": 0.05, "</s>": 0.05}},
      "default_table": {"a": 0.4, "b": 0.4, "</s>": 0.2},
      "utterances": {
        "utt-1": {
          "tables": {"a": {"b": 0.7, "</s>": 0.3}},
          "attention": [[1.0, 0.0], [0.5, 0.5]],
          "n_frames": 2
        }
      }
    }

Context keys are space-joined emitted tokens ("" at the start).  Lookup
order is utterance tables, then shared tables, then default_table, then
uniform.  "attention" may be omitted when "n_frames" is given, in which
case rows are uniform; past the last row the final row is reused.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .base import BOS, Scorer, Vocabulary, log_normalize

TABLE_SUM_TOL = 1e-4
ATTENTION_SUM_TOL = 1e-6


def _table_to_logvec(table: dict, vocab: Vocabulary, where: str) -> np.ndarray:
    vec = np.full(len(vocab), -np.inf)
    total = 0.0
    for word, p in table.items():
        if word == BOS:
            raise DataFormatError(f"{where}: the begin marker cannot be predicted")
        if word not in vocab:
            raise DataFormatError(f"{where}: word {word!r} not in vocabulary")
        if not isinstance(p, (int, float)) or p < 0.0:
            raise DataFormatError(f"{where}: bad probability {p!r} for {word!r}")
        if p > 0.0:
            vec[vocab.id(word)] = math.log(p)
        total += p
    if abs(total - 1.0) > TABLE_SUM_TOL:
        raise DataFormatError(f"{where}: probabilities sum to {total:.6f}, expected 1")
    out = log_normalize(vec)
    out.setflags(write=False)
    return out


def _uniform_emissions(vocab: Vocabulary) -> np.ndarray:
    vec = np.zeros(len(vocab))
    vec[vocab.bos_id] = -np.inf
    out = log_normalize(vec)
    out.setflags(write=False)
    return out


class TableAcousticScorer(Scorer):
    """Acoustic-conditioned scorer backed by explicit lookup tables.

    The "acoustics" handed to start() is the utterance id; it selects the
    per-utterance tables and attention matrix.
    """

    needs_acoustics = True

    def __init__(self, vocab: Vocabulary,
                 shared: dict[str, np.ndarray],
                 default: np.ndarray | None,
                 utterances: dict[str, tuple[dict[str, np.ndarray], np.ndarray]]):
        super().__init__(vocab)
        self._shared = shared
        self._default = default if default is not None else _uniform_emissions(vocab)
        self._utterances = utterances

    @classmethod
    def from_dict(cls, doc: dict) -> "TableAcousticScorer":
        if "vocab" not in doc or not isinstance(doc["vocab"], list):
            raise DataFormatError("table model: missing vocab list")
        vocab = Vocabulary(doc["vocab"])
        shared = {ctx: _table_to_logvec(t, vocab, f"tables[{ctx!r}]")
                  for ctx, t in doc.get("tables", {}).items()}
        default = None
        if "default_table" in doc:
            default = _table_to_logvec(doc["default_table"], vocab, "default_table")
        utterances = {}
        for utt_id, entry in doc.get("utterances", {}).items():
            tables = {ctx: _table_to_logvec(t, vocab, f"utterances[{utt_id!r}][{ctx!r}]")
                      for ctx, t in entry.get("tables", {}).items()}
            if "attention" in entry:
                att = np.asarray(entry["attention"], dtype=np.float64)
                if att.ndim != 2 or att.size == 0:
                    raise DataFormatError(f"utterances[{utt_id!r}]: attention must be a "
                                          "non-empty matrix")
                if np.any(att < 0.0) or np.any(np.abs(att.sum(axis=1) - 1.0) > ATTENTION_SUM_TOL):
                    raise DataFormatError(f"utterances[{utt_id!r}]: attention rows must be "
                                          "distributions over frames")
            elif "n_frames" in entry:
                n = int(entry["n_frames"])
                if n < 1:
                    raise DataFormatError(f"utterances[{utt_id!r}]: n_frames must be >= 1")
                att = np.full((1, n), 1.0 / n)
            else:
                raise DataFormatError(f"utterances[{utt_id!r}]: needs attention or n_frames")
            att.setflags(write=False)
            utterances[utt_id] = (tables, att)
        return cls(vocab, shared, default, utterances)

    def _initial_state(self, acoustics):
        if acoustics not in self._utterances:
            raise ValueError(f"unknown utterance {acoustics!r} for table scorer")
        return (acoustics, ())

    def advance(self, state, token_id):
        utt_id, prefix = state
        self._check_token(token_id)
        return (utt_id, (*prefix, token_id))

    def n_frames(self, utt_id: str) -> int:
        return self._utterances[utt_id][1].shape[1]

    def score(self, state):
        utt_id, prefix = state
        tables, att = self._utterances[utt_id]
        ctx = " ".join(self.vocab.token(t) for t in prefix)
        logp = tables.get(ctx)
        if logp is None:
            logp = self._shared.get(ctx, self._default)
        row = att[min(len(prefix), att.shape[0] - 1)]
        return logp, row


def load_table_scorer(path) -> TableAcousticScorer:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return TableAcousticScorer.from_dict(doc)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


class BigramTableScorer(Scorer):
    """Exact bigram LM held as a dense row-stochastic matrix.

    Row i is the next-token log-distribution after token i.  The begin
    marker column is masked everywhere; rows are renormalized at
    construction.
    """

    def __init__(self, vocab: Vocabulary, log_matrix: np.ndarray):
        super().__init__(vocab)
        mat = np.array(log_matrix, dtype=np.float64)
        if mat.shape != (len(vocab), len(vocab)):
            raise ValueError(f"bigram matrix shape {mat.shape} does not match "
                             f"vocabulary size {len(vocab)}")
        mat[:, vocab.bos_id] = -np.inf
        self._log = np.vstack([log_normalize(row) for row in mat])
        self._log.setflags(write=False)

    @classmethod
    def from_conditionals(cls, vocab: Vocabulary,
                          cond: dict[str, dict[str, float]]) -> "BigramTableScorer":
        """Build from {previous word: {next word: probability}}.

        Words without a listed row fall back to the uniform distribution
        over everything but the begin marker.
        """
        n = len(vocab)
        mat = np.zeros((n, n))
        for prev, row in cond.items():
            vec = np.full(n, -np.inf)
            for word, p in row.items():
                if p > 0.0:
                    vec[vocab.id(word)] = math.log(p)
            mat[vocab.id(prev)] = vec
        return cls(vocab, mat)

    def _initial_state(self, acoustics):
        return self.vocab.bos_id

    def advance(self, state, token_id):
        return self._check_token(token_id)

    def score(self, state):
        return self._log[state], None
