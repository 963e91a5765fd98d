"""Back-off n-gram language models in the ARPA text format.

Log10 values from the file are converted to natural logs at load time;
everything downstream works in natural logs.  Scoring follows the standard
back-off recursion: use the listed probability when the full n-gram exists,
otherwise multiply the history's back-off weight into the next-shorter
estimate.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .base import BOS, EOS, UNK, Scorer, Vocabulary, log_normalize

LN10 = math.log(10.0)

# log10 placeholder for "never predicted" entries such as the unigram
# probability of the begin marker
_ARPA_ZERO = -99.0


class NgramScorer(Scorer):
    """Scorer over an ARPA back-off model.

    The decoding state is the tuple of the most recent order-1 token ids, so
    two prefixes sharing an n-gram context compare equal and are merged by
    the decoder's hypothesis bookkeeping.
    """

    def __init__(self, vocab: Vocabulary, order: int,
                 probs: dict[tuple[int, ...], float],
                 backoffs: dict[tuple[int, ...], float]):
        super().__init__(vocab)
        self.order = order
        self._probs = probs
        self._backoffs = backoffs
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def _initial_state(self, acoustics) -> tuple[int, ...]:
        if self.order == 1:
            return ()
        return (self.vocab.bos_id,)

    def advance(self, state, token_id):
        self._check_token(token_id)
        if self.order == 1:
            return ()
        return (*state, token_id)[-(self.order - 1):]

    def log_prob(self, history: tuple[int, ...], token_id: int) -> float:
        """Raw back-off conditional; no masking or renormalization."""
        hist = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        return self._backoff(hist, token_id)

    def _backoff(self, hist, token_id):
        key = hist + (token_id,)
        if key in self._probs:
            return self._probs[key]
        if not hist:
            return float("-inf")
        return self._backoffs.get(hist, 0.0) + self._backoff(hist[1:], token_id)

    def score(self, state):
        cached = self._cache.get(state)
        if cached is None:
            raw = np.array([self._backoff(state, w) for w in range(len(self.vocab))])
            raw[self.vocab.bos_id] = -np.inf  # the begin marker is never emitted
            cached = log_normalize(raw)
            cached.setflags(write=False)
            self._cache[state] = cached
        return cached, None


def load_ngram(text: str) -> NgramScorer:
    """Parse ARPA text into a scorer; errors carry 1-based line numbers."""
    lines = text.splitlines()
    counts: dict[int, int] = {}
    probs: dict[int, dict[tuple[str, ...], float]] = {}
    backoffs: dict[int, dict[tuple[str, ...], float]] = {}

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            raise DataFormatError(f"line {i + 1}: expected \\data\\ header")
        i += 1
    if i == len(lines):
        raise DataFormatError("missing \\data\\ header")
    i += 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("\\"):
            break
        if not line.startswith("ngram "):
            raise DataFormatError(f"line {i + 1}: expected 'ngram N=count', got {line!r}")
        try:
            n_str, count_str = line[len("ngram "):].split("=")
            counts[int(n_str)] = int(count_str)
        except ValueError as exc:
            raise DataFormatError(f"line {i + 1}: bad ngram count line {line!r}") from exc
        i += 1
    if not counts:
        raise DataFormatError("\\data\\ section declares no n-gram orders")
    order = max(counts)

    current_n = None
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line == "\\end\\":
            current_n = None
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current_n = int(line[1:-len("-grams:")])
            except ValueError as exc:
                raise DataFormatError(f"line {i + 1}: bad section header {line!r}") from exc
            if current_n not in counts:
                raise DataFormatError(f"line {i + 1}: section {line!r} not declared in \\data\\")
            probs[current_n] = {}
            backoffs[current_n] = {}
            i += 1
            continue
        if current_n is None:
            raise DataFormatError(f"line {i + 1}: content outside any n-gram section")
        fields = line.split()
        if len(fields) == current_n + 1:
            backoff = None
        elif len(fields) == current_n + 2:
            backoff = fields[-1]
        else:
            raise DataFormatError(
                f"line {i + 1}: expected {current_n + 1} or {current_n + 2} fields, "
                f"got {len(fields)}")
        try:
            logp = float(fields[0]) * LN10
            words = tuple(fields[1:current_n + 1])
            if backoff is not None:
                backoffs[current_n][words] = float(backoff) * LN10
        except ValueError as exc:
            raise DataFormatError(f"line {i + 1}: bad numeric field in {line!r}") from exc
        probs[current_n][words] = logp
        i += 1
    if current_n is not None:
        raise DataFormatError("missing \\end\\ marker")

    for n, declared in counts.items():
        actual = len(probs.get(n, ()))
        if actual != declared:
            raise DataFormatError(
                f"\\data\\ declares {declared} {n}-grams but section lists {actual}")
    if 1 not in probs:
        raise DataFormatError("model has no unigram section")

    # Canonical vocabulary order (markers first, then sorted words) so
    # scorers loaded from different files over the same word set agree on
    # token ids and can be fused.
    vocab = Vocabulary(sorted(w for (w,) in probs[1]
                              if w not in (BOS, EOS, UNK)))
    id_probs: dict[tuple[int, ...], float] = {}
    id_backoffs: dict[tuple[int, ...], float] = {}
    for n in probs:
        for words, logp in probs[n].items():
            try:
                key = tuple(vocab.id(w) for w in words)
            except KeyError as exc:
                raise DataFormatError(f"{n}-gram uses word {exc.args[0]!r} "
                                      "absent from the unigram section") from exc
            id_probs[key] = logp
        for words, bo in backoffs[n].items():
            id_backoffs[tuple(vocab.id(w) for w in words)] = bo
    return NgramScorer(vocab, order, id_probs, id_backoffs)


def read_arpa(path) -> NgramScorer:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return load_ngram(text)
    except DataFormatError as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def format_arpa(ngrams: dict[int, dict[tuple[str, ...], tuple[float, float | None]]]) -> str:
    """Render {order: {words: (ln_prob, ln_backoff or None)}} as ARPA text.

    Natural-log inputs are converted to log10.  Zero probabilities are
    written with the conventional -99 placeholder.  Entries are sorted for
    byte-stable output.
    """
    out = ["\\data\\"]
    for n in sorted(ngrams):
        out.append(f"ngram {n}={len(ngrams[n])}")
    for n in sorted(ngrams):
        out += ["", f"\\{n}-grams:"]
        for words in sorted(ngrams[n]):
            ln_p, ln_bo = ngrams[n][words]
            log10_p = ln_p / LN10 if math.isfinite(ln_p) else _ARPA_ZERO
            line = f"{max(log10_p, _ARPA_ZERO):.6f}\t{' '.join(words)}"
            if ln_bo is not None:
                line += f"\t{ln_bo / LN10:.6f}"
            out.append(line)
    out += ["", "\\end\\", ""]
    return "\n".join(out)


def write_arpa(path, ngrams) -> None:
    Path(path).write_text(format_arpa(ngrams))
