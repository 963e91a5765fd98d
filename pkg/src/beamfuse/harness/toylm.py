"""A trainable bigram language model over a logit table.

The model is deliberately tiny: one logit per (previous, next) pair with
a softmax over the valid next tokens (words plus the end marker).  It
exists to exercise the optimizers on a real convex objective and to
provide trained external language models for fusion experiments.
Training is full-batch cross-entropy, so a run is fully determined by
the corpus, optimizer, and epoch count; init is all zeros, which makes
the untrained model exactly uniform.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_softmax

from ..scorers import BOS, EOS, UNK, BigramTableScorer, Vocabulary
from .optim import AdamWState, adamw_step

_DEFAULT_LR = {"sgd": 2.0, "adamw": 0.1}


class ToyBigramLm(BigramTableScorer):
    """Trained bigram scorer that remembers its logits and loss curve."""

    def __init__(self, vocab: Vocabulary, logits: np.ndarray,
                 target_ids: Sequence[int], loss_history: Sequence[float]):
        full = np.full((len(vocab), len(vocab)), -np.inf)
        full[:, list(target_ids)] = log_softmax(logits, axis=1)
        super().__init__(vocab, full)
        self.logits = np.array(logits)
        self.logits.setflags(write=False)
        self.target_ids = tuple(target_ids)
        self.loss_history = list(loss_history)

    def to_arpa_tables(self) -> dict:
        """Natural-log n-gram tables in the layout the ARPA writer expects.

        Every (history, word) pair is listed, so backoff is never taken
        and the unigram section only provides the required vocabulary
        closure (uniform over words and the end marker).
        """
        vocab = self.vocab
        words = [t for t in vocab.tokens if t not in (BOS, EOS, UNK)]
        uni_p = -np.log(len(words) + 1)
        unigrams = {(w,): (uni_p, 0.0) for w in words}
        unigrams[(BOS,)] = (-np.inf, 0.0)
        unigrams[(EOS,)] = (uni_p, None)
        unigrams[(UNK,)] = (-np.inf, None)
        bigrams = {}
        for prev in [BOS, *words]:
            row = self._log[vocab.id(prev)]
            for nxt in [*words, EOS]:
                bigrams[(prev, nxt)] = (float(row[vocab.id(nxt)]), None)
        return {1: unigrams, 2: bigrams}


def _pair_counts(corpus: Iterable[Sequence[str]], vocab: Vocabulary) -> np.ndarray:
    counts = np.zeros((len(vocab), len(vocab)))
    sentences = 0
    for sentence in corpus:
        prev = vocab.bos_id
        for word in sentence:
            if word not in vocab:
                raise ValueError(f"corpus word {word!r} is not in the vocabulary")
            cur = vocab.id(word)
            counts[prev, cur] += 1.0
            prev = cur
        counts[prev, vocab.eos_id] += 1.0
        sentences += 1
    if sentences == 0:
        raise ValueError("training corpus is empty")
    return counts


def train_toy_lm(corpus: Iterable[Sequence[str]], optimizer: str = "adamw",
                 epochs: int = 500, seed: int = 0,
                 vocab: Vocabulary | None = None, lr: float | None = None,
                 weight_decay: float = 0.0) -> ToyBigramLm:
    """Fit the bigram logit table by full-batch cross-entropy descent.

    The objective is the mean negative log-likelihood over all observed
    (previous, next) pairs, including begin and end transitions.  The
    loss history records one value per epoch plus the final loss.  The
    run is deterministic; seed is accepted for interface uniformity with
    the samplers but does not influence the result.
    """
    corpus = [list(sentence) for sentence in corpus]
    if optimizer not in _DEFAULT_LR:
        raise ValueError(f"unknown optimizer {optimizer!r}; expected one of "
                         f"{sorted(_DEFAULT_LR)}")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if vocab is None:
        seen = sorted({w for sentence in corpus for w in sentence})
        vocab = Vocabulary(seen)
    counts_full = _pair_counts(corpus, vocab)
    target_ids = [i for i, t in enumerate(vocab.tokens) if t not in (BOS, UNK)]
    counts = counts_full[:, target_ids]
    total = counts.sum()
    step_size = _DEFAULT_LR[optimizer] if lr is None else lr

    theta = np.zeros((len(vocab), len(target_ids)))
    row_n = counts.sum(axis=1)
    state = None
    if optimizer == "adamw":
        state = AdamWState.initial(theta, lr=step_size, weight_decay=weight_decay)

    def loss_and_grad(logits):
        logp = log_softmax(logits, axis=1)
        loss = -float((counts * logp).sum()) / total
        grad = (row_n[:, None] * np.exp(logp) - counts) / total
        return loss, grad

    history = []
    for _ in range(epochs):
        loss, grad = loss_and_grad(theta)
        history.append(loss)
        if optimizer == "sgd":
            theta = theta - step_size * grad
        else:
            theta, state = adamw_step(theta, grad, state)
    history.append(loss_and_grad(theta)[0])
    return ToyBigramLm(vocab, theta, target_ids, history)
