"""Next-token scorers: the vocabulary, LM and acoustic-table models."""

from .base import (
    BOS,
    EOS,
    UNK,
    Scorer,
    Vocabulary,
    build_cross_utterance_context,
    log_normalize,
    logsumexp,
    probability_ratio,
    smooth,
)
from .ngram import NgramScorer, format_arpa, load_ngram, read_arpa, write_arpa
from .table import BigramTableScorer, TableAcousticScorer, load_table_scorer

__all__ = [
    "BOS",
    "EOS",
    "UNK",
    "BigramTableScorer",
    "NgramScorer",
    "Scorer",
    "TableAcousticScorer",
    "Vocabulary",
    "build_cross_utterance_context",
    "format_arpa",
    "load_ngram",
    "load_table_scorer",
    "log_normalize",
    "logsumexp",
    "probability_ratio",
    "read_arpa",
    "smooth",
    "write_arpa",
]
