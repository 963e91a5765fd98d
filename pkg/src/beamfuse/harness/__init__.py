"""Synthetic tasks with closed-form posteriors, plus training utilities."""

from .hmm import (
    NORM_TOL,
    AlignmentState,
    ExactE2eScorer,
    HmmTask,
    Utterance,
    exact_e2e_scorer,
    exact_internal_lm,
    expected_label_unigram,
    generate,
    load_task,
    task_from_dict,
)
from .corpusio import corpus_manifest, read_corpus, write_corpus
from .evaluate import SYSTEMS, FusionComparison, eval_fusion, eval_fusion_from_config
from .optim import AdamWState, adamw_step
from .toylm import ToyBigramLm, train_toy_lm

__all__ = [
    "NORM_TOL",
    "SYSTEMS",
    "AdamWState",
    "AlignmentState",
    "ExactE2eScorer",
    "FusionComparison",
    "HmmTask",
    "ToyBigramLm",
    "Utterance",
    "eval_fusion",
    "eval_fusion_from_config",
    "adamw_step",
    "corpus_manifest",
    "exact_e2e_scorer",
    "exact_internal_lm",
    "expected_label_unigram",
    "generate",
    "load_task",
    "read_corpus",
    "task_from_dict",
    "train_toy_lm",
    "write_corpus",
]
