"""Learned self-training for sequence labeling.

A linear-chain CRF tagger, a Q-network that decides which automatically
tagged sentences to add to the training set, the random and
confidence-based baselines, and an experiment harness.
"""

from .crf import CRFTagger, train_crf
from .data import (
    Corpus, Sentence, SyntheticSpec, TagSet, gen_shifted_synthetic, gen_synthetic, parse_conll,
)
from .dqn import QNetwork
from .embeddings import EmbeddingTable, load_embeddings
from .exceptions import GradientCheckError, NumericError, ParseError, RejectedInputError
from .selftrain import (
    RunConfig, RunResult, SelfTrainingTagger, initial_set, run_cross_domain, run_dqn_selftrain,
    run_no_sl, run_rd, run_tsl, train_dqn,
)

__version__ = "0.1.0"

__all__ = [
    "CRFTagger", "Corpus", "EmbeddingTable", "GradientCheckError", "NumericError",
    "ParseError", "QNetwork", "RejectedInputError", "RunConfig", "RunResult",
    "SelfTrainingTagger", "Sentence", "SyntheticSpec", "TagSet", "gen_shifted_synthetic",
    "gen_synthetic", "initial_set", "load_embeddings", "parse_conll", "run_cross_domain",
    "run_dqn_selftrain", "run_no_sl", "run_rd", "run_tsl", "train_crf", "train_dqn",
]
