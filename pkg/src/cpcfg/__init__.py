"""Compound and neural PCFGs for unsupervised constituency parsing."""

from .chart import ParseTree, enumerate_parses, expected_rule_counts, inside_logZ, viterbi_parse
from .grammar import Grammar, ModelConfig, RuleTable, SymbolInventory, degenerate_check
from .model import CompoundPCFG, build_model, decode
from .trainer import Checkpoint, TrainConfig, elbo_loss, perplexity, train
from .variational import Encoder, LatentPosterior, kl_to_prior, map_embedding, sample_z

__version__ = "0.1.0"

__all__ = [
    "ParseTree", "enumerate_parses", "expected_rule_counts", "inside_logZ", "viterbi_parse",
    "Grammar", "ModelConfig", "RuleTable", "SymbolInventory", "degenerate_check",
    "CompoundPCFG", "build_model", "decode",
    "Checkpoint", "TrainConfig", "elbo_loss", "perplexity", "train",
    "Encoder", "LatentPosterior", "kl_to_prior", "map_embedding", "sample_z",
]
