"""Desk-scale grammatical error correction toolkit.

Seq2seq corrector trained with whole-word embedding dropout and an
edit-weighted MLE objective, decoded with iterative beam search, plus the
data plumbing around it: subword vocabularies, revision mining, synthetic
corruption, oversampling, checkpoint averaging and span-level F0.5 scoring.
"""

from .corpus import SentencePair, align_tokens, compute_stats, oversample
from .decoding import BeamConfig, IterativeDecodeConfig, beam_search, iterative_decode
from .estimator import TransformerCorrector
from .evaluation import Edit, extract_edits, f_beta, score_sentences
from .model import ModelConfig, TransformerModel, edited_mle_loss, word_dropout
from .noising import NoiseConfig, make_synthetic_corpus
from .subword import SubwordVocab, train_vocab
from .training import TrainConfig, average_checkpoints, train_loop

__all__ = [
    "SentencePair", "align_tokens", "compute_stats", "oversample",
    "BeamConfig", "IterativeDecodeConfig", "beam_search", "iterative_decode",
    "TransformerCorrector",
    "Edit", "extract_edits", "f_beta", "score_sentences",
    "ModelConfig", "TransformerModel", "edited_mle_loss", "word_dropout",
    "NoiseConfig", "make_synthetic_corpus",
    "SubwordVocab", "train_vocab",
    "TrainConfig", "average_checkpoints", "train_loop",
]
