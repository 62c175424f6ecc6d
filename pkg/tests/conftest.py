"""Shared fixtures: a small trained vocab and an overfit toy model.

Everything is seeded; torch runs single-threaded so numeric results are
stable across test runs on the same machine.
"""

import random

import pytest
import torch

torch.set_num_threads(1)

from minigec.corpus import SentencePair
from minigec.model import ModelConfig
from minigec.subword import train_vocab
from minigec.training import TrainConfig, encode_corpus, train_loop


CLEAN_SENTENCES = [
    "the boy reads a book .",
    "the girl writes a letter .",
    "my teacher opens the window .",
    "our doctor keeps the garden .",
    "the farmer takes a basket .",
    "your student finds the bottle .",
    "the writer makes a picture .",
    "their driver brings the ticket .",
    "the sister wants a jacket .",
    "my brother sees the mirror .",
    "the friend holds a candle .",
    "our neighbor cleans the table .",
]

# (corrupted, clean): one or two character-level errors each.
TOY_PAIRS = [
    ("the boy raeds a book .", "the boy reads a book ."),
    ("the girl writs a letter .", "the girl writes a letter ."),
    ("my teacher opns the window .", "my teacher opens the window ."),
    ("our doctr keeps the garden .", "our doctor keeps the garden ."),
    ("the farmer takse a basket .", "the farmer takes a basket ."),
    ("your studnet finds the bottle .", "your student finds the bottle ."),
    ("the writer maks a picture .", "the writer makes a picture ."),
    ("their drver brings the ticket .", "their driver brings the ticket ."),
    ("the sister wnats a jacket .", "the sister wants a jacket ."),
    ("my brothr sees the mirror .", "my brother sees the mirror ."),
    ("the freind holds a candle .", "the friend holds a candle ."),
    ("our neighbr cleans the table .", "our neighbor cleans the table ."),
    ("teh boy reads a book .", "the boy reads a book ."),
    ("the girl writes a lettr .", "the girl writes a letter ."),
    ("my teacher opens teh window .", "my teacher opens the window ."),
    ("our doctor keeps the gardn .", "our doctor keeps the garden ."),
    ("the farmr takes a basket .", "the farmer takes a basket ."),
    ("your student fnds the bottle .", "your student finds the bottle ."),
    ("the witer makes a picture .", "the writer makes a picture ."),
    ("their driver brngs the ticket .", "their driver brings the ticket ."),
    ("the sistr wants a jacket .", "the sister wants a jacket ."),
    ("my brother see the mirror .", "my brother sees the mirror ."),
    ("the friend hlds a candle .", "the friend holds a candle ."),
    ("our neighbor clens the table .", "our neighbor cleans the table ."),
    ("the boy reads a bok .", "the boy reads a book ."),
    ("the girl wrtes a letter .", "the girl writes a letter ."),
    ("my taecher opens the window .", "my teacher opens the window ."),
    ("our doctor keps the garden .", "our doctor keeps the garden ."),
    ("the farmer takes a baskt .", "the farmer takes a basket ."),
    ("your student finds the botle .", "your student finds the bottle ."),
    ("the writer makes a picure .", "the writer makes a picture ."),
    ("their driver brings the tickt .", "their driver brings the ticket ."),
]


def make_toy_pairs() -> list[SentencePair]:
    return [
        SentencePair(tuple(src.split()), tuple(tgt.split()), "toy")
        for src, tgt in TOY_PAIRS
    ]


@pytest.fixture(scope="session")
def small_vocab():
    corpus = CLEAN_SENTENCES + [src for src, _ in TOY_PAIRS]
    return train_vocab(corpus, target_size=380)


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory, small_vocab):
    """A tiny model trained to near-zero loss on 32 fixed pairs. Shared by the
    training-convergence and decoding tests."""
    pairs = make_toy_pairs()
    examples = encode_corpus(pairs, small_vocab, mle_weight=3.0)
    model_cfg = ModelConfig(
        layers=2, heads=2, d_model=48, d_ff=192, vocab_size=len(small_vocab),
        internal_dropout=0.0, p_src=0.0, p_tgt=0.0, mle_weight=3.0, max_len=128,
    )
    train_cfg = TrainConfig(
        steps=700, peak_lr=1e-3, warmup_steps=100, batch_tokens=800,
        checkpoint_every=0, seed=7, dev_decode_limit=0,
    )
    out_dir = tmp_path_factory.mktemp("overfit_run")
    result = train_loop(
        examples, pairs, small_vocab, model_cfg, train_cfg, out_dir, log_f05=False
    )
    result["pairs"] = pairs
    result["vocab"] = small_vocab
    result["model_cfg"] = model_cfg
    result["train_cfg"] = train_cfg
    result["examples"] = examples
    result["out_dir"] = out_dir
    return result


def rand_tokens(rng: random.Random, alphabet, lo=0, hi=6) -> tuple[str, ...]:
    return tuple(rng.choice(alphabet) for _ in range(rng.randint(lo, hi)))
