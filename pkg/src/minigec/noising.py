"""Synthetic corruption for weakly-supervised training pairs.

Character-level spelling noise (insert / delete / transpose / replace),
substring infilling with a reserved marker, word-level corruption for the
synthetic corpus generator, and identity-pair downsampling. Every operation
is a deterministic function of (input, config, seed).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, asdict
from typing import Sequence

from .corpus import SentencePair
from .subword import INFILL_MARKER
from .tokenizer import tokenize

# Random insert/replace characters: printable ASCII including space.
_CHAR_POOL = [chr(c) for c in range(32, 127)]

_SPELL_OPS = ("insert", "delete", "transpose", "replace")


@dataclass
class NoiseConfig:
    p_spell: float = 0.003          # per character position
    p_infill: float = 0.01          # per sentence
    infill_max_len: int = 8         # characters
    identity_keep: float = 0.04
    p_word: float = 0.0             # per word, synthetic corpus only
    rng_seed: int = 0

    def validate(self) -> None:
        for name in ("p_spell", "p_infill", "identity_keep", "p_word"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.infill_max_len < 1:
            raise ValueError(f"infill_max_len must be >= 1, got {self.infill_max_len}")

    def rng(self) -> random.Random:
        return random.Random(self.rng_seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SnapshotPair:
    """Two consecutive retained snapshots of one page."""

    older_text: str
    newer_text: str
    page_id: str = ""
    older_timestamp: str = ""
    newer_timestamp: str = ""


def apply_spelling_noise(text: str, cfg: NoiseConfig, rng: random.Random) -> str:
    """Corrupt characters: at each position, with probability ``p_spell``,
    insert a random character, delete the character, transpose it with the
    next one, or replace it with a random one (edit chosen uniformly).

    A transpose consumes the following character as well; on the last
    character it degenerates to a no-op.
    """
    if cfg.p_spell <= 0.0 or not text:
        return text
    out: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if rng.random() >= cfg.p_spell:
            out.append(ch)
            i += 1
            continue
        op = _SPELL_OPS[rng.randrange(4)]
        if op == "insert":
            out.append(rng.choice(_CHAR_POOL))
            out.append(ch)
            i += 1
        elif op == "delete":
            i += 1
        elif op == "transpose":
            if i + 1 < n:
                out.append(text[i + 1])
                out.append(ch)
                i += 2
            else:
                out.append(ch)
                i += 1
        else:
            out.append(rng.choice(_CHAR_POOL))
            i += 1
    return "".join(out)


def apply_infill_noise(text: str, cfg: NoiseConfig, rng: random.Random) -> str:
    """With probability ``p_infill``, replace one uniformly chosen substring
    of length 1..infill_max_len with the reserved marker (source side only).
    Text already containing the marker is left untouched."""
    if cfg.p_infill <= 0.0 or not text or INFILL_MARKER in text:
        return text
    if rng.random() >= cfg.p_infill:
        return text
    length = rng.randint(1, min(cfg.infill_max_len, len(text)))
    start = rng.randrange(len(text) - length + 1)
    return text[:start] + INFILL_MARKER + text[start + length:]


def downsample_identity(
    pairs: Sequence[SentencePair], cfg: NoiseConfig, rng: random.Random
) -> list[SentencePair]:
    """Keep every non-identity pair; keep each identity pair independently
    with probability ``identity_keep``."""
    kept = []
    for p in pairs:
        if not p.is_identity or rng.random() < cfg.identity_keep:
            kept.append(p)
    return kept


def corrupt_words(tokens: Sequence[str], cfg: NoiseConfig, rng: random.Random) -> list[str]:
    """Word-level corruption: with probability ``p_word`` per word, drop it,
    duplicate it, or swap it with the next one."""
    if cfg.p_word <= 0.0:
        return list(tokens)
    out: list[str] = []
    i = 0
    n = len(tokens)
    while i < n:
        tok = tokens[i]
        if rng.random() >= cfg.p_word:
            out.append(tok)
            i += 1
            continue
        op = rng.randrange(3)
        if op == 0:  # drop
            i += 1
        elif op == 1:  # duplicate
            out.append(tok)
            out.append(tok)
            i += 1
        else:  # swap with next (no-op on the last word)
            if i + 1 < n:
                out.append(tokens[i + 1])
                out.append(tok)
                i += 2
            else:
                out.append(tok)
                i += 1
    return out


def corrupt_sentence(text: str, cfg: NoiseConfig, rng: random.Random) -> str:
    """Full corruption pipeline for one sentence: word-level edits, then
    spelling noise, then optional infilling."""
    noisy = " ".join(corrupt_words(text.split(), cfg, rng))
    noisy = apply_spelling_noise(noisy, cfg, rng)
    noisy = apply_infill_noise(noisy, cfg, rng)
    return noisy


def make_synthetic_corpus(
    clean_sentences: Sequence[str],
    cfg: NoiseConfig,
    rng: random.Random | None = None,
    dataset_tag: str = "synthetic",
) -> list[SentencePair]:
    """Build (corrupted, clean) pairs from clean text.

    The target is the clean sentence; the source is the same sentence with
    word-level, spelling and infill corruptions applied. Sentences whose
    corrupted side tokenizes to nothing keep their clean source so both
    sides stay non-empty.
    """
    cfg.validate()
    rng = rng if rng is not None else cfg.rng()
    pairs = []
    for sent in clean_sentences:
        tgt = tuple(tokenize(sent))
        if not tgt:
            continue
        noisy = corrupt_sentence(" ".join(tgt), cfg, rng)
        src = tuple(tokenize(noisy))
        if not src:
            src = tgt
        pairs.append(SentencePair(src, tgt, dataset_tag))
    return pairs
