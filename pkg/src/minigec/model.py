"""Encoder-decoder transformer with whole-word embedding dropout and the
weighted (edited) MLE objective.

The architecture is deliberately plain: pre-norm residual blocks, sinusoidal
positions, a shared input embedding for both sides and a separate output
projection. The two non-standard pieces live in `word_dropout` (zero every
subword of a sampled word, no rescaling) and `edited_mle_loss` (per-target
weights from a minimal-edit alignment against the source).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import NamedTuple, Sequence

import torch
from torch import nn

from .corpus import Alignment, EdgeType
from .subword import PAD_ID


@dataclass
class ModelConfig:
    layers: int = 2              # per side
    heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    vocab_size: int = 4000
    internal_dropout: float = 0.1
    p_src: float = 0.2           # source whole-word dropout
    p_tgt: float = 0.1           # target whole-word dropout
    mle_weight: float = 3.0      # Λ, weight on non-match target subwords
    max_len: int = 512

    def validate(self) -> None:
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        for name in ("internal_dropout", "p_src", "p_tgt"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.mle_weight < 1.0:
            raise ValueError("mle_weight must be >= 1")
        if min(self.layers, self.heads, self.d_model, self.d_ff, self.vocab_size) < 1:
            raise ValueError("model dimensions must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        presets = {
            "desk": dict(layers=2, heads=4, d_model=128, d_ff=512),
            "base": dict(layers=6, heads=8, d_model=512, d_ff=2048),
            "big": dict(layers=6, heads=16, d_model=1024, d_ff=4096, internal_dropout=0.3),
        }
        if name not in presets:
            raise ValueError(f"unknown preset {name!r} (choose from {sorted(presets)})")
        kwargs = dict(presets[name])
        kwargs.update(overrides)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def word_dropout(
    emb: torch.Tensor,
    word_ids: torch.Tensor,
    p: float,
    training: bool,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Zero all subword embeddings of each word independently with
    probability p. No rescaling of survivors; identity in eval mode.

    word_ids: same shape as emb[..., 0]; subwords of one word share an id,
    and id -1 marks positions never dropped (specials, padding).
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if not training or p == 0.0 or emb.numel() == 0:
        return emb
    if word_ids.shape != emb.shape[:-1]:
        raise ValueError("word_ids shape must match embedding positions")
    n_words = int(word_ids.max().item()) + 1
    if n_words <= 0:
        return emb
    keep = torch.rand(
        emb.shape[0], n_words, device=emb.device, generator=generator
    ) >= p
    kept = keep.gather(1, word_ids.clamp(min=0)) | (word_ids < 0)
    return emb * kept.unsqueeze(-1).to(emb.dtype)


def target_weights(
    alignment: Alignment, mle_weight: float, target_len: int | None = None
) -> list[float]:
    """Per-target-subword loss weights: 1 for MATCH positions, Λ for SUB and
    INS. Deletions consume no target position and get no weight."""
    weights = [
        1.0 if e.type is EdgeType.MATCH else float(mle_weight)
        for e in alignment.edges
        if e.type is not EdgeType.DEL
    ]
    if target_len is not None and len(weights) != target_len:
        raise ValueError(
            f"alignment covers {len(weights)} target tokens, expected {target_len}"
        )
    return weights


class LossResult(NamedTuple):
    total: torch.Tensor      # Σ λ_t · NLL_t, the objective as written
    per_token: torch.Tensor  # total / number of weighted tokens


def edited_mle_loss(
    log_probs: torch.Tensor, tgt_ids: torch.Tensor, weights: torch.Tensor
) -> LossResult:
    """Weighted negative log-likelihood −Σ λ_t log P(y_t | ·).

    Accepts (T, V) or (B, T, V) log-probabilities. Padding positions carry
    weight 0 and therefore contribute nothing. per_token divides by the
    count of nonzero-weight positions.
    """
    if log_probs.dim() == 2:
        log_probs, tgt_ids, weights = (
            log_probs.unsqueeze(0), tgt_ids.unsqueeze(0), weights.unsqueeze(0)
        )
    if tgt_ids.shape != log_probs.shape[:2] or weights.shape != tgt_ids.shape:
        raise ValueError("log_probs, tgt_ids and weights lengths disagree")
    picked = log_probs.gather(-1, tgt_ids.unsqueeze(-1)).squeeze(-1)
    if not torch.isfinite(picked).all():
        raise FloatingPointError("nonfinite log-probability in loss")
    total = -(picked * weights).sum()
    n_tokens = (weights != 0).sum().clamp(min=1)
    return LossResult(total, total / n_tokens)


def check_finite_gradients(model: nn.Module) -> None:
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise FloatingPointError(f"nonfinite gradient in {name}")


def _sinusoid_table(max_len: int, d_model: int) -> torch.Tensor:
    pos = torch.arange(max_len, dtype=torch.float64).unsqueeze(1)
    dim = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, dim / d_model)
    table = torch.zeros(max_len, d_model, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angle)
    table[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return table.float()


class _Attention(nn.Module):
    def __init__(self, d_model: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, q, kv, mask) -> torch.Tensor:
        # mask: bool, broadcastable to (B, heads, Tq, Tk); True = may attend
        b, tq, _ = q.shape
        tk = kv.shape[1]
        split = lambda x, t: x.view(b, t, self.heads, self.d_head).transpose(1, 2)
        qh = split(self.q_proj(q), tq)
        kh = split(self.k_proj(kv), tk)
        vh = split(self.v_proj(kv), tk)
        scores = qh @ kh.transpose(-1, -2) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~mask, float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        out = (attn @ vh).transpose(1, 2).reshape(b, tq, -1)
        return self.out_proj(out)


class _FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, d_ff), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(d_ff, d_model),
        )

    def forward(self, x):
        return self.net(x)


class _EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.attn = _Attention(cfg.d_model, cfg.heads, cfg.internal_dropout)
        self.ff = _FeedForward(cfg.d_model, cfg.d_ff, cfg.internal_dropout)
        self.drop = nn.Dropout(cfg.internal_dropout)

    def forward(self, x, mask):
        h = self.ln1(x)
        x = x + self.drop(self.attn(h, h, mask))
        x = x + self.drop(self.ff(self.ln2(x)))
        return x


class _DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.ln3 = nn.LayerNorm(cfg.d_model)
        self.self_attn = _Attention(cfg.d_model, cfg.heads, cfg.internal_dropout)
        self.cross_attn = _Attention(cfg.d_model, cfg.heads, cfg.internal_dropout)
        self.ff = _FeedForward(cfg.d_model, cfg.d_ff, cfg.internal_dropout)
        self.drop = nn.Dropout(cfg.internal_dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.ln1(x)
        x = x + self.drop(self.self_attn(h, h, self_mask))
        x = x + self.drop(self.cross_attn(self.ln2(x), memory, cross_mask))
        x = x + self.drop(self.ff(self.ln3(x)))
        return x


class TransformerModel(nn.Module):
    """Seq2seq transformer returning normalized log-probabilities.

    Conventions: source sequences end with EOS; decoder input starts with
    BOS; padding is PAD_ID on both sides.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.register_buffer("pos_table", _sinusoid_table(cfg.max_len, cfg.d_model))
        self.enc_layers = nn.ModuleList(_EncoderLayer(cfg) for _ in range(cfg.layers))
        self.dec_layers = nn.ModuleList(_DecoderLayer(cfg) for _ in range(cfg.layers))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.out_proj = nn.Linear(cfg.d_model, cfg.vocab_size)
        self.drop = nn.Dropout(cfg.internal_dropout)
        self._init_params()

    def _init_params(self) -> None:
        # uniform fan-in scaling throughout; biases start at zero
        for module in self.modules():
            if isinstance(module, nn.Linear):
                bound = 1.0 / math.sqrt(module.in_features)
                nn.init.uniform_(module.weight, -bound, bound)
                nn.init.zeros_(module.bias)
        nn.init.uniform_(
            self.embed.weight,
            -1.0 / math.sqrt(self.cfg.d_model),
            1.0 / math.sqrt(self.cfg.d_model),
        )

    def _check_ids(self, ids: torch.Tensor) -> None:
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise ValueError("token id out of vocabulary range")
        if ids.shape[-1] > self.cfg.max_len:
            raise ValueError(f"sequence longer than max_len={self.cfg.max_len}")

    def _embed(self, ids, word_ids, p_word, generator):
        x = self.embed(ids) * math.sqrt(self.cfg.d_model)
        if word_ids is not None:
            x = word_dropout(x, word_ids, p_word, self.training, generator)
        x = x + self.pos_table[: ids.shape[1]].to(x.dtype)
        return self.drop(x)

    def encode(self, src_ids, src_word_ids=None, generator=None):
        self._check_ids(src_ids)
        src_keep = (src_ids != PAD_ID)[:, None, None, :]  # (B,1,1,S)
        x = self._embed(src_ids, src_word_ids, self.cfg.p_src, generator)
        for layer in self.enc_layers:
            x = layer(x, src_keep)
        return self.enc_norm(x), src_keep

    def decode(self, memory, src_keep, tgt_in_ids, tgt_word_ids=None, generator=None):
        self._check_ids(tgt_in_ids)
        t = tgt_in_ids.shape[1]
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_in_ids.device).tril()
        self_mask = causal[None, None] & (tgt_in_ids != PAD_ID)[:, None, None, :]
        x = self._embed(tgt_in_ids, tgt_word_ids, self.cfg.p_tgt, generator)
        for layer in self.dec_layers:
            x = layer(x, memory, self_mask, src_keep)
        logits = self.out_proj(self.dec_norm(x))
        return torch.log_softmax(logits, dim=-1)

    def forward(
        self,
        src_ids: torch.Tensor,
        tgt_in_ids: torch.Tensor,
        src_word_ids: torch.Tensor | None = None,
        tgt_word_ids: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Log-probabilities of shape (B, T, vocab_size); rows normalize."""
        memory, src_keep = self.encode(src_ids, src_word_ids, generator)
        return self.decode(memory, src_keep, tgt_in_ids, tgt_word_ids, generator)

    @torch.no_grad()
    def next_logprobs(self, memory, src_keep, prefix_ids) -> torch.Tensor:
        """Distribution over the next token given decoder prefixes (B, T)."""
        out = self.decode(memory, src_keep, prefix_ids)
        return out[:, -1, :]


def pad_batch(seqs: Sequence[Sequence[int]], pad: int = PAD_ID) -> torch.Tensor:
    width = max((len(s) for s in seqs), default=0)
    out = torch.full((len(seqs), max(width, 1)), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        if s:
            out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out
