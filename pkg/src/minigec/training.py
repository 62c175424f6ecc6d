"""Training loop, LR schedules, checkpoint persistence and averaging.

Checkpoints use a self-contained binary format: an 8-byte little-endian
manifest length, a JSON manifest (format version, step, config fingerprint,
tensor directory), then the raw float32 little-endian payload. Writes are
atomic (temp file + rename). Optimizer state is not persisted; finetuning
restarts the moment estimates.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import struct
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Callable, Sequence

import torch

from .corpus import SentencePair, align_tokens
from .model import ModelConfig, TransformerModel, edited_mle_loss, target_weights, \
    check_finite_gradients, pad_batch
from .subword import BOS_ID, EOS_ID, SubwordVocab

SCHEDULES = ("rsqrt", "linear-then-constant")
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    steps: int = 1000
    peak_lr: float = 3e-4        # large multi-GPU runs typically want 0.011
    warmup_steps: int = 8000
    schedule: str = "rsqrt"
    batch_tokens: int = 2000
    checkpoint_every: int = 500
    seed: int = 0
    clip_norm: float = 1.0       # 0 disables clipping
    dev_decode_limit: int = 200  # sentences decoded for dev F0.5; 0 = all

    def validate(self) -> None:
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.batch_tokens < 1 or self.steps < 0 or self.checkpoint_every < 0:
            raise ValueError("steps, batch_tokens, checkpoint_every must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    if step < 1:
        raise ValueError("step must be >= 1")
    warm = cfg.warmup_steps
    if cfg.schedule == "rsqrt":
        return cfg.peak_lr * min(step / warm, math.sqrt(warm / step))
    return cfg.peak_lr * min(step / warm, 1.0)


def finetune_schedule(step: int, peak_lr: float = 3e-4, warmup_steps: int = 20_000) -> float:
    """Linear warmup to peak_lr, constant thereafter."""
    if step < 1:
        raise ValueError("step must be >= 1")
    return peak_lr * min(step / warmup_steps, 1.0)


# --- corpus encoding ---

@dataclass
class TrainExample:
    src: list[int]           # source ids + EOS
    tgt_in: list[int]        # BOS + target ids
    tgt_out: list[int]       # target ids + EOS
    weights: list[float]     # λ per tgt_out position (EOS weighted 1)
    src_word_ids: list[int]
    tgt_word_ids: list[int]  # aligned with tgt_in

    @property
    def width(self) -> int:
        return max(len(self.src), len(self.tgt_in))


def encode_pair(pair: SentencePair, vocab: SubwordVocab, mle_weight: float) -> TrainExample:
    src_ids = vocab.encode(pair.source_text)
    tgt_ids = vocab.encode(pair.target_text)
    align = align_tokens(tuple(src_ids), tuple(tgt_ids))
    lam = target_weights(align, mle_weight, target_len=len(tgt_ids))
    src_words = vocab.word_ids(src_ids)
    tgt_words = vocab.word_ids(tgt_ids)
    return TrainExample(
        src=src_ids + [EOS_ID],
        tgt_in=[BOS_ID] + tgt_ids,
        tgt_out=tgt_ids + [EOS_ID],
        weights=lam + [1.0],
        src_word_ids=src_words + [-1],
        tgt_word_ids=[-1] + tgt_words,
    )


def encode_corpus(
    pairs: Sequence[SentencePair], vocab: SubwordVocab, mle_weight: float
) -> list[TrainExample]:
    return [encode_pair(p, vocab, mle_weight) for p in pairs]


def make_batches(examples: Sequence[TrainExample], batch_tokens: int) -> list[list[TrainExample]]:
    """Length-bucketed batches under a padded-token budget (budget counts
    the padded width of the longer side times the batch size)."""
    ordered = sorted(examples, key=lambda e: (e.width, e.src, e.tgt_in))
    batches: list[list[TrainExample]] = []
    cur: list[TrainExample] = []
    cur_width = 0
    for ex in ordered:
        width = max(cur_width, ex.width)
        if cur and width * (len(cur) + 1) > batch_tokens:
            batches.append(cur)
            cur, cur_width = [], 0
            width = ex.width
        cur.append(ex)
        cur_width = width
    if cur:
        batches.append(cur)
    return batches


def collate(batch: Sequence[TrainExample]) -> dict[str, torch.Tensor]:
    src = pad_batch([e.src for e in batch])
    tgt_in = pad_batch([e.tgt_in for e in batch])
    tgt_out = pad_batch([e.tgt_out for e in batch])
    weights = torch.zeros_like(tgt_out, dtype=torch.float32)
    src_words = torch.full_like(src, -1)
    tgt_words = torch.full_like(tgt_in, -1)
    for i, e in enumerate(batch):
        weights[i, : len(e.weights)] = torch.tensor(e.weights)
        src_words[i, : len(e.src_word_ids)] = torch.tensor(e.src_word_ids, dtype=torch.long)
        tgt_words[i, : len(e.tgt_word_ids)] = torch.tensor(e.tgt_word_ids, dtype=torch.long)
    return dict(src=src, tgt_in=tgt_in, tgt_out=tgt_out, weights=weights,
                src_words=src_words, tgt_words=tgt_words)


# --- checkpoints ---

def config_fingerprint(cfg: ModelConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: str | Path, params: dict[str, torch.Tensor],
                    step: int, fingerprint: str,
                    model_config: dict | None = None) -> None:
    path = Path(path)
    names = sorted(params)
    tensors = []
    offset = 0
    for name in names:
        t = params[name].detach().to(torch.float32).contiguous()
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.numel() * 4
    manifest = json.dumps({
        "format_version": FORMAT_VERSION,
        "step": step,
        "config_fingerprint": fingerprint,
        "model_config": model_config,
        "tensors": tensors,
    }).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for name in names:
            t = params[name].detach().to(torch.float32).contiguous()
            fh.write(t.numpy().astype("<f4", copy=False).tobytes())
    os.replace(tmp, path)


@dataclass
class Checkpoint:
    params: dict[str, torch.Tensor]
    step: int
    fingerprint: str
    model_config: dict | None = None


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        (mlen,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format in {path}")
        payload = fh.read()
    params = {}
    for entry in manifest["tensors"]:
        numel = 1
        for d in entry["shape"]:
            numel *= d
        start = entry["offset"]
        raw = payload[start : start + numel * 4]
        t = torch.frombuffer(bytearray(raw), dtype=torch.float32).reshape(entry["shape"])
        params[entry["name"]] = t.clone()
    return Checkpoint(params, manifest["step"], manifest["config_fingerprint"],
                      manifest.get("model_config"))


def average_checkpoints(checkpoints: Sequence[Checkpoint | str | Path]) -> dict[str, torch.Tensor]:
    """Elementwise mean of parameter tensors. The per-element addends are
    sorted before summation, so the result is exactly permutation-invariant."""
    loaded = [c if isinstance(c, Checkpoint) else load_checkpoint(c) for c in checkpoints]
    if not loaded:
        raise ValueError("need at least one checkpoint")
    first = loaded[0]
    for c in loaded[1:]:
        if c.fingerprint != first.fingerprint:
            raise ValueError("config fingerprint mismatch across checkpoints")
        if set(c.params) != set(first.params):
            raise ValueError("tensor name mismatch across checkpoints")
    out = {}
    for name, t0 in first.params.items():
        stack = []
        for c in loaded:
            if c.params[name].shape != t0.shape:
                raise ValueError(f"shape mismatch for {name}")
            stack.append(c.params[name].to(torch.float64))
        stacked = torch.stack(stack).sort(dim=0).values
        out[name] = (stacked.sum(dim=0) / len(loaded)).to(torch.float32)
    return out


def params_of(model: TransformerModel) -> dict[str, torch.Tensor]:
    return {k: v.detach().clone() for k, v in model.named_parameters()}


def load_params(model: TransformerModel, params: dict[str, torch.Tensor]) -> None:
    own = dict(model.named_parameters())
    if set(own) != set(params):
        raise ValueError("parameter names do not match model config")
    with torch.no_grad():
        for k, v in params.items():
            if own[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}")
            own[k].copy_(v)


# --- evaluation hooks used during training ---

@torch.no_grad()
def dev_loss(model: TransformerModel, examples: Sequence[TrainExample],
             batch_tokens: int = 4000) -> float:
    """Plain per-token NLL (all weights 1) on encoded dev pairs."""
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    for batch in make_batches(examples, batch_tokens):
        t = collate(batch)
        lp = model(t["src"], t["tgt_in"])
        ones = (t["weights"] != 0).to(lp.dtype)
        res = edited_mle_loss(lp, t["tgt_out"], ones)
        total += res.total.item()
        count += int(ones.sum().item())
    if was_training:
        model.train()
    if count == 0:
        raise ValueError("dev set is empty")
    return total / count


def _dev_f05(model, dev_pairs, vocab, limit: int) -> float:
    from .decoding import BeamConfig, make_decode_fn
    from .evaluation import score_sentences
    from .tokenizer import tokenize

    subset = dev_pairs[:limit] if limit else dev_pairs
    decode = make_decode_fn(model, vocab, BeamConfig(beam_size=1))
    rows = []
    for pair in subset:
        best = decode(pair.source_text)[0].text
        rows.append((pair.source, tuple(tokenize(best)), pair.target))
    return score_sentences(rows).f05


# --- the loop ---

def train_loop(
    train_examples: Sequence[TrainExample],
    dev_pairs: Sequence[SentencePair],
    vocab: SubwordVocab,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
    init_params: dict[str, torch.Tensor] | None = None,
    schedule_fn: Callable[[int], float] | None = None,
    log_f05: bool = True,
) -> dict:
    """Run cfg.steps optimizer steps; write checkpoints and a JSONL metrics
    log under out_dir. Returns {"checkpoints": [paths], "metrics": [...]}.
    Deterministic for a fixed seed (single process)."""
    cfg.validate()
    model_cfg.validate()
    if not train_examples:
        raise ValueError("training corpus is empty")
    if not dev_pairs:
        raise ValueError("dev set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    model = TransformerModel(model_cfg)
    if init_params is not None:
        load_params(model, init_params)
    fingerprint = config_fingerprint(model_cfg)
    opt = torch.optim.Adam(model.parameters(), lr=1.0, betas=(0.9, 0.98), eps=1e-9)
    sched = schedule_fn or (lambda s: lr_schedule(s, cfg))

    dev_examples = encode_corpus(dev_pairs, vocab, 1.0)
    batches = make_batches(train_examples, cfg.batch_tokens)
    order: list[int] = []

    metrics: list[dict] = []
    ckpt_paths: list[Path] = []
    log_path = out_dir / "metrics.jsonl"
    gen = torch.Generator().manual_seed(cfg.seed + 1)  # word-dropout stream

    with open(log_path, "w", encoding="utf-8") as log:
        model.train()
        for step in range(1, cfg.steps + 1):
            if not order:
                order = list(range(len(batches)))
                rng.shuffle(order)
            t = collate(batches[order.pop()])
            lr = sched(step)
            for group in opt.param_groups:
                group["lr"] = lr
            opt.zero_grad()
            lp = model(t["src"], t["tgt_in"], t["src_words"], t["tgt_words"], generator=gen)
            loss = edited_mle_loss(lp, t["tgt_out"], t["weights"]).per_token
            if not torch.isfinite(loss):
                raise FloatingPointError(f"nonfinite loss at step {step}")
            loss.backward()
            check_finite_gradients(model)
            if cfg.clip_norm > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            opt.step()

            record = {"step": step, "lr": lr, "loss": round(loss.item(), 6)}
            at_checkpoint = cfg.checkpoint_every and step % cfg.checkpoint_every == 0
            if at_checkpoint or step == cfg.steps:
                record["dev_loss"] = round(dev_loss(model, dev_examples), 6)
                if log_f05:
                    model.eval()
                    record["dev_f05"] = round(
                        _dev_f05(model, dev_pairs, vocab, cfg.dev_decode_limit), 4
                    )
                    model.train()
            if at_checkpoint:
                path = out_dir / f"checkpoint-{step:07d}.ckpt"
                save_checkpoint(path, params_of(model), step, fingerprint,
                                model_cfg.to_dict())
                ckpt_paths.append(path)
            metrics.append(record)
            log.write(json.dumps(record) + "\n")

    final = out_dir / "checkpoint-final.ckpt"
    save_checkpoint(final, params_of(model), cfg.steps, fingerprint, model_cfg.to_dict())
    return {"checkpoints": [str(p) for p in ckpt_paths], "final": str(final),
            "metrics": metrics, "model": model}


def finetune(
    base: Checkpoint | str | Path,
    train_examples: Sequence[TrainExample],
    dev_pairs: Sequence[SentencePair],
    vocab: SubwordVocab,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    out_dir: str | Path,
    peak_lr: float = 3e-4,
    warmup_steps: int = 20_000,
    log_f05: bool = True,
) -> dict:
    """Continue from a checkpoint under the linear-then-constant finetuning
    schedule. Word dropout and weighted MLE stay active."""
    ckpt = base if isinstance(base, Checkpoint) else load_checkpoint(base)
    if ckpt.fingerprint != config_fingerprint(model_cfg):
        raise ValueError("checkpoint was trained under a different model config")
    emb = ckpt.params.get("embed.weight")
    if emb is not None and emb.shape[0] != model_cfg.vocab_size:
        raise ValueError("vocab size mismatch between checkpoint and config")
    if cfg.steps == 0:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        final = out_dir / "checkpoint-final.ckpt"
        save_checkpoint(final, ckpt.params, ckpt.step, ckpt.fingerprint,
                        ckpt.model_config or model_cfg.to_dict())
        return {"checkpoints": [], "final": str(final), "metrics": [], "model": None}
    return train_loop(
        train_examples, dev_pairs, vocab, model_cfg, cfg, out_dir,
        init_params=ckpt.params,
        schedule_fn=lambda s: finetune_schedule(s, peak_lr, warmup_steps),
        log_f05=log_f05,
    )
