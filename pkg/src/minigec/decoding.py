"""Beam search with length normalization, the iterative re-decoding loop,
and grid search over its two knobs (threshold, max_iters).

The iterative loop is written against a plain ``decode_fn(text) ->
[ScoredText]`` so its gating logic can be exercised with scripted scorers
and so grid search can share one beam cache across all grid cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import torch

from .subword import BOS_ID, EOS_ID, FILL_ID, PAD_ID, UNK_ID, SubwordVocab
from .tokenizer import tokenize


@dataclass
class BeamConfig:
    beam_size: int = 4
    alpha: float = 0.6
    max_output_len: int = 0  # content pieces; 0 = source length + 16

    def validate(self) -> None:
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.max_output_len < 0:
            raise ValueError("max_output_len must be >= 0")


@dataclass
class IterativeDecodeConfig:
    threshold: float = 1.0
    max_iters: int = 1

    def validate(self) -> None:
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def length_penalty(length: int, alpha: float) -> float:
    return ((5.0 + length) / 6.0) ** alpha


@dataclass(frozen=True)
class Hypothesis:
    ids: tuple[int, ...]     # content pieces, no BOS/EOS
    raw_logprob: float
    cost: float              # -raw_logprob / length_penalty(len(ids))
    finished: bool = True

    def text(self, vocab: SubwordVocab) -> str:
        return vocab.decode(list(self.ids))


class ScoredText(NamedTuple):
    """What the iterative loop consumes: a candidate and its beam cost."""
    text: str
    cost: float


_BANNED = (PAD_ID, BOS_ID, UNK_ID, FILL_ID)


def _make_hyp(ids: tuple[int, ...], raw: float, alpha: float, finished: bool = True) -> Hypothesis:
    return Hypothesis(ids, raw, -raw / length_penalty(len(ids), alpha), finished)


@torch.no_grad()
def beam_search(model, vocab: SubwordVocab, source_text: str, cfg: BeamConfig) -> list[Hypothesis]:
    """Top-(beam_size) finished hypotheses, ascending cost, texts distinct.
    Ties break lexicographically on token ids. If nothing finishes within
    the length cap, the single best unfinished hypothesis is returned with
    finished=False."""
    cfg.validate()
    was_training = model.training
    model.eval()
    try:
        src_ids = vocab.encode(source_text) + [EOS_ID]
        max_len = cfg.max_output_len or (len(src_ids) + 16)
        max_len = min(max_len, model.cfg.max_len - 1)
        src = torch.tensor([src_ids], dtype=torch.long)
        memory, src_keep = model.encode(src)

        alive: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
        last_alive = alive
        finished: dict[str, Hypothesis] = {}

        for step in range(max_len + 1):
            prefixes = torch.tensor(
                [[BOS_ID, *ids] for ids, _ in alive], dtype=torch.long
            )
            mem = memory.expand(len(alive), -1, -1)
            keep = src_keep.expand(len(alive), -1, -1, -1)
            logp = model.next_logprobs(mem, keep, prefixes).double()
            logp[:, list(_BANNED)] = float("-inf")
            if step == max_len:  # at the length cap only completions remain
                mask = torch.full_like(logp, float("-inf"))
                mask[:, EOS_ID] = 0.0
                logp = logp + mask
            scores = torch.tensor([[s] for _, s in alive], dtype=torch.float64) + logp
            flat = scores.reshape(-1)
            take = min(cfg.beam_size, int(torch.isfinite(flat).sum().item()))
            # stable sort on the negated scores = ties resolve in flat-index
            # order, which is lexicographic because `alive` is kept sorted
            order = torch.argsort(-flat, stable=True)[:take]
            vsize = scores.shape[1]
            next_alive: list[tuple[tuple[int, ...], float]] = []
            for flat_idx in order.tolist():
                beam_idx, tok = divmod(flat_idx, vsize)
                ids, _ = alive[beam_idx]
                score = float(flat[flat_idx])
                if tok == EOS_ID:
                    hyp = _make_hyp(ids, score, cfg.alpha)
                    text = hyp.text(vocab)
                    best = finished.get(text)
                    if best is None or (hyp.cost, hyp.ids) < (best.cost, best.ids):
                        finished[text] = hyp
                else:
                    next_alive.append((ids + (tok,), score))
            next_alive.sort(key=lambda a: a[0])
            if alive:
                last_alive = alive
            alive = next_alive
            if not alive:
                break
            if len(finished) >= cfg.beam_size:
                # cheapest cost any alive descendant could still reach
                bound = min(
                    -raw / length_penalty(max_len, cfg.alpha) for _, raw in alive
                )
                worst_kept = sorted(h.cost for h in finished.values())[cfg.beam_size - 1]
                if bound > worst_kept:
                    break

        if not finished:
            pool = alive or last_alive
            ids, raw = min(pool, key=lambda a: (-a[1], a[0]))
            return [_make_hyp(ids, raw, cfg.alpha, finished=False)]
        out = sorted(finished.values(), key=lambda h: (h.cost, h.ids))
        return out[: cfg.beam_size]
    finally:
        if was_training:
            model.train()


DecodeFn = Callable[[str], list[ScoredText]]


def make_decode_fn(
    model, vocab: SubwordVocab, cfg: BeamConfig, cache: dict[str, list[ScoredText]] | None = None
) -> DecodeFn:
    """Beam search as a text -> scored-candidates function, memoized on the
    input text when a cache dict is supplied."""

    def decode(text: str) -> list[ScoredText]:
        if cache is not None and text in cache:
            return cache[text]
        result = [
            ScoredText(h.text(vocab), h.cost) for h in beam_search(model, vocab, text, cfg)
        ]
        if cache is not None:
            cache[text] = result
        return result

    return decode


def iterative_decode(input_sent: str, decode_fn: DecodeFn, cfg: IterativeDecodeConfig) -> str:
    """Re-decode the current sentence up to max_iters times, accepting the
    cheapest non-identity candidate while its cost stays within threshold ×
    the identity candidate's cost. A beam without the identity accepts the
    best correction outright; a beam with nothing but the identity stops."""
    cfg.validate()
    current = input_sent
    for _ in range(cfg.max_iters):
        candidates = decode_fn(current)
        identity_cost = None
        non_identity = None
        for cand in candidates:
            if cand.text == current:
                if identity_cost is None or cand.cost < identity_cost:
                    identity_cost = cand.cost
            elif non_identity is None or cand.cost < non_identity.cost:
                non_identity = cand
        if non_identity is None:
            break
        if identity_cost is not None and non_identity.cost > cfg.threshold * identity_cost:
            break
        current = non_identity.text
    return current


@dataclass
class GridCell:
    threshold: float
    max_iters: int
    p: float
    r: float
    f05: float


@dataclass
class GridResult:
    cells: list[GridCell]
    best: GridCell

    def as_tsv(self) -> str:
        lines = ["threshold\tmax_iters\tP\tR\tF0.5"]
        for c in self.cells:
            lines.append(
                f"{c.threshold:g}\t{c.max_iters}\t{100*c.p:.2f}\t{100*c.r:.2f}\t{100*c.f05:.2f}"
            )
        return "\n".join(lines) + "\n"


def grid_search(
    dev_pairs: Sequence,
    decode_fn: DecodeFn,
    thresholds: Sequence[float],
    max_iters_list: Sequence[int],
) -> GridResult:
    """F0.5 for every (threshold, max_iters) cell on tokenized dev pairs.
    decode_fn should be cache-backed: each distinct intermediate sentence is
    then decoded once across the whole sweep."""
    from .evaluation import score_sentences

    if not thresholds or not max_iters_list:
        raise ValueError("grid must have at least one threshold and one max_iters")
    cells = []
    for thr in thresholds:
        for iters in max_iters_list:
            cfg = IterativeDecodeConfig(threshold=thr, max_iters=iters)
            rows = []
            for pair in dev_pairs:
                hyp = iterative_decode(pair.source_text, decode_fn, cfg)
                rows.append((pair.source, tuple(tokenize(hyp)), pair.target))
            report = score_sentences(rows)
            cells.append(GridCell(thr, iters, report.p, report.r, report.f05))
    best = max(cells, key=lambda c: (c.f05, -c.threshold, -c.max_iters))
    return GridResult(cells, best)
