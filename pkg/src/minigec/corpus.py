"""Parallel correction corpora: alignment, error-rate stats, oversampling, I/O.

An alignment is a minimal-cost Levenshtein edit path between two token
sequences. The corpus error rate is the micro-averaged fraction of
non-matching alignment edges (insertions, deletions and replacements) over
all pairs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .tokenizer import join, tokenize

TokenSeq = tuple[str, ...]


class EmptyDatasetError(ValueError):
    """Raised when an operation needs at least one sentence pair."""


class EdgeType(Enum):
    MATCH = "match"
    SUB = "sub"
    INS = "ins"
    DEL = "del"


@dataclass(frozen=True)
class AlignEdge:
    """One edge of an edit path.

    ``src`` / ``tgt`` are token indices; INS edges have no ``src``, DEL edges
    no ``tgt``.
    """

    type: EdgeType
    src: int | None
    tgt: int | None


@dataclass(frozen=True)
class Alignment:
    edges: tuple[AlignEdge, ...]

    @property
    def cost(self) -> int:
        return sum(1 for e in self.edges if e.type is not EdgeType.MATCH)

    @property
    def error_rate(self) -> float:
        return self.cost / len(self.edges) if self.edges else 0.0


@dataclass(frozen=True)
class SentencePair:
    source: TokenSeq
    target: TokenSeq
    dataset_tag: str = "default"

    @property
    def is_identity(self) -> bool:
        return self.source == self.target

    @property
    def source_text(self) -> str:
        return join(self.source)

    @property
    def target_text(self) -> str:
        return join(self.target)


@dataclass(frozen=True)
class DatasetStats:
    sentence_count: int
    error_rate: float
    total_edges: int = 0
    nonmatch_edges: int = 0


@dataclass
class OversampleSpec:
    """Total copy count per dataset tag (1 = keep as-is). Tags absent from
    ``multipliers`` default to 1."""

    multipliers: dict[str, int] = field(default_factory=dict)

    def multiplier(self, tag: str) -> int:
        return self.multipliers.get(tag, 1)

    def validate(self) -> None:
        for tag, m in self.multipliers.items():
            if not isinstance(m, int) or m < 1:
                raise ValueError(f"multiplier for {tag!r} must be a positive integer, got {m!r}")


def align_tokens(src: Sequence[str], tgt: Sequence[str]) -> Alignment:
    """Minimal-edit alignment between two token sequences.

    Ties are broken deterministically: diagonal edges (MATCH/SUB) are
    preferred over INS, and INS over DEL.
    """
    n, m = len(src), len(tgt)
    if list(src) == list(tgt):
        edges = tuple(AlignEdge(EdgeType.MATCH, i, i) for i in range(n))
        return Alignment(edges)

    # Wagner-Fischer DP; full matrix kept for the backtrace.
    d = [list(range(m + 1))] + [[i] + [0] * m for i in range(1, n + 1)]
    for i in range(1, n + 1):
        row = d[i]
        prev = d[i - 1]
        s_tok = src[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if s_tok == tgt[j - 1] else 1)
            ins = row[j - 1] + 1
            dele = prev[j] + 1
            best = diag
            if ins < best:
                best = ins
            if dele < best:
                best = dele
            row[j] = best

    edges: list[AlignEdge] = []
    i, j = n, m
    while i > 0 or j > 0:
        cur = d[i][j]
        if i > 0 and j > 0 and cur == d[i - 1][j - 1] + (0 if src[i - 1] == tgt[j - 1] else 1):
            kind = EdgeType.MATCH if src[i - 1] == tgt[j - 1] else EdgeType.SUB
            edges.append(AlignEdge(kind, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif j > 0 and cur == d[i][j - 1] + 1:
            edges.append(AlignEdge(EdgeType.INS, None, j - 1))
            j -= 1
        else:
            edges.append(AlignEdge(EdgeType.DEL, i - 1, None))
            i -= 1
    edges.reverse()
    return Alignment(tuple(edges))


def compute_stats(pairs: Sequence[SentencePair]) -> DatasetStats:
    """Micro-averaged error rate: total non-match edges / total edges."""
    if not pairs:
        raise EmptyDatasetError("cannot compute stats of an empty dataset")
    total = 0
    nonmatch = 0
    for p in pairs:
        if p.is_identity:
            total += len(p.source)
            continue
        a = align_tokens(p.source, p.target)
        total += len(a.edges)
        nonmatch += a.cost
    rate = nonmatch / total if total else 0.0
    return DatasetStats(len(pairs), rate, total_edges=total, nonmatch_edges=nonmatch)


def stats_by_tag(pairs: Sequence[SentencePair]) -> dict[str, DatasetStats]:
    if not pairs:
        raise EmptyDatasetError("cannot compute stats of an empty dataset")
    by_tag: dict[str, list[SentencePair]] = {}
    for p in pairs:
        by_tag.setdefault(p.dataset_tag, []).append(p)
    return {tag: compute_stats(group) for tag, group in sorted(by_tag.items())}


def oversample(
    pairs: Sequence[SentencePair],
    spec: OversampleSpec,
    seed: int = 0,
    strict: bool = False,
) -> list[SentencePair]:
    """Replicate each pair ``multiplier[tag]`` times (total count, not extra
    copies) and shuffle deterministically under ``seed``."""
    spec.validate()
    present = {p.dataset_tag for p in pairs}
    if strict:
        unknown = sorted(set(spec.multipliers) - present)
        if unknown:
            raise ValueError(f"oversample spec names tags absent from the corpus: {unknown}")
    out: list[SentencePair] = []
    for p in pairs:
        out.extend([p] * spec.multiplier(p.dataset_tag))
    random.Random(seed).shuffle(out)
    return out


def oversampled_counts(counts: Mapping[str, int], spec: OversampleSpec) -> dict[str, int]:
    """Pure count arithmetic for tag manifests (no materialized pairs)."""
    spec.validate()
    return {tag: n * spec.multiplier(tag) for tag, n in counts.items()}


def make_pair(source_text: str, target_text: str, dataset_tag: str = "default") -> SentencePair:
    return SentencePair(tuple(tokenize(source_text)), tuple(tokenize(target_text)), dataset_tag)


def load_parallel(
    path: str | Path,
    fmt: str = "tsv",
    target_path: str | Path | None = None,
    dataset_tag: str = "default",
) -> list[SentencePair]:
    """Read a parallel corpus.

    ``tsv``: one ``source TAB target`` pair per line. ``two-files``: ``path``
    holds sources, ``target_path`` targets, line-aligned. Text is run through
    the rule tokenizer; rows where either side tokenizes to nothing are
    rejected.
    """
    path = Path(path)
    if fmt == "tsv":
        rows = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                if len(cols) != 2:
                    raise ValueError(
                        f"{path}: row {lineno}: expected 'source<TAB>target', got {len(cols)} column(s)"
                    )
                rows.append((lineno, cols[0], cols[1]))
    elif fmt == "two-files":
        if target_path is None:
            raise ValueError("two-files format needs target_path")
        with open(path, encoding="utf-8") as f:
            src_lines = f.read().splitlines()
        with open(target_path, encoding="utf-8") as f:
            tgt_lines = f.read().splitlines()
        if len(src_lines) != len(tgt_lines):
            raise ValueError(
                f"line count mismatch: {path} has {len(src_lines)} lines, "
                f"{target_path} has {len(tgt_lines)} (first divergence at line "
                f"{min(len(src_lines), len(tgt_lines)) + 1})"
            )
        rows = [(i + 1, s, t) for i, (s, t) in enumerate(zip(src_lines, tgt_lines))]
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")

    pairs = []
    for lineno, src_text, tgt_text in rows:
        src = tuple(tokenize(src_text))
        tgt = tuple(tokenize(tgt_text))
        if not src or not tgt:
            raise ValueError(f"{path}: row {lineno}: empty {'source' if not src else 'target'} side")
        pairs.append(SentencePair(src, tgt, dataset_tag))
    return pairs


def save_pairs(pairs: Iterable[SentencePair], path: str | Path) -> int:
    """Write pairs as UTF-8 TSV in canonical (space-joined) text form."""
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(f"{p.source_text}\t{p.target_text}\n")
            n += 1
    return n
