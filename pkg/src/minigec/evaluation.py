"""Edit extraction from token alignments and P/R/F0.5 scoring.

Edits are exact-match (span, replacement) pairs, so scores are comparable
only within this toolkit — there is no error-type taxonomy and no
multi-annotator resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import EdgeType, align_tokens


@dataclass(frozen=True)
class Edit:
    start: int                     # source token span [start, end)
    end: int
    replacement: tuple[str, ...]   # empty tuple = deletion

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ValueError("edit span must satisfy 0 <= start <= end")


def extract_edits(source: Sequence[str], hypothesis: Sequence[str]) -> list[Edit]:
    """Maximal runs of adjacent non-MATCH alignment edges, merged into
    single edits. Pure insertions come out with start == end."""
    align = align_tokens(tuple(source), tuple(hypothesis))
    edits: list[Edit] = []
    src_pos = 0
    run_start = None
    run_repl: list[str] = []
    for edge in align.edges:
        if edge.type is EdgeType.MATCH:
            if run_start is not None:
                edits.append(Edit(run_start, src_pos, tuple(run_repl)))
                run_start, run_repl = None, []
            src_pos += 1
            continue
        if run_start is None:
            run_start = src_pos
        if edge.type in (EdgeType.SUB, EdgeType.INS):
            run_repl.append(hypothesis[edge.tgt])
        if edge.type in (EdgeType.SUB, EdgeType.DEL):
            src_pos += 1
    if run_start is not None:
        edits.append(Edit(run_start, src_pos, tuple(run_repl)))
    return edits


def apply_edits(source: Sequence[str], edits: Sequence[Edit]) -> list[str]:
    """Replay edits over the source; spans must be within bounds, sorted
    application order handles any input order."""
    out: list[str] = []
    pos = 0
    for edit in sorted(edits, key=lambda e: (e.start, e.end)):
        if edit.start < pos or edit.end > len(source):
            raise ValueError("overlapping or out-of-range edit spans")
        out.extend(source[pos : edit.start])
        out.extend(edit.replacement)
        pos = edit.end
    out.extend(source[pos:])
    return out


def f_beta(p: float, r: float, beta: float = 0.5) -> float:
    if p == 0.0 and r == 0.0:
        return 0.0
    b2 = beta * beta
    denom = b2 * p + r
    return (1 + b2) * p * r / denom if denom else 0.0


@dataclass
class ScoreReport:
    tp: int
    fp: int
    fn: int

    @property
    def p(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 1.0

    @property
    def r(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 1.0

    @property
    def f05(self) -> float:
        return f_beta(self.p, self.r, 0.5)

    def as_dict(self) -> dict:
        return {
            "P": round(100 * self.p, 2),
            "R": round(100 * self.r, 2),
            "F0.5": round(100 * self.f05, 2),
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
        }

    def as_json(self) -> str:
        return json.dumps(self.as_dict())

    def table(self) -> str:
        d = self.as_dict()
        return (
            f"P      {d['P']:6.2f}\n"
            f"R      {d['R']:6.2f}\n"
            f"F0.5   {d['F0.5']:6.2f}\n"
            f"counts tp={self.tp} fp={self.fp} fn={self.fn}"
        )


def score_edits(
    hyp_edits: Sequence[Sequence[Edit]], ref_edits: Sequence[Sequence[Edit]]
) -> ScoreReport:
    """Micro-averaged exact-match counts. Sentences where neither side has
    edits are skipped (they carry no signal for either P or R)."""
    if len(hyp_edits) != len(ref_edits):
        raise ValueError("hypothesis/reference sentence counts differ")
    tp = fp = fn = 0
    for hyp, ref in zip(hyp_edits, ref_edits):
        if not hyp and not ref:
            continue
        h, r = set(hyp), set(ref)
        tp += len(h & r)
        fp += len(h - r)
        fn += len(r - h)
    return ScoreReport(tp, fp, fn)


Row = tuple[Sequence[str], Sequence[str], Sequence[str]]  # (src, hyp, ref) tokens


def score_sentences(rows: Iterable[Row]) -> ScoreReport:
    hyp_edits, ref_edits = [], []
    for src, hyp, ref in rows:
        hyp_edits.append(extract_edits(src, hyp))
        ref_edits.append(extract_edits(src, ref))
    return score_edits(hyp_edits, ref_edits)


def dev_combined(
    tagged_rows: Iterable[tuple[str, Row]], subsets: Sequence[str]
) -> dict:
    """Per-subset reports plus the micro-averaged combination, e.g. over the
    A/B/C/N development slices. Unknown tags are an error."""
    known = list(subsets)
    buckets: dict[str, list[Row]] = {tag: [] for tag in known}
    for tag, row in tagged_rows:
        if tag not in buckets:
            raise ValueError(f"unknown subset tag {tag!r} (expected one of {known})")
        buckets[tag].append(row)
    per_subset = {tag: score_sentences(rows) for tag, rows in buckets.items()}
    combined = ScoreReport(
        tp=sum(r.tp for r in per_subset.values()),
        fp=sum(r.fp for r in per_subset.values()),
        fn=sum(r.fn for r in per_subset.values()),
    )
    return {"combined": combined, "per_subset": per_subset}
