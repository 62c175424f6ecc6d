"""Mining training pairs from page revision histories.

Reads the standard ``<page>/<revision>`` XML dump structure (optionally
bz2/gzip compressed) or plain-text snapshot directories, strips markup with
a lossy regex pipeline, downsamples the snapshot chain, aligns consecutive
snapshots at token level and cuts (older, newer) pairs out of the runs
between matching anchor segments. Matching segments themselves surface as
identity pairs so that identity downsampling has something to work on.
"""

from __future__ import annotations

import bz2
import difflib
import gzip
import hashlib
import html
import re
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence
from xml.etree import ElementTree

from .corpus import SentencePair
from .noising import NoiseConfig, apply_infill_noise, apply_spelling_noise, SnapshotPair
from .tokenizer import tokenize


@dataclass
class ExtractionConfig:
    keep_every: int = 2            # snapshot downsampling stride
    max_tokens: int = 100          # per-side length cap for extracted pairs
    context_tokens: int = 10       # anchor context glued to each side of a changed run
    identity_window: int = 40      # chunk size for identity pairs cut from anchors

    def validate(self) -> None:
        if self.keep_every < 1:
            raise ValueError("keep_every must be >= 1")
        if self.max_tokens < 1 or self.identity_window < 1:
            raise ValueError("token windows must be >= 1")
        if self.context_tokens < 0:
            raise ValueError("context_tokens must be >= 0")


def derive_seed(seed: int, *keys) -> int:
    """Stable per-shard seed so page-level parallelism cannot change output."""
    material = ":".join([str(seed)] + [str(k) for k in keys])
    return int.from_bytes(hashlib.sha256(material.encode("utf-8")).digest()[:8], "little")


# --- markup stripping (regex-based, lossy by design) ---

_RE_COMMENT = re.compile(r"<!--.*?-->", re.S)
_RE_REF = re.compile(r"<ref[^>/]*/>|<ref[^>]*>.*?</ref>", re.S | re.I)
_RE_TEMPLATE = re.compile(r"\{\{[^{}]*\}\}", re.S)
_RE_TABLE = re.compile(r"\{\|.*?\|\}", re.S)
_RE_FILE_LINK = re.compile(r"\[\[(?:File|Image|Category):[^\[\]]*\]\]", re.I)
_RE_PIPED_LINK = re.compile(r"\[\[[^\[\]|]*\|([^\[\]]*)\]\]")
_RE_PLAIN_LINK = re.compile(r"\[\[([^\[\]]*)\]\]")
_RE_EXT_LINK = re.compile(r"\[\w+://\S*(?:\s+([^\]]*))?\]")
_RE_HTML_TAG = re.compile(r"</?[a-zA-Z][^>]*>")
_RE_HEADER = re.compile(r"^=+\s*(.*?)\s*=+\s*$", re.M)
_RE_LIST_MARKUP = re.compile(r"^[*#:;]+\s*", re.M)
_RE_QUOTES = re.compile(r"'{2,}")


def strip_markup(wikitext: str) -> str:
    """Reduce wiki markup to plain text. Imperfect on purpose: nested or
    broken markup degrades to dropped or literal text, never an error."""
    text = _RE_COMMENT.sub(" ", wikitext)
    text = _RE_REF.sub(" ", text)
    text = _RE_TABLE.sub(" ", text)
    for _ in range(10):  # peel nested templates innermost-first
        text, n = _RE_TEMPLATE.subn(" ", text)
        if n == 0:
            break
    text = _RE_FILE_LINK.sub(" ", text)
    text = _RE_PIPED_LINK.sub(r"\1", text)
    text = _RE_PLAIN_LINK.sub(r"\1", text)
    text = _RE_EXT_LINK.sub(lambda m: m.group(1) or " ", text)
    text = _RE_HEADER.sub(r"\1", text)
    text = _RE_LIST_MARKUP.sub("", text)
    text = _RE_HTML_TAG.sub(" ", text)
    text = _RE_QUOTES.sub("", text)
    text = html.unescape(text)
    # Training text is line-free: tabs/newlines become spaces.
    return " ".join(text.split())


# --- dump reading ---

def _open_maybe_compressed(path: Path):
    if path.suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8")
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _localname(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def read_dump_pages(path: str | Path) -> Iterator[tuple[str, list[str]]]:
    """Yield (page_id, chronological snapshot texts) from an XML revision
    dump. Revisions are ordered by timestamp; markup is stripped."""
    path = Path(path)
    with _open_maybe_compressed(path) as fh:
        page_id = ""
        title = ""
        revisions: list[tuple[str, str]] = []
        in_revision = False
        rev_ts = ""
        rev_text = ""
        for event, elem in ElementTree.iterparse(fh, events=("start", "end")):
            name = _localname(elem.tag)
            if event == "start":
                if name == "page":
                    page_id, title, revisions = "", "", []
                elif name == "revision":
                    in_revision, rev_ts, rev_text = True, "", ""
                continue
            if name == "id" and not in_revision and not page_id:
                page_id = (elem.text or "").strip()
            elif name == "title":
                title = (elem.text or "").strip()
            elif name == "timestamp" and in_revision:
                rev_ts = (elem.text or "").strip()
            elif name == "text" and in_revision:
                rev_text = elem.text or ""
            elif name == "revision":
                revisions.append((rev_ts, rev_text))
                in_revision = False
            elif name == "page":
                revisions.sort(key=lambda r: r[0])
                texts = [strip_markup(t) for _, t in revisions]
                texts = [t for t in texts if t]
                yield (page_id or title, texts)
                elem.clear()


def read_snapshot_dir(root: str | Path) -> Iterator[tuple[str, list[str]]]:
    """Plain-text layout: one subdirectory per page, files in name order are
    chronological snapshots."""
    root = Path(root)
    for page_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        texts = []
        for f in sorted(page_dir.glob("*.txt")):
            text = " ".join(f.read_text(encoding="utf-8").split())
            if text:
                texts.append(text)
        yield (page_dir.name, texts)


# --- pair extraction ---

def snapshot_pairs(
    snapshots: Sequence[str], keep_every: int = 2, page_id: str = ""
) -> list[SnapshotPair]:
    """Downsample the snapshot chain (keep every k-th) and pair up the
    retained consecutive snapshots."""
    retained = list(snapshots[::keep_every])
    return [
        SnapshotPair(older_text=a, newer_text=b, page_id=page_id)
        for a, b in zip(retained, retained[1:])
    ]


def _window(tokens: list[str], head: list[str], tail: list[str], cap: int) -> tuple[str, ...]:
    out = head + tokens + tail
    return tuple(out[:cap])


def extract_revision_pairs(
    snapshots: Sequence[str],
    extraction: ExtractionConfig | None = None,
    dataset_tag: str = "wiki",
    page_id: str = "",
) -> list[SentencePair]:
    """Token-align consecutive retained snapshots and emit one pair per run
    between matching anchor segments (with one capped anchor segment of
    context on each side). Anchor segments are emitted as identity pairs,
    chunked to ``identity_window`` tokens. Pages with fewer than two
    retained snapshots yield nothing."""
    ext = extraction or ExtractionConfig()
    ext.validate()
    pairs: list[SentencePair] = []
    for snap in snapshot_pairs(snapshots, ext.keep_every, page_id):
        old = tokenize(snap.older_text)
        new = tokenize(snap.newer_text)
        matcher = difflib.SequenceMatcher(a=old, b=new, autojunk=False)
        blocks = matcher.get_matching_blocks()  # ends with a zero-length sentinel

        # Identity pairs from the matching anchors.
        for blk in blocks:
            seg = old[blk.a : blk.a + blk.size]
            for i in range(0, len(seg), ext.identity_window):
                chunk = tuple(seg[i : i + ext.identity_window])
                if chunk:
                    pairs.append(SentencePair(chunk, chunk, dataset_tag))

        # Correction pairs from the changed runs between anchors.
        prev_a = prev_b = 0
        left_ctx: list[str] = []
        for blk in blocks:
            run_old = old[prev_a : blk.a]
            run_new = new[prev_b : blk.b]
            if run_old or run_new:
                anchor = old[blk.a : blk.a + blk.size]
                right_ctx = anchor[: ext.context_tokens]
                src = _window(run_old, left_ctx, right_ctx, ext.max_tokens)
                tgt = _window(run_new, left_ctx, right_ctx, ext.max_tokens)
                if src and tgt:
                    pairs.append(SentencePair(src, tgt, dataset_tag))
            anchor = old[blk.a : blk.a + blk.size]
            left_ctx = anchor[-ext.context_tokens :] if ext.context_tokens else []
            prev_a, prev_b = blk.a + blk.size, blk.b + blk.size
    return pairs


def mine_pairs(
    pages: Iterable[tuple[str, list[str]]],
    noise: NoiseConfig,
    extraction: ExtractionConfig | None = None,
    dataset_tag: str = "wiki",
) -> tuple[list[SentencePair], dict]:
    """Full mining pipeline over (page_id, snapshots) streams.

    Per page: extract pairs, keep 4% (configurable) of the identity ones,
    then corrupt the source side with spelling and infill noise. The RNG is
    derived from (seed, page_id), so page order and parallelism do not
    change the output.
    """
    noise.validate()
    counts = {"pages": 0, "extracted": 0, "identity_extracted": 0, "kept": 0, "noised": 0}
    out: list[SentencePair] = []
    for page_id, snapshots in pages:
        counts["pages"] += 1
        rng = random.Random(derive_seed(noise.rng_seed, page_id))
        extracted = extract_revision_pairs(snapshots, extraction, dataset_tag, page_id)
        counts["extracted"] += len(extracted)
        counts["identity_extracted"] += sum(1 for p in extracted if p.is_identity)
        for p in extracted:
            if p.is_identity and rng.random() >= noise.identity_keep:
                continue
            noisy = apply_spelling_noise(p.source_text, noise, rng)
            noisy = apply_infill_noise(noisy, noise, rng)
            src = tuple(tokenize(noisy)) or p.source
            if src != p.source:
                counts["noised"] += 1
            out.append(SentencePair(src, p.target, p.dataset_tag))
            counts["kept"] += 1
    return out, counts
