"""Byte-pair-encoding subword vocabulary with a lossless byte fallback.

Encoding scheme: a dummy word-boundary symbol is prepended, every space
becomes the boundary symbol "▁" attached to the following word, and any
character outside the learned inventory (including a literal "▁") is spelled
as raw UTF-8 byte pieces. Merges are learned within word groups only and
never touch byte pieces or the reserved infill marker, so
``decode(encode(s)) == s`` for every string and the marker always stays a
single piece.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter, defaultdict
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import SentencePair

PAD_ID, BOS_ID, EOS_ID, UNK_ID, FILL_ID = 0, 1, 2, 3, 4
SPECIAL_PIECES = ("<pad>", "<s>", "</s>", "<unk>", "⟨FILL⟩")
INFILL_MARKER = SPECIAL_PIECES[FILL_ID]
N_SPECIAL = len(SPECIAL_PIECES)
N_BYTES = 256
BOUNDARY = "▁"

# Internal symbols: str for text pieces, int 0..255 for byte fallback,
# _FILL_SYM for the reserved marker. Only str symbols may merge.
_FILL_SYM = 256
Sym = "str | int"

_FORMAT = "minigec-vocab"
_VERSION = 1


def _byte_syms(ch: str) -> list[int]:
    return list(ch.encode("utf-8"))


class SubwordVocab:
    """Learned merge inventory mapping text to subword id sequences."""

    def __init__(self, chars: Sequence[str], merges: list[tuple[str, str]], target_size: int):
        self.chars = sorted(set(chars))
        self.merges = list(merges)
        self.target_size = target_size
        self.pieces: list[str] = (
            list(SPECIAL_PIECES)
            + [f"<0x{b:02X}>" for b in range(N_BYTES)]
            + [BOUNDARY]
            + self.chars
            + [left + right for left, right in self.merges]
        )
        self._piece_ids: dict[str, int] = {}
        for i in range(N_SPECIAL + N_BYTES, len(self.pieces)):
            self._piece_ids.setdefault(self.pieces[i], i)
        self._ranks = {pair: r for r, pair in enumerate(self.merges)}
        self._char_set = set(self.chars)
        self._cache: dict[tuple, list[int]] = {}

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def base_size(self) -> int:
        return N_SPECIAL + N_BYTES + 1 + len(self.chars)

    # --- encoding ---

    def _symbolize(self, text: str) -> list:
        syms: list = [BOUNDARY]
        parts = text.split(INFILL_MARKER)
        for pi, part in enumerate(parts):
            if pi > 0:
                syms.append(_FILL_SYM)
            for ch in part:
                if ch == " ":
                    syms.append(BOUNDARY)
                elif ch == BOUNDARY or ch not in self._char_set:
                    syms.extend(_byte_syms(ch))
                else:
                    syms.append(ch)
        return syms

    def _merge_group(self, group: tuple) -> list[int]:
        cached = self._cache.get(group)
        if cached is not None:
            return cached
        syms = list(group)
        while len(syms) > 1:
            best_rank = None
            for a, b in zip(syms, syms[1:]):
                if isinstance(a, str) and isinstance(b, str):
                    r = self._ranks.get((a, b))
                    if r is not None and (best_rank is None or r < best_rank):
                        best_rank = r
            if best_rank is None:
                break
            left, right = self.merges[best_rank]
            merged = left + right
            out = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and syms[i] == left and syms[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            syms = out
        ids = [self._sym_id(s) for s in syms]
        self._cache[group] = ids
        return ids

    def _sym_id(self, sym) -> int:
        if isinstance(sym, int):
            return FILL_ID if sym == _FILL_SYM else N_SPECIAL + sym
        return self._piece_ids[sym]

    def encode(self, text: str) -> list[int]:
        """Encode arbitrary UTF-8 text; never emits UNK."""
        if text == "":
            return []
        ids: list[int] = []
        for group in _split_groups(self._symbolize(text)):
            ids.extend(self._merge_group(tuple(group)))
        return ids

    def decode(self, ids: Sequence[int]) -> str:
        """Inverse of encode. PAD/BOS/EOS/UNK decode to nothing."""
        out: list[str] = []
        buf = bytearray()

        def flush():
            if buf:
                out.append(buf.decode("utf-8", errors="replace"))
                buf.clear()

        for i in ids:
            if not 0 <= i < len(self.pieces):
                raise ValueError(f"subword id {i} out of range [0, {len(self.pieces)})")
            if i in (PAD_ID, BOS_ID, EOS_ID, UNK_ID):
                flush()
                continue
            if i == FILL_ID:
                flush()
                out.append(INFILL_MARKER)
            elif i < N_SPECIAL + N_BYTES:
                buf.append(i - N_SPECIAL)
            else:
                flush()
                out.append(self.pieces[i].replace(BOUNDARY, " "))
        flush()
        text = "".join(out)
        return text[1:] if text.startswith(" ") else text

    # --- word boundaries ---

    def is_word_start(self, piece_id: int) -> bool:
        return piece_id >= N_SPECIAL + N_BYTES and self.pieces[piece_id].startswith(BOUNDARY)

    def word_ids(self, ids: Sequence[int]) -> list[int]:
        """Word index per piece; pieces of one word share an index."""
        out = []
        w = -1
        for i in ids:
            if self.is_word_start(i):
                w += 1
            out.append(max(w, 0))
        return out

    # --- persistence ---

    def save(self, path: str | Path) -> None:
        header = {
            "format": _FORMAT,
            "version": _VERSION,
            "target_size": self.target_size,
            "size": len(self),
            "specials": list(SPECIAL_PIECES),
            "chars": "".join(self.chars),
            "n_merges": len(self.merges),
        }
        with open(path, "w", encoding="utf-8") as f:
            f.write(json.dumps(header, ensure_ascii=True) + "\n")
            for left, right in self.merges:
                f.write(json.dumps([left, right], ensure_ascii=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SubwordVocab":
        with open(path, encoding="utf-8") as f:
            header = json.loads(f.readline())
            if header.get("format") != _FORMAT:
                raise ValueError(f"{path}: not a {_FORMAT} file")
            if header.get("version") != _VERSION:
                raise ValueError(f"{path}: unsupported vocab version {header.get('version')}")
            merges = []
            for _ in range(header["n_merges"]):
                left, right = json.loads(f.readline())
                merges.append((left, right))
        vocab = cls(list(header["chars"]), merges, header["target_size"])
        if len(vocab) != header["size"]:
            raise ValueError(f"{path}: size mismatch after reload ({len(vocab)} vs {header['size']})")
        return vocab


def _split_groups(syms: list) -> Iterable[list]:
    group: list = []
    for s in syms:
        if s == BOUNDARY and group:
            yield group
            group = [s]
        else:
            group.append(s)
    if group:
        yield group


def _word_pairs(word: tuple):
    for a, b in zip(word, word[1:]):
        if isinstance(a, str) and isinstance(b, str):
            yield a, b


def _merge_word(word: tuple, pair: tuple[str, str], merged: str) -> tuple:
    out = []
    i = 0
    while i < len(word):
        if i + 1 < len(word) and word[i] == pair[0] and word[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(word[i])
            i += 1
    return tuple(out)


def train_vocab(corpus: Iterable[str], target_size: int = 4000, min_pair_freq: int = 2) -> SubwordVocab:
    """Learn a BPE vocabulary of roughly ``target_size`` pieces.

    Merge selection is by pair frequency, ties broken lexicographically, so
    retraining on the same corpus reproduces the same merge list.
    """
    lines = [line.rstrip("\n") for line in corpus]
    lines = [line for line in lines if line]
    if not lines:
        raise ValueError("cannot train a vocabulary on an empty corpus")

    chars = set()
    for line in lines:
        for part in line.split(INFILL_MARKER):
            chars.update(part)
    chars.discard(" ")
    chars.discard(BOUNDARY)

    seed = SubwordVocab(sorted(chars), [], target_size)
    if target_size <= seed.base_size:
        raise ValueError(
            f"target_size {target_size} must exceed the {seed.base_size} base symbols"
        )
    n_merges = target_size - seed.base_size

    words: dict[tuple, int] = defaultdict(int)
    for line in lines:
        for group in _split_groups(seed._symbolize(line)):
            words[tuple(group)] += 1
    words = dict(words)

    pair_counts: Counter = Counter()
    pair_words: dict[tuple, set] = defaultdict(set)
    for w, f in words.items():
        for p in _word_pairs(w):
            pair_counts[p] += f
            pair_words[p].add(w)

    heap = [(-c, p) for p, c in pair_counts.items()]
    heapq.heapify(heap)
    merges: list[tuple[str, str]] = []

    while len(merges) < n_merges and heap:
        neg, pair = heapq.heappop(heap)
        count = -neg
        if pair_counts.get(pair, 0) != count:
            continue  # stale heap entry
        if count < min_pair_freq:
            break
        merges.append(pair)
        merged_sym = pair[0] + pair[1]
        for w in list(pair_words.pop(pair, ())):
            f = words.pop(w, None)
            if f is None:
                continue  # word already rewritten by an earlier merge
            new_w = _merge_word(w, pair, merged_sym)
            words[new_w] = words.get(new_w, 0) + f
            for p in _word_pairs(w):
                pair_counts[p] -= f
                heapq.heappush(heap, (-pair_counts[p], p))
            for p in _word_pairs(new_w):
                pair_counts[p] += f
                pair_words[p].add(new_w)
                heapq.heappush(heap, (-pair_counts[p], p))

    return SubwordVocab(sorted(chars), merges, target_size)


def filter_by_length(
    pairs: Sequence[SentencePair], vocab: SubwordVocab, max_pieces: int = 150
) -> list[SentencePair]:
    """Keep the pairs whose source AND target encode to at most
    ``max_pieces`` subwords (boundary inclusive: exactly 150 is kept)."""
    kept = []
    for p in pairs:
        if len(vocab.encode(p.source_text)) <= max_pieces and len(vocab.encode(p.target_text)) <= max_pieces:
            kept.append(p)
    return kept
