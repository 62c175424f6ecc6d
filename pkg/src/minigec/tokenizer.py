"""Deterministic rule tokenizer: whitespace split plus punctuation detachment.

The whole toolkit runs on one canonical text form: tokens joined by single
spaces. ``tokenize`` is intentionally simple and frozen so that alignments,
error rates and edit scores are reproducible byte-for-byte.
"""

from __future__ import annotations

# Characters detached from word edges. Word-internal occurrences are kept
# ("don't", "e-mail", "3.14").
_PUNCT = set(".,;:!?\"()[]{}'`…«»“”‘’—–-")


def tokenize(text: str) -> list[str]:
    """Split ``text`` into tokens: whitespace split, then peel punctuation
    off both ends of each chunk, one character at a time."""
    tokens: list[str] = []
    for chunk in text.split():
        left: list[str] = []
        right: list[str] = []
        while len(chunk) > 1 and chunk[0] in _PUNCT:
            left.append(chunk[0])
            chunk = chunk[1:]
        while len(chunk) > 1 and chunk[-1] in _PUNCT:
            right.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(left)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(right))
    return tokens


def join(tokens: list[str] | tuple[str, ...]) -> str:
    """Canonical text form of a token sequence."""
    return " ".join(tokens)
