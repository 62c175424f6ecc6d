"""Small input-validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence


def check_probability(name: str, value: float, *, allow_one: bool = True) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be a number, got {value!r}") from None
    hi_ok = v <= 1.0 if allow_one else v < 1.0
    if not (0.0 <= v and hi_ok):
        top = "1" if allow_one else "1 exclusive"
        raise ValueError(f"{name} must be in [0, {top}], got {v}")
    return v


def check_positive_int(name: str, value, *, minimum: int = 1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_text_list(name: str, values) -> list[str]:
    if isinstance(values, str):
        raise ValueError(f"{name} must be a sequence of strings, not a single string")
    out = list(values)
    if not out:
        raise ValueError(f"{name} must not be empty")
    for i, v in enumerate(out):
        if not isinstance(v, str):
            raise ValueError(f"{name}[{i}] is not a string: {v!r}")
    return out


def ensure_file(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return p
