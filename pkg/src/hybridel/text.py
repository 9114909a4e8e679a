"""Shared text primitives: surface normalization and word tokenization."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

# Unicode letters and digits; underscore counts as a boundary.
_WORD_RE = re.compile(r"[^\W_]+")


@dataclass(frozen=True)
class NormalizationConfig:
    case_fold: bool = True
    collapse_whitespace: bool = True
    strip_outer_punct: bool = False


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def normalize_surface(s: str, config: NormalizationConfig = NormalizationConfig()) -> str:
    """Canonical alias-table key for a surface form.

    Applied in order: case folding, collapsing internal whitespace runs to one
    space, trimming, and (optionally) stripping punctuation off both ends.
    """
    if config.case_fold:
        s = s.casefold()
    if config.collapse_whitespace:
        s = " ".join(s.split())
    s = s.strip()
    if config.strip_outer_punct:
        # trim whitespace exposed by the strip too, or the result is not idempotent
        lo, hi = 0, len(s)
        while lo < hi and (_is_punct(s[lo]) or s[lo].isspace()):
            lo += 1
        while hi > lo and (_is_punct(s[hi - 1]) or s[hi - 1].isspace()):
            hi -= 1
        s = s[lo:hi]
    return s


def word_tokens(text: str) -> list[str]:
    """Lowercased maximal runs of Unicode letters/digits."""
    return _WORD_RE.findall(text.lower())
