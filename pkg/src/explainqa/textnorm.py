"""Project-wide word normalization.

Every statistic, filter, and tokenizer in this package shares one definition
of a "word": lowercase, split on Unicode whitespace, strip leading/trailing
ASCII punctuation. Tokens that are empty after stripping are dropped.
"""

from __future__ import annotations

import string

_PUNCT = string.punctuation


def normalize_words(text: str) -> list[str]:
    """Split text into normalized word tokens."""
    out = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            out.append(tok)
    return out


def contains_subsequence(haystack: list[str], needle: list[str]) -> bool:
    """True if needle occurs as a contiguous run inside haystack."""
    if not needle:
        return False
    n, m = len(haystack), len(needle)
    for i in range(n - m + 1):
        if haystack[i : i + m] == needle:
            return True
    return False
