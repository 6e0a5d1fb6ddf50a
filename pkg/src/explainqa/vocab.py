"""Word-level vocabulary with reserved special tokens.

Reserved ids 0..5 are PAD, UNK, BOS, EOS, CLS, SEP in that order. Text is
split with the shared project normalization, so the language model and all
statistics operate on the same tokens.
"""

from __future__ import annotations

from collections import Counter
from pathlib import Path

from .textnorm import normalize_words

PAD, UNK, BOS, EOS, CLS, SEP = range(6)
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", "[SEP]")


class Vocabulary:
    """Bijective token <-> id table, immutable after construction."""

    def __init__(self, tokens: list[str]):
        if list(tokens[: len(SPECIAL_TOKENS)]) != list(SPECIAL_TOKENS):
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self._tokens = tuple(tokens)
        self._ids = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    @property
    def size(self) -> int:
        return len(self._tokens)

    def token(self, idx: int) -> str:
        if not (0 <= idx < len(self._tokens)):
            raise IndexError(f"token id {idx} out of range (size {len(self._tokens)})")
        return self._tokens[idx]

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def encode(self, text: str) -> list[int]:
        """Normalized word tokens to ids; out-of-vocabulary words become UNK."""
        return [self._ids.get(tok, UNK) for tok in normalize_words(text)]

    def decode(self, ids: list[int]) -> str:
        """Ids back to space-joined tokens; special tokens render bracketed."""
        return " ".join(self.token(i) for i in ids)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for tok in self._tokens:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        return cls(tokens)


def build_vocab(
    corpus: list[str], min_freq: int = 1, max_size: int | None = None
) -> Vocabulary:
    """Frequency-ranked vocabulary over normalized words.

    Keeps every token with frequency >= min_freq, truncated to max_size total
    entries by descending frequency then lexicographic order; the reserved
    tokens are always present and never displaced.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter()
    for text in corpus:
        counts.update(normalize_words(text))
    ranked = sorted(
        (tok for tok, c in counts.items() if c >= min_freq),
        key=lambda tok: (-counts[tok], tok),
    )
    if max_size is not None:
        budget = max(0, max_size - len(SPECIAL_TOKENS))
        ranked = ranked[:budget]
    return Vocabulary(list(SPECIAL_TOKENS) + ranked)
