"""Signed feature hashing of unigrams and bigrams with mean pooling."""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_TOKEN_RE = re.compile(r"[a-z0-9]+")
# Wide enough that integer readings and filler sentences rarely collide.
DEFAULT_D_EMB = 1024


class EmptyTextWarning(UserWarning):
    """Text had no tokens; it was encoded as the zero vector."""


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def ngrams(tokens: Sequence[str]) -> list[str]:
    """Unigrams followed by space-joined bigrams."""
    return list(tokens) + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


@lru_cache(maxsize=1 << 16)
def bucket(feature: str, d_emb: int) -> tuple[int, float]:
    """Slot index (low bits mod d_emb) and sign (top bit) of a feature."""
    h = fnv1a64(feature.encode("utf-8"))
    return h % d_emb, (-1.0 if h >> 63 else 1.0)


def encode(text: str, d_emb: int = DEFAULT_D_EMB) -> np.ndarray:
    """Mean-pooled signed hash embedding of ``text``.

    Counts are divided by the number of unigram tokens, so each entry lies
    in [-2, 2].
    """
    vec, empty = _encode(text, d_emb)
    if empty:
        warnings.warn("text is empty after tokenization", EmptyTextWarning, stacklevel=2)
    return vec


def _encode(text: str, d_emb: int) -> tuple[np.ndarray, bool]:
    if d_emb < 1:
        raise ValueError("d_emb must be positive")
    vec = np.zeros(d_emb)
    tokens = tokenize(text or "")
    if not tokens:
        return vec, True
    for feat in ngrams(tokens):
        idx, sign = bucket(feat, d_emb)
        vec[idx] += sign
    return vec / len(tokens), False


@dataclass(frozen=True)
class HashingEncoder:
    d_emb: int = DEFAULT_D_EMB

    def encode_many(self, texts: Iterable[str | None]) -> tuple[np.ndarray, np.ndarray]:
        """Embedding matrix and a boolean mask of texts that were empty."""
        rows, empty = [], []
        for t in texts:
            v, e = _encode(t or "", self.d_emb)
            rows.append(v)
            empty.append(e)
        if not rows:
            return np.zeros((0, self.d_emb)), np.zeros(0, dtype=bool)
        empty_arr = np.array(empty, dtype=bool)
        if empty_arr.any():
            warnings.warn(
                f"{int(empty_arr.sum())} text(s) empty after tokenization",
                EmptyTextWarning, stacklevel=2,
            )
        return np.vstack(rows), empty_arr

    def to_dict(self) -> dict:
        return {"kind": "hashing", "d_emb": self.d_emb}
