"""Seeded random streams.

Every consumer of randomness asks for a stream by purpose name, so adding a
draw in one place never shifts the draws seen by another. Streams are Philox
(counter-based) generators keyed by ``(seed, purpose, *extra)``.
"""
from __future__ import annotations

import zlib

import numpy as np

PURPOSES = (
    "coefficients",
    "covariates",
    "treatment",
    "noise",
    "surrogate",
    "paraphrase",
    "folds",
    "mlp",
    "truth",
    "split",
    "worlds",
)


def _purpose_id(purpose: str) -> int:
    # crc32 keeps ids stable across interpreter runs (str hash is salted)
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Return the Philox generator for ``purpose`` under ``seed``.

    ``extra`` integers derive sub-streams, e.g. one per record or per fold.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    key = (_purpose_id(purpose),) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
