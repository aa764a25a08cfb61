"""Regenerate the encoder golden file without importing the package.

The hash is re-implemented here with wrapping uint64 arithmetic so the
fixture does not depend on the library code it checks.
"""
import json
import re
import sys
from pathlib import Path

import numpy as np

OFFSET = np.uint64(14695981039346656037)
PRIME = np.uint64(1099511628211)


def fnv(s: str) -> int:
    h = OFFSET
    with np.errstate(over="ignore"):
        for b in s.encode("utf-8"):
            h = np.uint64(h ^ np.uint64(b)) * PRIME
    return int(h)


def embed(text: str, d: int) -> list[float]:
    toks = re.findall(r"[a-z0-9]+", text.lower())
    feats = toks + [a + " " + b for a, b in zip(toks, toks[1:])]
    v = [0.0] * d
    for f in feats:
        h = fnv(f)
        v[h % d] += -1.0 if h >= 2**63 else 1.0
    return [x / len(toks) for x in v]


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).with_name("encoder_golden.json"))
    cases = [
        {"text": "heart racing", "d_emb": 8},
        {"text": "My heart is racing, and I feel dizzy.", "d_emb": 16},
        {"text": "Heart rate 97 bpm. Serum sodium 131 mmol", "d_emb": 32},
    ]
    for c in cases:
        c["vector"] = embed(c["text"], c["d_emb"])
    out.write_text(json.dumps(cases) + "\n")
    print(out.read_text())
