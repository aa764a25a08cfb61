"""Per-record pseudo-outcomes whose conditional mean given X is the CATE.

    DR = mu1 - mu0 + a/pi * (y - mu1) - (1-a)/(1-pi) * (y - mu0)
    RA = a * (y - mu0) + (1-a) * (mu1 - y)
    PW = (a/pi - (1-a)/(1-pi)) * y

All functions accept scalars or equal-length arrays.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("DR", "RA", "PW")


class PseudoOutcomeError(ValueError):
    pass


@dataclass(frozen=True)
class PseudoOutcome:
    value: np.ndarray | float
    kind: str
    components: dict

    def reassembled(self):
        """Rebuild the value from its components (DR only)."""
        c = self.components
        return c["mu1_hat"] - c["mu0_hat"] + c["residual_term_1"] - c["residual_term_0"]


def _as_float(name, v):
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise PseudoOutcomeError(f"non-finite value in {name}")
    return arr


def _as_arm(a):
    arr = _as_float("a", a)
    if not np.all((arr == 0) | (arr == 1)):
        raise PseudoOutcomeError("a must be 0 or 1")
    return arr


def _check_pi(pi, clip):
    lo = clip if clip is not None else 0.0
    if np.any(pi < lo) or np.any(pi > 1 - lo) or np.any(pi <= 0) or np.any(pi >= 1):
        raise PseudoOutcomeError(f"pi_hat outside [{lo}, {1 - lo}] (clip the propensity first)")


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def dr_pseudo(y, a, mu1_hat, mu0_hat, pi_hat, clip: float | None = None) -> PseudoOutcome:
    y = _as_float("y", y)
    a = _as_arm(a)
    mu1 = _as_float("mu1_hat", mu1_hat)
    mu0 = _as_float("mu0_hat", mu0_hat)
    pi = _as_float("pi_hat", pi_hat)
    _check_pi(pi, clip)
    r1 = a / pi * (y - mu1)
    r0 = (1 - a) / (1 - pi) * (y - mu0)
    value = mu1 - mu0 + r1 - r0
    comps = {"mu1_hat": _out(mu1), "mu0_hat": _out(mu0), "pi_hat": _out(pi),
             "residual_term_1": _out(r1), "residual_term_0": _out(r0)}
    return PseudoOutcome(_out(value), "DR", comps)


def ra_pseudo(y, a, mu1_hat, mu0_hat) -> PseudoOutcome:
    y = _as_float("y", y)
    a = _as_arm(a)
    mu1 = _as_float("mu1_hat", mu1_hat)
    mu0 = _as_float("mu0_hat", mu0_hat)
    value = a * (y - mu0) + (1 - a) * (mu1 - y)
    return PseudoOutcome(_out(value), "RA", {"mu1_hat": _out(mu1), "mu0_hat": _out(mu0)})


def pw_pseudo(y, a, pi_hat, clip: float | None = None) -> PseudoOutcome:
    y = _as_float("y", y)
    a = _as_arm(a)
    pi = _as_float("pi_hat", pi_hat)
    _check_pi(pi, clip)
    value = (a / pi - (1 - a) / (1 - pi)) * y
    return PseudoOutcome(_out(value), "PW", {"pi_hat": _out(pi)})


def pseudo_outcomes(kind: str, y, a, nuis, clip: float | None = None) -> PseudoOutcome:
    """Dispatch on ``kind`` using a NuisancePredictions-like object."""
    if kind == "DR":
        return dr_pseudo(y, a, nuis.mu1, nuis.mu0, nuis.pi, clip)
    if kind == "RA":
        return ra_pseudo(y, a, nuis.mu1, nuis.mu0)
    if kind == "PW":
        return pw_pseudo(y, a, nuis.pi, clip)
    raise ValueError(f"unknown pseudo-outcome kind {kind!r}")


def write_pseudo_jsonl(po: PseudoOutcome, path: str | Path) -> None:
    """One diagnostic line per record: value, kind and its components."""
    values = np.atleast_1d(po.value)
    comps = {k: np.atleast_1d(v) for k, v in po.components.items()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, v in enumerate(values):
            row = {"kind": po.kind, "value": float(v)}
            row.update({k: float(c[i]) for k, c in comps.items()})
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
