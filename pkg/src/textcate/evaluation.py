"""Metrics and exact oracle checks.

PEHE is the root mean squared error between predicted and true CATE. The
bias decomposition and identification checks run by enumeration on finite
worlds; the double-robustness checks compare pseudo-outcome bin means with
the true CATE on DGP data.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit, logit

from .dgp import DgpParams, generate, mean_outcome, propensity
from .discrete import (
    DiscreteWorld, cond_mean, naive_tau, observed_mu, potential_outcome_tau, random_world,
)
from .nuisance import NuisancePredictions
from .pseudo import dr_pseudo
from .rng import stream

log = logging.getLogger(__name__)

IDENTITY_TOL = 1e-12
SUBGROUP_KEYS = ("sex", "age")
SUBGROUP_COLUMNS = ("pehe_GM", "pehe_GF", "pehe_GY", "pehe_GO")


class IdentityViolation(AssertionError):
    """Two enumerated quantities that must agree did not."""


def pehe(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} truths")
    if pred.size == 0:
        raise ValueError("pehe needs at least one record")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


# -- enumeration oracles ----------------------------------------------------

@dataclass(frozen=True)
class BiasRow:
    t: int
    naive_tau: float
    true_tau_t: float
    bias_observed: float
    bias_formula_term1: float
    bias_formula_term0: float

    @property
    def bias_formula(self) -> float:
        return self.bias_formula_term1 - self.bias_formula_term0

    @property
    def gap(self) -> float:
        return abs(self.bias_observed - self.bias_formula)


@dataclass(frozen=True)
class BiasReport:
    rows: tuple[BiasRow, ...]

    @property
    def max_gap(self) -> float:
        return max((r.gap for r in self.rows), default=0.0)


def lemma2_oracle(w: DiscreteWorld, t: int, tol: float = IDENTITY_TOL) -> float:
    """E[tau_x(X) | T=t], checked against E[Y(1) - Y(0) | T=t]."""
    tau_x = observed_mu(w, 1) - observed_mu(w, 0)
    identified = cond_mean(w, tau_x, t)
    direct = potential_outcome_tau(w, t)
    if abs(identified - direct) > tol:
        raise IdentityViolation(f"t={t}: E[tau_x|T] = {identified!r} but E[Y(1)-Y(0)|T] = {direct!r}")
    return identified


def lemma1_bias(w: DiscreteWorld, t: int, tol: float = IDENTITY_TOL) -> BiasRow:
    """Naive text contrast minus the text CATE, against its two-term decomposition."""
    mu1, mu0 = observed_mu(w, 1), observed_mu(w, 0)
    naive = naive_tau(w, t)
    truth = lemma2_oracle(w, t, tol)
    term1 = cond_mean(w, mu1, t, a=1) - cond_mean(w, mu1, t)
    term0 = cond_mean(w, mu0, t, a=0) - cond_mean(w, mu0, t)
    row = BiasRow(t, naive, truth, naive - truth, term1, term0)
    if row.gap > tol:
        raise IdentityViolation(f"t={t}: observed bias {row.bias_observed!r} vs formula {row.bias_formula!r}")
    return row


def bias_report(w: DiscreteWorld, tol: float = IDENTITY_TOL) -> BiasReport:
    return BiasReport(tuple(lemma1_bias(w, t, tol) for t in range(w.n_t)))


# -- double robustness ------------------------------------------------------

@dataclass(frozen=True)
class BinCheck:
    """Per-bin comparison of pseudo-outcome means with true CATE means."""

    z: np.ndarray
    counts: np.ndarray
    threshold: float

    @property
    def failed(self) -> np.ndarray:
        return np.abs(self.z) > self.threshold

    @property
    def fail_fraction(self) -> float:
        return float(self.failed.mean())

    @property
    def passed(self) -> bool:
        return not self.failed.any()


def bin_check(pseudo, tau, coord, n_bins: int = 20, threshold: float = 3.0) -> BinCheck:
    """z-score of mean(pseudo - tau) within quantile bins of ``coord``."""
    d = np.asarray(pseudo, dtype=np.float64) - np.asarray(tau, dtype=np.float64)
    coord = np.asarray(coord, dtype=np.float64)
    edges = np.quantile(coord, np.linspace(0, 1, n_bins + 1)[1:-1])
    bins = np.searchsorted(edges, coord, side="right")
    z = np.empty(n_bins)
    counts = np.bincount(bins, minlength=n_bins)
    for b in range(n_bins):
        db = d[bins == b]
        se = db.std(ddof=1) / math.sqrt(db.size)
        z[b] = db.mean() / se
    return BinCheck(z, counts, threshold)


def shift_propensity(pi, shift: float, clip: float = 0.01) -> np.ndarray:
    return np.clip(expit(logit(np.asarray(pi, dtype=np.float64)) + shift), clip, 1 - clip)


def outcome_offset(X) -> np.ndarray:
    return 0.5 * np.sign(np.asarray(X)[:, 0])


def dr_oracle_check(
    corrupt: str,
    n: int = 50_000,
    seed: int = 0,
    p: DgpParams | None = None,
    n_bins: int = 20,
    clip: float = 0.01,
) -> BinCheck:
    """Bin-mean check of DR pseudo-outcomes with one or both nuisances corrupted.

    ``corrupt`` is "propensity" (true outcome models, propensity logit
    shifted by 1), "outcome" (true propensity, outcome models offset by
    0.5 sign(x0)) or "both". Bins are quantiles of x0, the coordinate the
    outcome offset depends on.
    """
    if corrupt not in ("propensity", "outcome", "both"):
        raise ValueError(f"unknown corruption {corrupt!r}")
    p = (p or DgpParams()).replace(n=n, seed=seed)
    ds = generate(p)
    X = ds.X
    pi = np.clip(propensity(X, p), clip, 1 - clip)
    mu0, mu1 = mean_outcome(X, 0, p), mean_outcome(X, 1, p)
    if corrupt in ("propensity", "both"):
        pi = shift_propensity(pi, 1.0, clip)
    if corrupt in ("outcome", "both"):
        off = outcome_offset(X)
        mu0, mu1 = mu0 + off, mu1 + off
    nuis = NuisancePredictions(mu0, mu1, pi)
    po = dr_pseudo(ds.y, ds.a, nuis.mu1, nuis.mu0, nuis.pi, clip)
    return bin_check(po.value, ds.tau, X[:, 0], n_bins)


# -- results ----------------------------------------------------------------

def subgroup_table(pred, truth, groups: Sequence[Mapping[str, str] | None], tag_key: str) -> dict[str, float]:
    """PEHE per value of ``groups[i][tag_key]``; records without the tag are skipped."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if not (len(pred) == len(truth) == len(groups)):
        raise ValueError("pred, truth and groups must have equal lengths")
    labels = [None if g is None else g.get(tag_key) for g in groups]
    present = sorted({lab for lab in labels if lab is not None})
    if not present:
        log.warning("no record carries group key %r; subgroup table is empty", tag_key)
        return {}
    lab_arr = np.array(["" if lab is None else lab for lab in labels], dtype=object)
    return {lab: pehe(pred[lab_arr == lab], truth[lab_arr == lab]) for lab in present}


@dataclass
class ExperimentResult:
    method: str
    seed: int
    knobs: Mapping[str, object]
    pehe: float
    n_test: int
    subgroup_pehe: Mapping[str, float] = field(default_factory=dict)
    bias_diag: BiasReport | None = None

    def __post_init__(self):
        if not self.pehe >= 0:
            raise ValueError("pehe must be non-negative")

    def row(self) -> dict:
        """Flat row in the results-table column order."""
        out = {
            "method": self.method,
            "seed": self.seed,
            "eta": self.knobs.get("eta"),
            "kappa": self.knobs.get("kappa"),
            "leak": self.knobs.get("leak"),
            "prompt_family": self.knobs.get("prompt_family"),
            "lambda": self.knobs.get("lambda"),
            "pehe": self.pehe,
        }
        for col in SUBGROUP_COLUMNS:
            out[col] = self.subgroup_pehe.get(col[-1])
        return out


def score(method: str, seed: int, knobs: Mapping[str, object], pred, truth, groups) -> ExperimentResult:
    sub: dict[str, float] = {}
    for key in SUBGROUP_KEYS:
        sub.update(subgroup_table(pred, truth, groups, key))
    return ExperimentResult(method, seed, dict(knobs), pehe(pred, truth), len(truth), sub)


# -- oracle suite -----------------------------------------------------------

@dataclass(frozen=True)
class OracleCheck:
    name: str
    passed: bool
    detail: str


def world_sweep(n_worlds: int = 100, seed: int = 0) -> list[DiscreteWorld]:
    """Random worlds with |X|, |T| in 2..4 and strictly positive cells."""
    rng = stream(seed, "worlds")
    return [random_world(rng, int(rng.integers(2, 5)), int(rng.integers(2, 5))) for _ in range(n_worlds)]


def oracle_suite(seed: int = 0, n_dr: int = 50_000) -> list[OracleCheck]:
    """Enumeration identities and double-robustness checks, one line each."""
    checks = []
    worlds = world_sweep(100, seed)

    def sweep(fn) -> tuple[bool, float]:
        worst = max(float(fn(w, t)) for w in worlds for t in range(w.n_t))
        return bool(worst <= IDENTITY_TOL), worst

    ok, gap = sweep(lambda w, t: lemma1_bias(w, t, tol=np.inf).gap)
    checks.append(OracleCheck("bias decomposition, 100 worlds", ok, f"max gap {gap:.2e}"))
    ok, gap = sweep(lambda w, t: abs(lemma2_oracle(w, t, tol=np.inf) - potential_outcome_tau(w, t)))
    checks.append(OracleCheck("text CATE identification, 100 worlds", ok, f"max gap {gap:.2e}"))

    for name, corrupt, want_pass in (
        ("DR, true outcome models", "propensity", True),
        ("DR, true propensity", "outcome", True),
    ):
        r = dr_oracle_check(corrupt, n=n_dr, seed=seed)
        checks.append(OracleCheck(name, r.passed == want_pass,
                                  f"max |z| {np.abs(r.z).max():.2f} over {r.z.size} bins"))
    r = dr_oracle_check("both", n=n_dr, seed=seed)
    checks.append(OracleCheck("DR, both corrupted (power)", r.fail_fraction >= 0.25,
                              f"{r.fail_fraction:.0%} of bins beyond 3 SE"))
    return checks
