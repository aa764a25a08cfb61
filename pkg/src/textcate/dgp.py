"""Synthetic data-generating process with confounder-strength knobs.

    Pr(A=1 | X) = sigmoid(kappa * xi'X)
    Y = sigmoid(beta'X + g1*A + g2*A**2 + g3*sin(A)) + eta * (delta'X) * A + eps

with X ~ N(0, I) and eps ~ N(0, noise_sd**2). ``kappa = 0`` is the randomized
design; ``eta`` scales only the interaction term.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .data import Dataset, TrainRecord
from .rng import stream

# Seed for the frozen default coefficient draw. Picked so that the effect
# direction (delta) and the assignment direction (xi) overlap; with orthogonal
# directions the interaction term would not be confounded at all.
DEFAULT_COEF_SEED = 11


def sigmoid(z):
    """Logistic function 1 / (1 + exp(-z)), overflow-safe."""
    return special.expit(z)


def unit_vector(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def default_coefficients(d_x: int, coef_seed: int = DEFAULT_COEF_SEED) -> dict[str, list[float]]:
    rng = stream(coef_seed, "coefficients", d_x)
    return {name: unit_vector(rng, d_x).tolist() for name in ("beta", "delta", "xi")}


@dataclass(frozen=True)
class DgpParams:
    d_x: int = 8
    beta: tuple[float, ...] = ()
    delta: tuple[float, ...] = ()
    xi: tuple[float, ...] = ()
    gamma1: float = 1.0
    gamma2: float = 0.5
    gamma3: float = 0.5
    eta: float = 1.0
    kappa: float = 1.0
    noise_sd: float = 0.1
    n: int = 10_000
    seed: int = 0
    coef_seed: int = DEFAULT_COEF_SEED

    def __post_init__(self):
        if self.d_x < 1:
            raise ValueError("d_x must be positive")
        coefs = None
        for name in ("beta", "delta", "xi"):
            vec = getattr(self, name)
            if len(vec) == 0:
                if coefs is None:
                    coefs = default_coefficients(self.d_x, self.coef_seed)
                vec = coefs[name]
            vec = tuple(float(v) for v in vec)
            if len(vec) != self.d_x:
                raise ValueError(f"{name} has length {len(vec)}, expected d_x={self.d_x}")
            object.__setattr__(self, name, vec)
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.eta < 0 or self.kappa < 0:
            raise ValueError("eta and kappa must be >= 0")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    def replace(self, **changes) -> "DgpParams":
        d = asdict(self)
        d.update(changes)
        if "d_x" in changes or "coef_seed" in changes:
            for name in ("beta", "delta", "xi"):
                if name not in changes:
                    d[name] = ()
        return DgpParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("beta", "delta", "xi"):
            d[name] = list(d[name])
        return d

    @property
    def treatment_shift(self) -> float:
        """Constant added inside the sigmoid when a=1."""
        return self.gamma1 + self.gamma2 + self.gamma3 * math.sin(1.0)


def propensity(x, p: DgpParams) -> np.ndarray:
    """True Pr(A=1 | X=x)."""
    x = np.asarray(x, dtype=np.float64)
    return sigmoid(p.kappa * (x @ np.asarray(p.xi)))


def mean_outcome(x, a, p: DgpParams) -> np.ndarray:
    """True E[Y | X=x, A=a], the noiseless part of the outcome model."""
    x = np.asarray(x, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    lin = x @ np.asarray(p.beta)
    inner = lin + p.gamma1 * a + p.gamma2 * a**2 + p.gamma3 * np.sin(a)
    return sigmoid(inner) + p.eta * (x @ np.asarray(p.delta)) * a


def sample_treatment(x, p: DgpParams, rng: np.random.Generator) -> np.ndarray:
    prop = propensity(x, p)
    return (rng.random(np.shape(prop)) < prop).astype(np.int64)


def sample_outcome(x, a, p: DgpParams, rng: np.random.Generator) -> np.ndarray:
    mu = mean_outcome(x, a, p)
    if p.noise_sd == 0:
        return mu + 0.0
    return mu + p.noise_sd * rng.standard_normal(np.shape(mu))


def true_cate(x, p: DgpParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    lin = x @ np.asarray(p.beta)
    return sigmoid(lin + p.treatment_shift) - sigmoid(lin) + p.eta * (x @ np.asarray(p.delta))


def group_tags(x) -> dict[str, str]:
    """Evaluation-only subgroup labels: sex band from x[0], age band from x[1]."""
    tags = {"sex": "F" if x[0] >= 0 else "M"}
    if len(x) > 1:
        tags["age"] = "O" if x[1] >= 0 else "Y"
    return tags


def generate(p: DgpParams) -> Dataset:
    """Draw ``p.n`` training records; a pure function of ``p``."""
    if p.n < 1:
        raise ValueError("n must be >= 1")
    X = stream(p.seed, "covariates").standard_normal((p.n, p.d_x))
    A = sample_treatment(X, p, stream(p.seed, "treatment"))
    Y = sample_outcome(X, A, p, stream(p.seed, "noise"))
    tau = true_cate(X, p)
    X.flags.writeable = False
    records = tuple(
        TrainRecord(X[i], int(A[i]), float(Y[i]), None, float(tau[i]), group_tags(X[i]))
        for i in range(p.n)
    )
    return Dataset(records, p.d_x, {"dgp": p.to_dict()})


# -- truth at the text level ------------------------------------------------

def _truncnorm_ppf(u: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    # Reflect intervals in the upper tail so the CDF differences stay accurate.
    flip = lo > 0
    lo2 = np.where(flip, -hi, lo)
    hi2 = np.where(flip, -lo, hi)
    plo, phi = special.ndtr(lo2), special.ndtr(hi2)
    z = special.ndtri(plo + u * (phi - plo))
    z = np.clip(z, lo2, hi2)
    return np.where(flip, -z, z)


def truncnorm_mean(lo, hi) -> np.ndarray:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    with np.errstate(invalid="ignore"):  # scipy also evaluates unused higher moments
        return stats.truncnorm.mean(lo, hi)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(40)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def conditional_cate(intervals, p: DgpParams, n_draws: int = 256, seed: int = 0) -> np.ndarray:
    """E[tau(X) | X_j in interval_j for revealed j], one value per row.

    ``intervals`` is a list (records) of per-coordinate ``(lo, hi)`` or
    ``None`` for coordinates the text does not reveal. The interaction term is
    exact (truncated-normal means); the sigmoid contrast integrates the hidden
    coordinates with Gauss-Hermite and the revealed ones with ``n_draws``
    inverse-CDF draws.
    """
    n = len(intervals)
    d = p.d_x
    lo = np.full((n, d), -np.inf)
    hi = np.full((n, d), np.inf)
    seen = np.zeros((n, d), dtype=bool)
    for i, row in enumerate(intervals):
        if len(row) != d:
            raise ValueError(f"row {i}: expected {d} intervals")
        for j, iv in enumerate(row):
            if iv is not None:
                lo[i, j], hi[i, j] = iv
                seen[i, j] = True
    beta = np.asarray(p.beta)
    delta = np.asarray(p.delta)

    means = np.zeros((n, d))
    if seen.any():
        means[seen] = truncnorm_mean(lo[seen], hi[seen])
    linear = p.eta * (means @ delta)

    rng = stream(seed, "truth", n, d)
    u = rng.random((n_draws, n, d))
    draws = _truncnorm_ppf(u, lo[None], hi[None])
    draws = np.where(seen[None], draws, 0.0)
    s_seen = draws @ beta                                  # (n_draws, n)
    s_hidden = np.sqrt(((~seen) * beta**2).sum(axis=1))    # (n,)
    sig_part = np.empty(n)
    for start in range(0, n, 128):
        sl = slice(start, start + 128)
        s = s_seen[:, sl, None] + s_hidden[None, sl, None] * _GH_NODES
        contrast = sigmoid(s + p.treatment_shift) - sigmoid(s)
        sig_part[sl] = (contrast @ _GH_WEIGHTS).mean(axis=0)
    return sig_part + linear
