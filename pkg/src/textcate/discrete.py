"""Finite worlds over (X, T, A, Y) whose joint table can be enumerated exactly.

The text T is generated from X alone, so T is independent of (A, Y) given X.
Potential outcomes are coupled independently given X, which makes
E[Y(1) - Y(0) | T = t] computable without going through the observed joint.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, TextSurrogate, TrainRecord

MAX_LEVELS = 16
MAX_CELLS = 4096
STOCHASTIC_TOL = 1e-12

# One word per text level; rendered as "report <word>".
TEXT_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    "india", "juliet", "kilo", "lima", "mike", "november", "oscar", "papa",
)


class UndefinedConditionalError(ZeroDivisionError):
    """A conditional expectation was requested on a zero-probability event."""


def _rows_ok(name: str, table: np.ndarray) -> None:
    if np.any(table < 0) or not np.all(np.isfinite(table)):
        raise ValueError(f"{name} has negative or non-finite entries")
    sums = table.sum(axis=-1)
    bad = np.abs(sums - 1.0) > STOCHASTIC_TOL
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"{name} row {where} sums to {sums[where]!r}, not 1")


@dataclass(frozen=True)
class DiscreteWorld:
    """A world spec plus its enumerated joint table.

    px[x], pt_x[x, t], pa_x[x] = P(A=1 | X=x), py_xa[x, a, k] = P(Y=y_values[k] | x, a).
    ``joint[x, t, a, k]`` is the full probability table.
    """

    px: np.ndarray
    pt_x: np.ndarray
    pa_x: np.ndarray
    py_xa: np.ndarray
    y_values: np.ndarray
    joint: np.ndarray

    @property
    def n_x(self) -> int:
        return self.px.shape[0]

    @property
    def n_t(self) -> int:
        return self.pt_x.shape[1]

    def mu(self, a: int) -> np.ndarray:
        """mu_a(x) = E[Y | X=x, A=a] from the outcome table."""
        return self.py_xa[:, a, :] @ self.y_values

    def tau_x(self) -> np.ndarray:
        return self.mu(1) - self.mu(0)

    def p_t(self) -> np.ndarray:
        return self.joint.sum(axis=(0, 2, 3))


def discrete_world(px, pt_x, pa_x, py_xa, y_values=(0.0, 1.0)) -> DiscreteWorld:
    """Validate a spec and enumerate P(X, T, A, Y)."""
    px = np.asarray(px, dtype=np.float64)
    pt_x = np.asarray(pt_x, dtype=np.float64)
    pa_x = np.asarray(pa_x, dtype=np.float64)
    py_xa = np.asarray(py_xa, dtype=np.float64)
    y_values = np.asarray(y_values, dtype=np.float64)
    nx = px.shape[0]
    if px.ndim != 1 or not 1 <= nx <= MAX_LEVELS:
        raise ValueError(f"px must be a vector with 1..{MAX_LEVELS} entries")
    if pt_x.ndim != 2 or pt_x.shape[0] != nx or not 1 <= pt_x.shape[1] <= MAX_LEVELS:
        raise ValueError(f"pt_x must have shape ({nx}, n_t) with n_t <= {MAX_LEVELS}")
    if pa_x.shape != (nx,):
        raise ValueError(f"pa_x must have shape ({nx},)")
    if py_xa.shape != (nx, 2, y_values.shape[0]):
        raise ValueError(f"py_xa must have shape ({nx}, 2, {y_values.shape[0]})")
    if not np.all(np.isfinite(y_values)):
        raise ValueError("y_values must be finite")
    cells = nx * pt_x.shape[1] * 2 * y_values.shape[0]
    if cells > MAX_CELLS:
        raise ValueError(f"{cells} joint cells exceed the limit of {MAX_CELLS}")
    if np.any((pa_x < 0) | (pa_x > 1)):
        raise ValueError("pa_x entries must lie in [0, 1]")
    _rows_ok("px", px)
    _rows_ok("pt_x", pt_x)
    _rows_ok("py_xa", py_xa)
    pa = np.stack([1.0 - pa_x, pa_x], axis=1)  # [x, a]
    joint = px[:, None, None, None] * pt_x[:, :, None, None] * pa[:, None, :, None] * py_xa[:, None, :, :]
    return DiscreteWorld(px, pt_x, pa_x, py_xa, y_values, joint)


def random_world(rng: np.random.Generator, n_x: int, n_t: int, n_y: int = 3) -> DiscreteWorld:
    """World with every cell strictly positive (Dirichlet rows, propensities in [0.05, 0.95])."""
    px = rng.dirichlet(np.ones(n_x))
    pt_x = rng.dirichlet(np.ones(n_t), size=n_x)
    pa_x = rng.uniform(0.05, 0.95, size=n_x)
    py_xa = rng.dirichlet(np.ones(n_y), size=(n_x, 2))
    y_values = np.sort(rng.normal(size=n_y))
    return discrete_world(px, pt_x, pa_x, py_xa, y_values)


def copy_channel(px, pa_x, py_xa, y_values=(0.0, 1.0)) -> DiscreteWorld:
    """World in which the text is the covariate itself (T = X)."""
    n = len(px)
    return discrete_world(px, np.eye(n), pa_x, py_xa, y_values)


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mutual_information(w: DiscreteWorld) -> float:
    """I(X; T) in nats."""
    pxt = w.px[:, None] * w.pt_x
    return entropy(w.px) + entropy(pxt.sum(axis=0)) - entropy(pxt)


def cond_mean(w: DiscreteWorld, f_x: np.ndarray, t: int, a: int | None = None) -> float:
    """E[f(X) | T=t] or E[f(X) | A=a, T=t] by summing joint cells."""
    p = w.joint[:, t, :, :].sum(axis=2)  # [x, a]
    p = p.sum(axis=1) if a is None else p[:, a]
    mass = p.sum()
    if mass <= 0:
        event = f"T={t}" if a is None else f"A={a}, T={t}"
        raise UndefinedConditionalError(f"P({event}) = 0")
    return float((p * f_x).sum() / mass)


def observed_mu(w: DiscreteWorld, a: int) -> np.ndarray:
    """E[Y | X=x, A=a] recovered from the joint table rather than the spec."""
    p = w.joint[:, :, a, :].sum(axis=1)  # [x, y]
    mass = p.sum(axis=1)
    if np.any(mass <= 0):
        raise UndefinedConditionalError(f"P(X=x, A={a}) = 0 for some x")
    return (p @ w.y_values) / mass


def naive_tau(w: DiscreteWorld, t: int) -> float:
    """E[Y | A=1, T=t] - E[Y | A=0, T=t]."""
    out = []
    for a in (1, 0):
        p = w.joint[:, t, a, :].sum(axis=0)  # [y]
        mass = p.sum()
        if mass <= 0:
            raise UndefinedConditionalError(f"P(A={a}, T={t}) = 0")
        out.append(float(p @ w.y_values / mass))
    return out[0] - out[1]


def potential_outcome_tau(w: DiscreteWorld, t: int) -> float:
    """E[Y(1) - Y(0) | T=t] over the joint of (X, T, Y(0), Y(1))."""
    y = w.y_values
    diff = y[None, :] - y[:, None]  # [y0, y1] -> y1 - y0
    total = mass = 0.0
    for x in range(w.n_x):
        pxt = w.px[x] * w.pt_x[x, t]
        coupling = np.outer(w.py_xa[x, 0], w.py_xa[x, 1])
        total += pxt * float((coupling * diff).sum())
        mass += pxt
    if mass <= 0:
        raise UndefinedConditionalError(f"P(T={t}) = 0")
    return total / mass


def sample(w: DiscreteWorld, n: int, rng: np.random.Generator) -> Dataset:
    """Draw n training records: one-hot x, a token text naming t, and y."""
    flat = w.joint.ravel()
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    xs, ts, as_, ks = np.unravel_index(idx, w.joint.shape)
    eye = np.eye(w.n_x)
    tau = w.tau_x()
    recs = [
        TrainRecord(eye[x], int(a), float(w.y_values[k]), TextSurrogate(text_for(t)), float(tau[x]))
        for x, t, a, k in zip(xs, ts, as_, ks)
    ]
    return Dataset(tuple(recs), w.n_x, {"source": "discrete_world"})


def text_for(t: int) -> str:
    return f"report {TEXT_WORDS[t]}"
