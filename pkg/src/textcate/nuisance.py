"""Nuisance models: outcome regressions per arm and the propensity score.

Outcome regressions are closed-form ridge by default (an MLP is available);
the propensity is a logistic regression fitted by IRLS with clipped
predictions. ``fit_bundle`` cross-fits all three over ``k_folds`` folds.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, special

from .data import Dataset
from .dgp import mean_outcome, propensity
from .rng import stream

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class SingularFitError(ValueError):
    pass


class FitDivergedError(RuntimeError):
    pass


class SeparationWarning(UserWarning):
    pass


# -- ridge ------------------------------------------------------------------

@dataclass
class RidgeModel:
    weights: np.ndarray
    bias: float
    lam: float

    def predict(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.weights + self.bias

    def to_dict(self) -> dict:
        return {"kind": "ridge", "weights": self.weights.tolist(), "bias": self.bias,
                "lambda": self.lam}

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["bias"]), float(d["lambda"]))


def fit_ridge(xs, ys, lam: float = 1e-2, standardize: bool = False) -> RidgeModel:
    """Minimize sum (y - w'x - b)^2 + lam * |w|^2 with the bias unpenalized.

    With ``standardize`` the penalty applies to weights on unit-variance
    columns; the returned weights are mapped back to the raw columns.
    """
    X = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit on zero rows")
    if lam == 0 and n < d + 1:
        raise SingularFitError(f"{n} rows cannot identify {d} weights and a bias; use lambda > 0")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    scale = np.ones(d)
    if standardize:
        scale = Xc.std(axis=0)
        scale[scale == 0] = 1.0
        Xc = Xc / scale
    gram = Xc.T @ Xc
    if lam > 0:
        gram[np.diag_indices(d)] += lam
    elif np.linalg.cond(gram) > 1e12:
        raise SingularFitError("normal equations are singular (collinear features); use lambda > 0")
    try:
        factor = linalg.cho_factor(gram)
    except linalg.LinAlgError:
        raise SingularFitError("normal equations are not positive definite; use lambda > 0") from None
    w = linalg.cho_solve(factor, Xc.T @ (y - y_mean)) / scale
    return RidgeModel(w, float(y_mean - x_mean @ w), float(lam))


# -- logistic ---------------------------------------------------------------

@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    clip: float = 0.01
    l2: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.clip < 0.5:
            raise ValueError("clip must lie in (0, 0.5)")

    def predict(self, X) -> np.ndarray:
        z = np.asarray(X, dtype=np.float64) @ self.weights + self.bias
        return np.clip(special.expit(z), self.clip, 1.0 - self.clip)

    def to_dict(self) -> dict:
        return {"kind": "logistic", "weights": self.weights.tolist(), "bias": self.bias,
                "clip": self.clip, "l2": self.l2}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), float(d["bias"]),
                   float(d["clip"]), float(d.get("l2", 0.0)))


_SEPARATION_NORM = 30.0


def _irls(X1: np.ndarray, a: np.ndarray, l2: float, max_iter: int, tol: float):
    d1 = X1.shape[1]
    theta = np.zeros(d1)
    penalty = np.full(d1, l2)
    penalty[-1] = 0.0  # bias unpenalized
    for it in range(max_iter):
        p = special.expit(X1 @ theta)
        w = p * (1.0 - p)
        grad = X1.T @ (a - p) - penalty * theta
        hess = (X1 * w[:, None]).T @ X1 + np.diag(penalty)
        try:
            step = linalg.solve(hess, grad, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            return theta, False, it
        theta = theta + step
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > _SEPARATION_NORM:
            return theta, False, it
        if np.max(np.abs(step)) < tol:
            return theta, True, it + 1
    return theta, True, max_iter


def fit_logistic(xs, as_, max_iter: int = 100, tol: float = 1e-10, clip: float = 0.01,
                 l2: float = 0.0) -> LogisticModel:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    If the iterates diverge (perfect or quasi-perfect separation) a warning is
    issued and the fit is redone with an L2 penalty of 1.0.
    """
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    a = np.asarray(as_, dtype=np.float64)
    if not (np.any(a == 1) and np.any(a == 0)):
        raise ValueError("both treatment arms must be present")
    X1 = np.hstack([X, np.ones((X.shape[0], 1))])
    theta, ok, _ = _irls(X1, a, l2, max_iter, tol)
    if not ok:
        warnings.warn("logistic fit diverged (separation); refitting with L2 penalty 1.0",
                      SeparationWarning, stacklevel=2)
        l2 = max(l2, 1.0)
        theta, ok, _ = _irls(X1, a, l2, max_iter, tol)
        if not ok:
            raise FitDivergedError("logistic fit diverged even with L2 stabilization")
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), clip, l2)


# -- MLP --------------------------------------------------------------------

@dataclass(frozen=True)
class MlpHyper:
    hidden: tuple[int, ...] = (64, 64, 64)
    dropout: float = 0.3
    lr: float = 5e-5
    epochs: int = 100
    batch_size: int = 512
    l2: float = 0.0
    grad_clip: float = 1.0
    seed: int = 0


@dataclass
class MlpRegressor:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_mean: np.ndarray
    x_scale: np.ndarray
    hyper: MlpHyper
    final_loss: float = float("nan")

    def predict(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.x_mean) / self.x_scale
        out, _ = _forward(self.weights, self.biases, Z, None)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "hyper": {**asdict(self.hyper), "hidden": list(self.hyper.hidden)},
            "final_loss": self.final_loss,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpRegressor":
        h = dict(d["hyper"])
        h["hidden"] = tuple(h["hidden"])
        return cls(
            [np.asarray(w, dtype=np.float64) for w in d["weights"]],
            [np.asarray(b, dtype=np.float64) for b in d["biases"]],
            np.asarray(d["x_mean"], dtype=np.float64),
            np.asarray(d["x_scale"], dtype=np.float64),
            MlpHyper(**h),
            float(d.get("final_loss", float("nan"))),
        )


def _forward(weights, biases, X, masks):
    """Return outputs and the cache needed for backprop.

    ``masks`` holds one inverted-dropout mask per hidden layer, or None.
    """
    acts = [X]
    pre = []
    h = X
    for k, (W, b) in enumerate(zip(weights[:-1], biases[:-1])):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[k]
        acts.append(h)
    out = h @ weights[-1] + biases[-1]
    return out[:, 0], (acts, pre)


def loss_and_grad(weights, biases, X, y, masks=None, l2: float = 0.0):
    """Mean squared error (plus ``l2`` times the squared weight norm) and its gradients."""
    n = X.shape[0]
    out, (acts, pre) = _forward(weights, biases, X, masks)
    resid = out - y
    loss = float(np.mean(resid**2)) + l2 * sum(float(np.sum(W**2)) for W in weights)
    g = (2.0 / n) * resid[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(biases)
    for k in range(len(weights) - 1, -1, -1):
        gW[k] = acts[k].T @ g + 2.0 * l2 * weights[k]
        gb[k] = g.sum(axis=0)
        if k > 0:
            g = g @ weights[k].T
            if masks is not None:
                g = g * masks[k - 1]
            g = g * (pre[k - 1] > 0)
    return loss, gW, gb


def _init_params(d_in: int, hidden, rng):
    sizes = [d_in, *hidden, 1]
    weights, biases = [], []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        std = np.sqrt(2.0 / a) if k < len(sizes) - 2 else 0.01
        weights.append(rng.standard_normal((a, b)) * std)
        biases.append(np.zeros(b))
    return weights, biases


def _train(Z, y, hyper: MlpHyper, lr: float):
    rng = stream(hyper.seed, "mlp")
    weights, biases = _init_params(Z.shape[1], hyper.hidden, rng)
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    n = Z.shape[0]
    keep = 1.0 - hyper.dropout
    step = 0
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            xb, yb = Z[idx], y[idx]
            masks = None
            if hyper.dropout > 0:
                masks = [(rng.random((len(idx), h)) < keep) / keep for h in hyper.hidden]
            loss, gW, gb = loss_and_grad(weights, biases, xb, yb, masks, hyper.l2 / max(n, 1))
            if not np.isfinite(loss):
                return None
            grads = gW + gb
            norm = np.sqrt(sum(float(np.sum(g**2)) for g in grads))
            if hyper.grad_clip and norm > hyper.grad_clip:
                grads = [g * (hyper.grad_clip / norm) for g in grads]
            step += 1
            for i, (p, g) in enumerate(zip(params, grads)):
                m[i] = b1 * m[i] + (1 - b1) * g
                v[i] = b2 * v[i] + (1 - b2) * g**2
                mhat = m[i] / (1 - b1**step)
                vhat = v[i] / (1 - b2**step)
                p -= lr * mhat / (np.sqrt(vhat) + eps)
    return weights, biases


def fit_mlp(xs, ys, hyper: MlpHyper = MlpHyper()) -> MlpRegressor:
    """Mini-batch Adam on mean squared error; deterministic given ``hyper.seed``.

    A non-finite loss halves the step size and restarts, at most twice.
    """
    X = np.asarray(xs, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(ys, dtype=np.float64)
    if X.shape[0] < hyper.batch_size:
        raise ValueError(f"need at least batch_size={hyper.batch_size} rows, got {X.shape[0]}")
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    Z = (X - x_mean) / x_scale
    lr = hyper.lr
    for _ in range(3):
        trained = _train(Z, y, hyper, lr)
        if trained is not None:
            weights, biases = trained
            out, _ = _forward(weights, biases, Z, None)
            final = float(np.mean((out - y) ** 2))
            if np.isfinite(final):
                return MlpRegressor(weights, biases, x_mean, x_scale, hyper, final)
        lr /= 2
        log.warning("non-finite MLP loss; restarting with step size %g", lr)
    raise FitDivergedError("MLP training diverged after two step-size halvings")


# -- bundle -----------------------------------------------------------------

@dataclass(frozen=True)
class NuisanceConfig:
    outcome_model: str = "ridge"
    ridge_lambda: float = 1e-2
    k_folds: int = 2
    clip: float = 0.01
    logistic_max_iter: int = 100
    logistic_tol: float = 1e-10
    mlp: MlpHyper = MlpHyper()
    seed: int = 0

    def __post_init__(self):
        if self.outcome_model not in ("ridge", "mlp"):
            raise ValueError(f"unknown outcome model {self.outcome_model!r}")
        if self.k_folds < 1:
            raise ValueError("k_folds must be >= 1")


@dataclass
class NuisancePredictions:
    mu0: np.ndarray
    mu1: np.ndarray
    pi: np.ndarray


@dataclass
class NuisanceBundle:
    mu0: list
    mu1: list
    pi: list[LogisticModel]
    fold_map: np.ndarray
    k_folds: int
    train_index: list[np.ndarray] = field(default_factory=list)

    def in_sample(self, X) -> NuisancePredictions:
        """Out-of-fold predictions for the training rows the bundle was fitted on."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] != len(self.fold_map):
            raise ValueError("X must be the training design the bundle was fitted on")
        mu0 = np.empty(X.shape[0])
        mu1 = np.empty(X.shape[0])
        pi = np.empty(X.shape[0])
        for k in range(self.k_folds):
            rows = self.fold_map == k
            mu0[rows] = self.mu0[k].predict(X[rows])
            mu1[rows] = self.mu1[k].predict(X[rows])
            pi[rows] = self.pi[k].predict(X[rows])
        return NuisancePredictions(mu0, mu1, pi)

    def predict(self, X) -> NuisancePredictions:
        """Fold-averaged predictions for new covariates."""
        X = np.asarray(X, dtype=np.float64)
        return NuisancePredictions(
            np.mean([m.predict(X) for m in self.mu0], axis=0),
            np.mean([m.predict(X) for m in self.mu1], axis=0),
            np.mean([m.predict(X) for m in self.pi], axis=0),
        )

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "k_folds": self.k_folds,
            "fold_map": self.fold_map.tolist(),
            "mu0": [m.to_dict() for m in self.mu0],
            "mu1": [m.to_dict() for m in self.mu1],
            "pi": [m.to_dict() for m in self.pi],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NuisanceBundle":
        check_version(d)
        fold_map = np.asarray(d["fold_map"], dtype=np.int64)
        return cls(
            [model_from_dict(m) for m in d["mu0"]],
            [model_from_dict(m) for m in d["mu1"]],
            [LogisticModel.from_dict(m) for m in d["pi"]],
            fold_map,
            int(d["k_folds"]),
            [np.flatnonzero(fold_map != k) for k in range(int(d["k_folds"]))],
        )


def check_version(d: dict) -> None:
    if "version" not in d:
        raise ValueError("model file has no version field")
    if d["version"] != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d['version']}")


def model_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "ridge":
        return RidgeModel.from_dict(d)
    if kind == "mlp":
        return MlpRegressor.from_dict(d)
    if kind == "logistic":
        return LogisticModel.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")


def assign_folds(a: np.ndarray, k: int, seed: int, stratify: bool = False) -> np.ndarray:
    n = len(a)
    rng = stream(seed, "folds", int(stratify))
    fold_map = np.empty(n, dtype=np.int64)
    if not stratify:
        fold_map[rng.permutation(n)] = np.arange(n) % k
        return fold_map
    for arm in (0, 1):
        rows = np.flatnonzero(a == arm)
        fold_map[rows[rng.permutation(len(rows))]] = np.arange(len(rows)) % k
    return fold_map


def _fit_outcome(X, y, cfg: NuisanceConfig):
    if cfg.outcome_model == "mlp":
        return fit_mlp(X, y, cfg.mlp)
    return fit_ridge(X, y, cfg.ridge_lambda)


def _arms_ok(a: np.ndarray, fold_map: np.ndarray, k: int) -> bool:
    for f in range(k):
        train = a[fold_map != f] if k > 1 else a
        if not (np.any(train == 0) and np.any(train == 1)):
            return False
    return True


def fit_bundle(ds: Dataset, cfg: NuisanceConfig = NuisanceConfig()) -> NuisanceBundle:
    """Fit mu0 on control rows, mu1 on treated rows and pi on all rows, per fold."""
    X, a, y = ds.X, ds.a, ds.y
    k = cfg.k_folds
    if k == 1:
        fold_map = np.zeros(len(a), dtype=np.int64)
    else:
        fold_map = assign_folds(a, k, cfg.seed)
        if not _arms_ok(a, fold_map, k):
            log.info("an arm is empty in some fold; refolding stratified by arm")
            fold_map = assign_folds(a, k, cfg.seed, stratify=True)
    if not _arms_ok(a, fold_map, k):
        raise ValueError("both treatment arms are required in every training fold")
    mu0, mu1, pi, train_index = [], [], [], []
    for f in range(k):
        train = np.flatnonzero(fold_map != f) if k > 1 else np.arange(len(a))
        Xt, at, yt = X[train], a[train], y[train]
        mu0.append(_fit_outcome(Xt[at == 0], yt[at == 0], cfg))
        mu1.append(_fit_outcome(Xt[at == 1], yt[at == 1], cfg))
        pi.append(fit_logistic(Xt, at, cfg.logistic_max_iter, cfg.logistic_tol, cfg.clip))
        train_index.append(train)
    return NuisanceBundle(mu0, mu1, pi, fold_map, k, train_index)


def oracle_predictions(X, p, clip: float = 0.01) -> NuisancePredictions:
    """Nuisances evaluated at the data-generating truth of ``p`` (a DgpParams)."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    return NuisancePredictions(
        mean_outcome(X, np.zeros(n), p),
        mean_outcome(X, np.ones(n), p),
        np.clip(propensity(X, p), clip, 1.0 - clip),
    )
