"""CATE learners that predict from text.

``tca_fit`` runs three stages: nuisance fitting and pseudo-outcomes on the
covariates, surrogate text generation and embedding, then a regression of
the pseudo-outcomes on the embeddings. The TBE baselines regress outcomes on
the embeddings directly (S: one model with the arm as a feature; T: one
model per arm) and therefore inherit any confounding the text leaves out.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, TrainRecord, validate_dataset
from .encoder import DEFAULT_D_EMB, EmptyTextWarning, HashingEncoder
from .nuisance import (
    MlpHyper, NuisanceBundle, NuisanceConfig, NuisancePredictions, RidgeModel,
    check_version, fit_bundle, fit_mlp, fit_ridge, model_from_dict, MODEL_FORMAT_VERSION,
)
from .pseudo import pseudo_outcomes
from .remote import RemoteEncoder, fetch_many
from .surrogate import SurrogateConfig, render_batch

log = logging.getLogger(__name__)

METHODS = ("TCA", "TBE-S", "TBE-T")


class StageError(RuntimeError):
    """A TCA stage failed; the message names the stage."""


@dataclass(frozen=True)
class HeadConfig:
    kind: str = "ridge"
    lam: float = 1e-2
    standardize: bool = True
    mlp: MlpHyper = MlpHyper()

    def __post_init__(self):
        if self.kind not in ("ridge", "mlp"):
            raise ValueError(f"unknown head kind {self.kind!r}")


@dataclass(frozen=True)
class LearnerConfig:
    nuisance: NuisanceConfig = NuisanceConfig()
    surrogate: SurrogateConfig = SurrogateConfig()
    head: HeadConfig = HeadConfig()
    d_emb: int = DEFAULT_D_EMB
    pseudo: str = "DR"
    seed: int = 0


def make_encoder(cfg: LearnerConfig, remote: bool = False):
    return RemoteEncoder(cfg.d_emb) if remote else HashingEncoder(cfg.d_emb)


def encoder_from_dict(d: dict):
    if d.get("kind") == "remote":
        return RemoteEncoder(int(d["d_emb"]))
    return HashingEncoder(int(d["d_emb"]))


def attach_surrogates(ds: Dataset, cfg: SurrogateConfig, seed: int) -> Dataset:
    """Give every training record a surrogate text if it does not have one."""
    if all(r.surrogate is not None for r in ds.records):
        return ds
    if cfg.remote is not None:
        surs = fetch_many(ds.X, cfg)
    else:
        surs = render_batch(ds.X, cfg, seed)
    return ds.with_surrogates(surs)


def _fit_head(Z, target, head: HeadConfig):
    if head.kind == "mlp":
        hyper = MlpHyper(**{**head.mlp.__dict__, "l2": head.lam})
        return fit_mlp(Z, target, hyper)
    return fit_ridge(Z, target, head.lam, head.standardize)


def _texts_of(ds: Dataset) -> list[str]:
    texts = ds.texts
    missing = [i for i, t in enumerate(texts) if t is None]
    if missing:
        raise ValueError(f"records without text, first at index {missing[0]}")
    return texts


@dataclass
class TcaModel:
    bundle: NuisanceBundle | None
    encoder: HashingEncoder | RemoteEncoder
    head: object
    lam: float
    pseudo_kind: str = "DR"
    train_pseudo: np.ndarray | None = field(default=None, repr=False)

    def predict(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """CATE predictions and a flag for texts that were empty."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyTextWarning)
            Z, empty = self.encoder.encode_many(texts)
        if empty.any():
            log.warning("%d empty text(s); predicting from the zero embedding", int(empty.sum()))
        return self.head.predict(Z), empty

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "method": "TCA",
            "encoder": self.encoder.to_dict(),
            "lambda": self.lam,
            "pseudo": self.pseudo_kind,
            "head": self.head.to_dict(),
            "nuisance": None if self.bundle is None else self.bundle.to_dict(),
        }


def tca_fit(
    ds: Dataset,
    cfg: LearnerConfig = LearnerConfig(),
    nuisance: NuisancePredictions | None = None,
    encoder=None,
) -> TcaModel:
    """Fit the three-stage text-conditioned DR learner on a training dataset.

    ``nuisance`` injects known nuisance predictions (oracle mode) and skips
    stage 1 fitting.
    """
    if not ds.is_train:
        raise ValueError("TCA needs training records with covariates")
    problems = validate_dataset(ds)
    if problems:
        raise ValueError(f"invalid training dataset: {problems[:3]}")
    bundle = None
    try:
        if nuisance is None:
            bundle = fit_bundle(ds, cfg.nuisance)
            nuisance = bundle.in_sample(ds.X)
        clip = cfg.nuisance.clip if bundle is not None else None
        pseudo = np.asarray(pseudo_outcomes(cfg.pseudo, ds.y, ds.a, nuisance, clip).value)
    except Exception as exc:
        raise StageError(f"stage 1 (nuisance and pseudo-outcomes): {exc}") from exc
    try:
        ds = attach_surrogates(ds, cfg.surrogate, cfg.seed)
        encoder = encoder or make_encoder(cfg)
        Z, _ = encoder.encode_many(_texts_of(ds))
    except Exception as exc:
        raise StageError(f"stage 2 (surrogates and embeddings): {exc}") from exc
    try:
        head = _fit_head(Z, pseudo, cfg.head)
    except Exception as exc:
        raise StageError(f"stage 3 (text-conditioned regression): {exc}") from exc
    return TcaModel(bundle, encoder, head, cfg.head.lam, cfg.pseudo, np.atleast_1d(pseudo))


def tca_predict(m: TcaModel, t: str) -> float:
    preds, _ = m.predict([t])
    return float(preds[0])


@dataclass
class TbeModel:
    variant: str
    encoder: HashingEncoder | RemoteEncoder
    models: list  # S: [pooled]; T: [arm0, arm1]
    lam: float

    def __post_init__(self):
        if self.variant not in ("S", "T"):
            raise ValueError("variant must be 'S' or 'T'")
        if len(self.models) != (1 if self.variant == "S" else 2):
            raise ValueError("S uses one model, T uses two")

    @property
    def method(self) -> str:
        return f"TBE-{self.variant}"

    def predict(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmptyTextWarning)
            Z, empty = self.encoder.encode_many(texts)
        if self.variant == "T":
            return self.models[1].predict(Z) - self.models[0].predict(Z), empty
        n = Z.shape[0]
        on = self.models[0].predict(np.hstack([Z, np.ones((n, 1))]))
        off = self.models[0].predict(np.hstack([Z, np.zeros((n, 1))]))
        return on - off, empty

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "method": self.method,
            "encoder": self.encoder.to_dict(),
            "lambda": self.lam,
            "models": [m.to_dict() for m in self.models],
        }


def tbe_fit(ds: Dataset, variant: str, cfg: LearnerConfig = LearnerConfig(), encoder=None) -> TbeModel:
    """Naive text-based estimator: outcome regressions on the text embedding."""
    if variant not in ("S", "T"):
        raise ValueError("variant must be 'S' or 'T'")
    a, y = ds.a, ds.y
    if not (np.any(a == 0) and np.any(a == 1)):
        raise ValueError("both treatment arms must be present")
    encoder = encoder or make_encoder(cfg)
    Z, _ = encoder.encode_many(_texts_of(ds))
    if variant == "T":
        models = [_fit_head(Z[a == arm], y[a == arm], cfg.head) for arm in (0, 1)]
    else:
        models = [_fit_head(np.hstack([Z, a[:, None].astype(np.float64)]), y, cfg.head)]
    return TbeModel(variant, encoder, models, cfg.head.lam)


def tbe_predict(m: TbeModel, t: str) -> float:
    preds, _ = m.predict([t])
    return float(preds[0])


def fit_method(method: str, ds: Dataset, cfg: LearnerConfig, encoder=None):
    if method == "TCA":
        return tca_fit(ds, cfg, encoder=encoder)
    if method in ("TBE-S", "TBE-T"):
        if ds.is_train:
            ds = attach_surrogates(ds, cfg.surrogate, cfg.seed)
        return tbe_fit(ds, method[-1], cfg, encoder=encoder)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


# -- model files ------------------------------------------------------------

def save_model(model: TcaModel | TbeModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def model_from_json(d: dict) -> TcaModel | TbeModel:
    check_version(d)
    encoder = encoder_from_dict(d["encoder"])
    method = d.get("method")
    if method == "TCA":
        bundle = None if d.get("nuisance") is None else NuisanceBundle.from_dict(d["nuisance"])
        return TcaModel(bundle, encoder, model_from_dict(d["head"]), float(d["lambda"]),
                        d.get("pseudo", "DR"))
    if method in ("TBE-S", "TBE-T"):
        return TbeModel(method[-1], encoder, [model_from_dict(m) for m in d["models"]],
                        float(d["lambda"]))
    raise ValueError(f"unknown method {method!r} in model file")


def load_model(path: str | Path) -> TcaModel | TbeModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))
