"""Experiment configuration: a TOML tree mapped onto the library's config types.

Every key has a default, unknown keys are rejected, and ``to_dict`` returns
the fully resolved tree that goes into the run manifest.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import tomli

from .data import PROMPT_FAMILIES
from .dgp import DgpParams
from .encoder import DEFAULT_D_EMB
from .learners import METHODS, HeadConfig, LearnerConfig
from .nuisance import MlpHyper, NuisanceConfig
from .pseudo import KINDS as PSEUDO_KINDS
from .remote import RemoteConfig
from .surrogate import SurrogateConfig


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


SWEEP_KNOBS = ("eta", "kappa", "leak", "prompt_family")


@dataclass(frozen=True)
class Cell:
    """One point of the sweep grid."""

    eta: float
    kappa: float
    leak: float
    prompt_family: str

    def label(self) -> str:
        return f"eta={self.eta:g} kappa={self.kappa:g} leak={self.leak:g} family={self.prompt_family}"


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DgpParams = DgpParams()
    n_test: int = 2000
    surrogate: SurrogateConfig = SurrogateConfig()
    d_emb: int = DEFAULT_D_EMB
    remote_encoder: bool = False
    nuisance: NuisanceConfig = NuisanceConfig()
    head: HeadConfig = HeadConfig()
    pseudo: str = "DR"
    methods: tuple[str, ...] = METHODS
    sweep: Mapping[str, tuple] = field(default_factory=dict)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "results"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("methods must not be empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; expected a subset of {list(METHODS)}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.n_test < 1:
            raise ConfigError("n_test must be positive")
        if self.dgp.n < 1:
            raise ConfigError("dgp.n must be positive")
        if self.pseudo not in PSEUDO_KINDS:
            raise ConfigError(f"pseudo must be one of {list(PSEUDO_KINDS)}")
        grid = {}
        for knob in SWEEP_KNOBS:
            vals = tuple(self.sweep.get(knob, (self._base(knob),)))
            if not vals:
                raise ConfigError(f"sweep.{knob} must not be empty")
            grid[knob] = vals
        for fam in grid["prompt_family"]:
            if fam not in PROMPT_FAMILIES:
                raise ConfigError(f"unknown prompt family {fam!r} in sweep")
        for knob in ("eta", "kappa"):
            if any(v < 0 for v in grid[knob]):
                raise ConfigError(f"sweep.{knob} values must be >= 0")
        if any(not 0 < v <= 1 for v in grid["leak"]):
            raise ConfigError("sweep.leak values must lie in (0, 1]")
        object.__setattr__(self, "sweep", grid)

    def _base(self, knob: str):
        return {
            "eta": self.dgp.eta,
            "kappa": self.dgp.kappa,
            "leak": self.surrogate.leak_probability,
            "prompt_family": self.surrogate.prompt_family,
        }[knob]

    def cells(self) -> list[Cell]:
        grid = [self.sweep[k] for k in SWEEP_KNOBS]
        return [Cell(float(e), float(k), float(l), str(f)) for e, k, l, f in itertools.product(*grid)]

    def learner(self, cell: Cell, seed: int) -> LearnerConfig:
        surrogate = SurrogateConfig(cell.prompt_family, cell.leak, self.surrogate.paraphrase_seed,
                                    self.surrogate.remote)
        nuisance = NuisanceConfig(**{**_shallow(self.nuisance), "seed": seed})
        return LearnerConfig(nuisance, surrogate, self.head, self.d_emb, self.pseudo, seed)

    def dgp_for(self, cell: Cell, seed: int) -> DgpParams:
        return self.dgp.replace(eta=cell.eta, kappa=cell.kappa, seed=seed)

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return _replace(self, seeds=tuple(int(s) for s in seeds))

    def uses_remote(self) -> bool:
        return self.remote_encoder or self.surrogate.remote is not None

    def to_dict(self) -> dict:
        """Resolved tree with every default filled in (the manifest copy)."""
        dgp = self.dgp.to_dict()
        n = dgp.pop("n")
        dgp.pop("seed")
        remote = self.surrogate.remote
        return {
            "output_dir": self.output_dir,
            "seeds": list(self.seeds),
            "methods": list(self.methods),
            "pseudo": self.pseudo,
            "dgp": {**dgp, "n": n, "n_test": self.n_test},
            "surrogate": {
                "prompt_family": self.surrogate.prompt_family,
                "leak_probability": self.surrogate.leak_probability,
                "paraphrase_seed": self.surrogate.paraphrase_seed,
                "remote": None if remote is None else asdict(remote),
            },
            "encoder": {"d_emb": self.d_emb, "remote": self.remote_encoder},
            "nuisance": {
                "outcome_model": self.nuisance.outcome_model,
                "lambda": self.nuisance.ridge_lambda,
                "k_folds": self.nuisance.k_folds,
                "clip": self.nuisance.clip,
                "logistic_max_iter": self.nuisance.logistic_max_iter,
                "logistic_tol": self.nuisance.logistic_tol,
                "mlp": _mlp_dict(self.nuisance.mlp),
            },
            "head": {
                "kind": self.head.kind,
                "lambda": self.head.lam,
                "standardize": self.head.standardize,
                "mlp": _mlp_dict(self.head.mlp),
            },
            "sweep": {k: list(v) for k, v in self.sweep.items()},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _shallow(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _replace(obj, **changes):
    return type(obj)(**{**_shallow(obj), **changes})


def _mlp_dict(h: MlpHyper) -> dict:
    d = asdict(h)
    d["hidden"] = list(d["hidden"])
    return d


# -- parsing ----------------------------------------------------------------

_TOP_KEYS = {"output_dir", "seeds", "methods", "pseudo", "dgp", "surrogate", "encoder",
             "nuisance", "head", "sweep"}
_DGP_KEYS = {f.name for f in fields(DgpParams)} - {"seed"} | {"n_test"}
_SURROGATE_KEYS = {"prompt_family", "leak_probability", "paraphrase_seed", "remote"}
_REMOTE_KEYS = {f.name for f in fields(RemoteConfig)}
_ENCODER_KEYS = {"d_emb", "remote"}
_NUISANCE_KEYS = {"outcome_model", "lambda", "k_folds", "clip", "logistic_max_iter", "logistic_tol", "mlp"}
_HEAD_KEYS = {"kind", "lambda", "standardize", "mlp"}
_MLP_KEYS = {f.name for f in fields(MlpHyper)}


def _section(tree: Mapping, name: str, allowed: set[str]) -> dict:
    sec = tree.get(name, {})
    if not isinstance(sec, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    return dict(sec)


def _mlp(sec: Mapping, where: str) -> MlpHyper:
    d = _section({"mlp": sec}, "mlp", _MLP_KEYS)
    if "hidden" in d:
        d["hidden"] = tuple(int(h) for h in d["hidden"])
    try:
        return MlpHyper(**d)
    except TypeError as exc:
        raise ConfigError(f"[{where}.mlp]: {exc}") from None


def config_from_dict(tree: Mapping[str, Any]) -> ExperimentConfig:
    unknown = sorted(set(tree) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    try:
        dgp = _section(tree, "dgp", _DGP_KEYS)
        n_test = int(dgp.pop("n_test", 2000))
        for name in ("beta", "delta", "xi"):
            if name in dgp:
                dgp[name] = tuple(dgp[name])
        dgp_params = DgpParams(**dgp)

        s = _section(tree, "surrogate", _SURROGATE_KEYS)
        remote = s.pop("remote", None)
        if remote is not None and remote is not False:
            remote = RemoteConfig(**_section({"remote": remote}, "remote", _REMOTE_KEYS)) \
                if isinstance(remote, Mapping) else RemoteConfig()
        else:
            remote = None
        surrogate = SurrogateConfig(remote=remote, **s)

        enc = _section(tree, "encoder", _ENCODER_KEYS)

        nu = _section(tree, "nuisance", _NUISANCE_KEYS)
        nuisance = NuisanceConfig(
            outcome_model=nu.get("outcome_model", "ridge"),
            ridge_lambda=float(nu.get("lambda", 1e-2)),
            k_folds=int(nu.get("k_folds", 2)),
            clip=float(nu.get("clip", 0.01)),
            logistic_max_iter=int(nu.get("logistic_max_iter", 100)),
            logistic_tol=float(nu.get("logistic_tol", 1e-10)),
            mlp=_mlp(nu.get("mlp", {}), "nuisance"),
        )
        hd = _section(tree, "head", _HEAD_KEYS)
        head = HeadConfig(
            kind=hd.get("kind", "ridge"),
            lam=float(hd.get("lambda", 1e-2)),
            standardize=bool(hd.get("standardize", True)),
            mlp=_mlp(hd.get("mlp", {}), "head"),
        )
        sweep = _section(tree, "sweep", set(SWEEP_KNOBS))
        sweep = {k: tuple(v) if isinstance(v, (list, tuple)) else (v,) for k, v in sweep.items()}
        return ExperimentConfig(
            dgp=dgp_params,
            n_test=n_test,
            surrogate=surrogate,
            d_emb=int(enc.get("d_emb", DEFAULT_D_EMB)),
            remote_encoder=bool(enc.get("remote", False)),
            nuisance=nuisance,
            head=head,
            pseudo=str(tree.get("pseudo", "DR")),
            methods=tuple(tree.get("methods", METHODS)),
            sweep=sweep,
            seeds=tuple(int(s) for s in tree.get("seeds", (0, 1, 2, 3, 4))),
            output_dir=str(tree.get("output_dir", "results")),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Parse a TOML file; ``None`` gives the default benchmark configuration."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as fh:
            tree = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(tree)
